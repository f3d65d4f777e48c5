import numpy as np
import pytest

from flowfit.grids import (ConvKernel, bilinear_resize, bilinear_resize_backward,
                           box_sum, conv2d, conv2d_backward, reduce_mean,
                           reduce_sum, sigmoid)
from util import naive_conv2d, norm_rel_err, smooth_image


def test_kernel_validation():
    with pytest.raises(ValueError):
        ConvKernel(np.zeros((1, 1, 2, 3)))
    with pytest.raises(ValueError):
        ConvKernel(np.zeros((2, 1, 3, 3)), bias=np.zeros(3))


def test_conv_identity_1x1():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(6, 5, 3))
    kernel = ConvKernel(np.eye(3).reshape(3, 3, 1, 1), np.zeros(3))
    np.testing.assert_array_equal(conv2d(x, kernel), x)


def test_conv_zero_weights():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(4, 4, 2))
    out = conv2d(x, ConvKernel.zeros(3, 2, 3, 3))
    np.testing.assert_array_equal(out, np.zeros((4, 4, 3)))


def test_conv_matches_naive_oracle():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(5, 5, 2))
    kernel = ConvKernel(rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3))
    expected = naive_conv2d(x, kernel.weights, kernel.bias)
    assert np.abs(conv2d(x, kernel) - expected).max() <= 1e-6


def test_conv_channel_mismatch():
    with pytest.raises(ValueError):
        conv2d(np.zeros((4, 4, 2)), ConvKernel.zeros(1, 3, 3, 3))


def test_conv_linearity():
    rng = np.random.default_rng(3)
    kernel = ConvKernel(rng.normal(size=(2, 3, 3, 3)), None)
    for _ in range(5):
        a, b = rng.normal(size=2)
        x, y = rng.normal(size=(2, 6, 7, 3))
        combined = conv2d(a * x + b * y, kernel)
        split = a * conv2d(x, kernel) + b * conv2d(y, kernel)
        assert norm_rel_err(combined, split) <= 1e-5


def test_conv_backward_zero_upstream():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(4, 4, 2))
    kernel = ConvKernel(rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3))
    grad_in, grad_k = conv2d_backward(x, kernel, np.zeros((4, 4, 3)))
    assert not grad_in.any()
    assert not grad_k.weights.any()
    assert not grad_k.bias.any()


def test_conv_backward_identity_kernel():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(5, 5, 2))
    upstream = rng.normal(size=(5, 5, 2))
    kernel = ConvKernel(np.eye(2).reshape(2, 2, 1, 1), None)
    grad_in, _ = conv2d_backward(x, kernel, upstream)
    np.testing.assert_array_equal(grad_in, upstream)


def test_conv_adjoint_identity():
    rng = np.random.default_rng(6)
    kernel = ConvKernel(rng.normal(size=(3, 2, 3, 3)), None)
    for _ in range(5):
        x = rng.normal(size=(6, 5, 2))
        u = rng.normal(size=(6, 5, 3))
        grad_in, _ = conv2d_backward(x, kernel, u)
        lhs = np.sum(conv2d(x, kernel) * u)
        rhs = np.sum(x * grad_in)
        assert abs(lhs - rhs) <= 1e-5 * max(abs(lhs), 1.0)


def test_conv_backward_matches_finite_differences():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(5, 4, 2))
    kernel = ConvKernel(rng.normal(size=(2, 2, 3, 3)), rng.normal(size=2))
    upstream = rng.normal(size=(5, 4, 2))

    def scalar(k_weights, k_bias, inp):
        return np.sum(conv2d(inp, ConvKernel(k_weights, k_bias)) * upstream)

    grad_in, grad_k = conv2d_backward(x, kernel, upstream)
    h = 1e-6
    fd_w = np.zeros_like(kernel.weights)
    for idx in np.ndindex(kernel.weights.shape):
        wp = kernel.weights.copy(); wp[idx] += h
        wm = kernel.weights.copy(); wm[idx] -= h
        fd_w[idx] = (scalar(wp, kernel.bias, x) - scalar(wm, kernel.bias, x)) / (2 * h)
    assert norm_rel_err(fd_w, grad_k.weights) <= 1e-6
    fd_in = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy(); xp[idx] += h
        xm = x.copy(); xm[idx] -= h
        fd_in[idx] = (scalar(kernel.weights, kernel.bias, xp)
                      - scalar(kernel.weights, kernel.bias, xm)) / (2 * h)
    assert norm_rel_err(fd_in, grad_in) <= 1e-6


def test_resize_scale_one_identity():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(3, 4, 2))
    np.testing.assert_array_equal(bilinear_resize(x, 1), x)


def test_resize_single_pixel_constant():
    out = bilinear_resize(np.full((1, 1, 1), 0.37), 8)
    assert out.shape == (8, 8, 1)
    np.testing.assert_array_equal(out, np.full((8, 8, 1), 0.37))


def test_resize_rejects_scale_zero():
    with pytest.raises(ValueError):
        bilinear_resize(np.zeros((2, 2, 1)), 0)


def test_resize_ramp_matches_direct_bilinear():
    x = np.array([[0.0, 1.0], [2.0, 3.0]])[:, :, None]
    out = bilinear_resize(x, 2)
    # Direct half-pixel interpolation of the same grid.
    expected = np.zeros((4, 4, 1))
    for i in range(4):
        for j in range(4):
            sy = min(max((i + 0.5) / 2 - 0.5, 0.0), 1.0)
            sx = min(max((j + 0.5) / 2 - 0.5, 0.0), 1.0)
            y0, x0 = int(np.floor(sy)), int(np.floor(sx))
            y1, x1 = min(y0 + 1, 1), min(x0 + 1, 1)
            fy, fx = sy - y0, sx - x0
            top = x[y0, x0, 0] * (1 - fx) + x[y0, x1, 0] * fx
            bot = x[y1, x0, 0] * (1 - fx) + x[y1, x1, 0] * fx
            expected[i, j, 0] = top * (1 - fy) + bot * fy
    assert np.abs(out - expected).max() <= 1e-12


def test_resize_preserves_constants_exactly():
    for value in (0.1, -2.5, 1 / 3):
        out = bilinear_resize(np.full((3, 5, 2), value), 4)
        np.testing.assert_array_equal(out, np.full((12, 20, 2), value))


def test_resize_linear_in_input():
    rng = np.random.default_rng(9)
    x, y = rng.normal(size=(2, 3, 4, 2))
    a, b = 1.7, -0.3
    combined = bilinear_resize(a * x + b * y, 3)
    split = a * bilinear_resize(x, 3) + b * bilinear_resize(y, 3)
    assert norm_rel_err(combined, split) <= 1e-12


def test_resize_adjoint():
    rng = np.random.default_rng(10)
    x = rng.normal(size=(3, 4, 2))
    u = rng.normal(size=(6, 8, 2))
    lhs = np.sum(bilinear_resize(x, 2) * u)
    rhs = np.sum(x * bilinear_resize_backward(u, 2))
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


def test_sigmoid_basics():
    assert sigmoid(np.zeros(1))[0] == 0.5
    out = sigmoid(np.array([-1000.0, 1000.0]))
    assert np.isfinite(out).all()
    assert 0.0 <= out[0] < 1e-12
    assert 1.0 - 1e-12 < out[1] <= 1.0


def test_reduce_sum_zeros():
    assert reduce_sum(np.zeros((5, 5, 2))) == 0.0


def test_masked_mean_matches_oracle():
    h, w = 6, 7
    ramp = np.arange(h * w, dtype=np.float64).reshape(h, w, 1)
    mask = np.zeros((h, w), dtype=bool)
    mask[:, : w // 2] = True
    total, count = 0.0, 0
    for y in range(h):
        for x in range(w):
            if mask[y, x]:
                total += ramp[y, x, 0]
                count += 1
    assert reduce_mean(ramp, mask) == pytest.approx(total / count, rel=1e-12)


def test_masked_mean_empty_mask_is_zero():
    assert reduce_mean(np.ones((4, 4, 3)), np.zeros((4, 4), dtype=bool)) == 0.0


def test_box_sum_matches_loops():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(7, 6, 2))
    out = box_sum(x, 5)
    for y in range(7):
        for xx in range(6):
            window = x[max(y - 2, 0):y + 3, max(xx - 2, 0):xx + 3]
            np.testing.assert_allclose(out[y, xx], window.sum(axis=(0, 1)),
                                       atol=1e-12)
