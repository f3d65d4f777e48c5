"""Dense-grid numerics with hand-written adjoints.

Every operation that sits on the photometric gradient chain (convolution,
bilinear upsampling) comes with an exact backward pass, composed manually
downstream; there is no autograd tape.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .validation import as_grid


@dataclass
class ConvKernel:
    """Weights of one 2-D convolution, shaped (out, in, kh, kw), plus optional bias."""

    weights: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 4:
            raise ValueError(f"kernel weights must be 4-D, got {self.weights.shape}")
        _, _, kh, kw = self.weights.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError(f"kernel dims must be odd for symmetric padding, got {kh}x{kw}")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if self.bias.shape != (self.weights.shape[0],):
                raise ValueError(
                    f"bias must have shape ({self.weights.shape[0]},), got {self.bias.shape}"
                )

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_h(self) -> int:
        return self.weights.shape[2]

    @property
    def kernel_w(self) -> int:
        return self.weights.shape[3]

    @classmethod
    def zeros(cls, out_channels: int, in_channels: int, kh: int, kw: int,
              bias: bool = True) -> "ConvKernel":
        return cls(
            np.zeros((out_channels, in_channels, kh, kw)),
            np.zeros(out_channels) if bias else None,
        )

    @classmethod
    def center_identity(cls, kh: int = 3, kw: int = 3, bias: bool = True) -> "ConvKernel":
        """1-in 1-out kernel whose center tap is 1: an exact pass-through."""
        w = np.zeros((1, 1, kh, kw))
        w[0, 0, kh // 2, kw // 2] = 1.0
        return cls(w, np.zeros(1) if bias else None)

    def copy(self) -> "ConvKernel":
        return ConvKernel(self.weights.copy(),
                          None if self.bias is None else self.bias.copy())

    def zeros_like(self) -> "ConvKernel":
        return ConvKernel(np.zeros_like(self.weights),
                          None if self.bias is None else np.zeros_like(self.bias))


def conv2d(x: np.ndarray, kernel: ConvKernel) -> np.ndarray:
    """Sliding-window convolution with zero "same" padding.

    Input (H, W, Cin) -> output (H, W, Cout); each output value is the dot
    product of the kernel with the window centered on the pixel, plus bias.
    """
    x = as_grid(x, "input")
    if x.shape[2] != kernel.in_channels:
        raise ValueError(
            f"input has {x.shape[2]} channels but kernel expects {kernel.in_channels}"
        )
    h, w, _ = x.shape
    kh, kw = kernel.kernel_h, kernel.kernel_w
    ph, pw = kh // 2, kw // 2
    padded = np.pad(x, ((ph, ph), (pw, pw), (0, 0)))
    out = np.zeros((h, w, kernel.out_channels))
    for i in range(kh):
        for j in range(kw):
            out += padded[i:i + h, j:j + w, :] @ kernel.weights[:, :, i, j].T
    if kernel.bias is not None:
        out += kernel.bias
    return out


def conv2d_backward(x: np.ndarray, kernel: ConvKernel,
                    upstream: np.ndarray) -> tuple[np.ndarray, ConvKernel]:
    """Exact adjoints of conv2d: gradients w.r.t. the input and the kernel."""
    x = as_grid(x, "input")
    upstream = as_grid(upstream, "upstream")
    if x.shape[2] != kernel.in_channels:
        raise ValueError(
            f"input has {x.shape[2]} channels but kernel expects {kernel.in_channels}"
        )
    if upstream.shape != (x.shape[0], x.shape[1], kernel.out_channels):
        raise ValueError(
            f"upstream shape {upstream.shape} does not match conv output "
            f"({x.shape[0]}, {x.shape[1]}, {kernel.out_channels})"
        )
    h, w, _ = x.shape
    kh, kw = kernel.kernel_h, kernel.kernel_w
    ph, pw = kh // 2, kw // 2
    padded = np.pad(x, ((ph, ph), (pw, pw), (0, 0)))
    grad_padded = np.zeros_like(padded)
    grad_weights = np.zeros_like(kernel.weights)
    for i in range(kh):
        for j in range(kw):
            patch = padded[i:i + h, j:j + w, :]
            grad_weights[:, :, i, j] = np.einsum("hwo,hwc->oc", upstream, patch)
            grad_padded[i:i + h, j:j + w, :] += upstream @ kernel.weights[:, :, i, j]
    grad_input = grad_padded[ph:ph + h, pw:pw + w, :]
    grad_bias = None if kernel.bias is None else upstream.sum(axis=(0, 1))
    return grad_input, ConvKernel(grad_weights, grad_bias)


def _axis_coords(n_in: int, n_out: int, scale: int):
    # Half-pixel centers: output center maps to (i + 0.5)/scale - 0.5 in input
    # space, clamped to the frame (border replication beyond the edges).
    src = (np.arange(n_out) + 0.5) / scale - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(np.int64)
    i0 = np.minimum(i0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def bilinear_resize(x: np.ndarray, scale: int) -> np.ndarray:
    """Upsample (H, W, C) by an integer factor with bilinear interpolation.

    Linear in the input; constants are preserved exactly (lerp form a + f*(b-a)).
    """
    x = as_grid(x, "input")
    if not isinstance(scale, (int, np.integer)) or scale < 1:
        raise ValueError(f"scale must be a positive integer, got {scale!r}")
    if scale == 1:
        return x.copy()
    h, w, _ = x.shape
    y0, y1, fy = _axis_coords(h, h * scale, scale)
    x0, x1, fx = _axis_coords(w, w * scale, scale)
    rows = x[y0] + fy[:, None, None] * (x[y1] - x[y0])
    return rows[:, x0] + fx[None, :, None] * (rows[:, x1] - rows[:, x0])


def bilinear_resize_backward(upstream: np.ndarray, scale: int) -> np.ndarray:
    """Adjoint of bilinear_resize; upstream is (H*scale, W*scale, C)."""
    upstream = as_grid(upstream, "upstream")
    if not isinstance(scale, (int, np.integer)) or scale < 1:
        raise ValueError(f"scale must be a positive integer, got {scale!r}")
    if scale == 1:
        return upstream.copy()
    ho, wo, c = upstream.shape
    if ho % scale or wo % scale:
        raise ValueError(f"upstream dims {ho}x{wo} not divisible by scale {scale}")
    h, w = ho // scale, wo // scale
    y0, y1, fy = _axis_coords(h, ho, scale)
    x0, x1, fx = _axis_coords(w, wo, scale)
    g_rows = np.zeros((ho, w, c))
    g_rows_t = g_rows.transpose(1, 0, 2)
    np.add.at(g_rows_t, x0, (upstream * (1.0 - fx)[None, :, None]).transpose(1, 0, 2))
    np.add.at(g_rows_t, x1, (upstream * fx[None, :, None]).transpose(1, 0, 2))
    grad = np.zeros((h, w, c))
    np.add.at(grad, y0, g_rows * (1.0 - fy)[:, None, None])
    np.add.at(grad, y1, g_rows * fy[:, None, None])
    return grad


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, mapping into (0, 1)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def reduce_sum(x: np.ndarray) -> float:
    return float(np.sum(np.asarray(x, dtype=np.float64)))


def reduce_mean(x: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean over all entries, or over masked pixels (all channels).

    An all-zero mask yields 0.0 rather than NaN; callers treat a zero loss
    as converged.
    """
    x = np.asarray(x, dtype=np.float64)
    if mask is None:
        return float(np.mean(x))
    mask = np.asarray(mask)
    if mask.shape != x.shape[:2]:
        raise ValueError(
            f"mask shape {mask.shape} does not match grid {x.shape[:2]}"
        )
    count = int(np.count_nonzero(mask))
    if count == 0:
        return 0.0
    channels = 1 if x.ndim == 2 else x.shape[2]
    return float(np.sum(x[mask.astype(bool)]) / (count * channels))


def box_sum(x: np.ndarray, window: int) -> np.ndarray:
    """Sum of each centered window intersected with the frame (integral image)."""
    x = as_grid(x, "input")
    if window % 2 == 0 or window < 1:
        raise ValueError(f"window must be odd and positive, got {window}")
    h, w, c = x.shape
    r = window // 2
    integral = np.zeros((h + 1, w + 1, c))
    np.cumsum(np.cumsum(x, axis=0), axis=1, out=integral[1:, 1:])
    ys = np.arange(h)
    xs = np.arange(w)
    y0 = np.maximum(ys - r, 0)
    y1 = np.minimum(ys + r, h - 1) + 1
    x0 = np.maximum(xs - r, 0)
    x1 = np.minimum(xs + r, w - 1) + 1
    return (integral[y1[:, None], x1[None, :]]
            - integral[y0[:, None], x1[None, :]]
            - integral[y1[:, None], x0[None, :]]
            + integral[y0[:, None], x0[None, :]])


def box_count(height: int, width: int, window: int) -> np.ndarray:
    """Number of in-frame pixels of each centered window, shape (H, W, 1)."""
    return box_sum(np.ones((height, width, 1)), window)
