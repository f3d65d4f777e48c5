"""Shared helpers for the test suite."""

import numpy as np


def smooth_image(rng, h, w, c, passes=2):
    """Blurred uniform noise in [0.1, 0.9]: differentiable-friendly texture."""
    x = rng.uniform(size=(h, w, c))
    for _ in range(passes):
        x = (x + np.roll(x, 1, 0) + np.roll(x, -1, 0)
             + np.roll(x, 1, 1) + np.roll(x, -1, 1)) / 5.0
    lo, hi = x.min(), x.max()
    return 0.1 + 0.8 * (x - lo) / (hi - lo)


def naive_conv2d(x, weights, bias):
    """Quadruple-loop sliding-window convolution with zero same padding."""
    h, w, cin = x.shape
    cout, _, kh, kw = weights.shape
    ph, pw = kh // 2, kw // 2
    out = np.zeros((h, w, cout))
    for y in range(h):
        for xx in range(w):
            for o in range(cout):
                acc = 0.0 if bias is None else bias[o]
                for c in range(cin):
                    for i in range(kh):
                        for j in range(kw):
                            yy, xj = y + i - ph, xx + j - pw
                            if 0 <= yy < h and 0 <= xj < w:
                                acc += x[yy, xj, c] * weights[o, c, i, j]
                out[y, xx, o] = acc
    return out


def norm_rel_err(approx, exact):
    denom = np.linalg.norm(np.asarray(exact).ravel())
    if denom == 0.0:
        return float(np.linalg.norm(np.asarray(approx).ravel()))
    return float(np.linalg.norm((np.asarray(approx) - np.asarray(exact)).ravel())
                 / denom)
