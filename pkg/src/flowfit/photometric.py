"""Masked photometric reconstruction objective.

The loss between the current frame and the warped previous frame combines a
per-pixel L1 term with a structural-dissimilarity term, summed over masked
pixels and normalized by the masked pixel count (so step sizes derived from
the loss are resolution independent).

By default the structural term is lambda_ssim * (1 - SSIM) / 2, which makes a
perfect reconstruction score exactly 0 (the nonnegative minimum that the
relaxed steepest-descent step size assumes). The raw signed form
(-lambda_ssim * SSIM) is available behind ``literal_ssim_sign`` for
comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import box_count, box_sum
from .validation import as_grid, as_mask, check_same_hw
from .warping import warp, warp_backward


@dataclass(frozen=True)
class PhotometricConfig:
    lambda_l1: float = 0.15
    lambda_ssim: float = 0.85
    ssim_window: int = 7
    ssim_c1: float = 0.01 ** 2
    ssim_c2: float = 0.03 ** 2
    mask_pad: int = 20
    literal_ssim_sign: bool = False

    def __post_init__(self):
        if self.lambda_l1 < 0 or self.lambda_ssim < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.ssim_window < 3 or self.ssim_window % 2 == 0:
            raise ValueError(f"ssim_window must be odd and >= 3, got {self.ssim_window}")
        if self.mask_pad < 0:
            raise ValueError("mask_pad must be nonnegative")


class _SsimStats:
    """Local window statistics of an image pair, cached for the backward pass."""

    __slots__ = ("counts", "mu_a", "mu_b", "a1", "a2", "b1", "b2", "value")

    def __init__(self, a: np.ndarray, b: np.ndarray, config: PhotometricConfig):
        win = config.ssim_window
        h, w, _ = a.shape
        n = box_count(h, w, win)
        mu_a = box_sum(a, win) / n
        mu_b = box_sum(b, win) / n
        sigma_a = box_sum(a * a, win) / n - mu_a * mu_a
        sigma_b = box_sum(b * b, win) / n - mu_b * mu_b
        sigma_ab = box_sum(a * b, win) / n - mu_a * mu_b
        self.counts = n
        self.mu_a = mu_a
        self.mu_b = mu_b
        self.a1 = 2.0 * mu_a * mu_b + config.ssim_c1
        self.a2 = 2.0 * sigma_ab + config.ssim_c2
        self.b1 = mu_a * mu_a + mu_b * mu_b + config.ssim_c1
        self.b2 = sigma_a + sigma_b + config.ssim_c2
        self.value = (self.a1 * self.a2) / (self.b1 * self.b2)

    def grad_wrt_b(self, a: np.ndarray, b: np.ndarray, upstream: np.ndarray,
                   window: int) -> np.ndarray:
        """Gradient of sum(upstream * ssim) w.r.t. the second image."""
        denom = self.b1 * self.b2
        d_mu = (2.0 * self.mu_a * (self.a2 - self.a1) / denom
                - 2.0 * self.mu_b * self.value * (1.0 / self.b1 - 1.0 / self.b2))
        d_eb2 = -self.value / self.b2
        d_eab = 2.0 * self.a1 / denom
        # The count-normalized box filter B[x] = boxsum(x)/n has adjoint
        # B^T[u] = boxsum(u/n).
        grad = box_sum(upstream * d_mu / self.counts, window)
        grad += 2.0 * b * box_sum(upstream * d_eb2 / self.counts, window)
        grad += a * box_sum(upstream * d_eab / self.counts, window)
        return grad


def ssim_map(a: np.ndarray, b: np.ndarray,
             config: PhotometricConfig | None = None) -> np.ndarray:
    """Per-pixel, per-channel SSIM over a uniform local window.

    Window statistics are normalized by the in-frame window size, so constant
    images satisfy the closed-form SSIM value at every pixel including the
    borders. Identical inputs give exactly 1 everywhere.
    """
    config = config or PhotometricConfig()
    a = as_grid(a, "a")
    b = as_grid(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return _SsimStats(a, b, config).value


def mask_to_bbox(mask: np.ndarray, pad: int) -> np.ndarray:
    """Filled bounding box of the set pixels, grown by ``pad`` and clamped."""
    mask = as_mask(mask)
    if not mask.any():
        return np.zeros_like(mask)
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    r0 = max(int(rows[0]) - pad, 0)
    r1 = min(int(rows[-1]) + pad, mask.shape[0] - 1)
    c0 = max(int(cols[0]) - pad, 0)
    c1 = min(int(cols[-1]) + pad, mask.shape[1] - 1)
    box = np.zeros_like(mask)
    box[r0:r1 + 1, c0:c1 + 1] = True
    return box


def _term_coeffs(config: PhotometricConfig) -> tuple[float, float, float]:
    # Returns (ssim scale, ssim offset, d(term)/d(ssim)) for
    # term = scale * ssim + offset.
    if config.literal_ssim_sign:
        return -config.lambda_ssim, 0.0, -config.lambda_ssim
    return -0.5 * config.lambda_ssim, 0.5 * config.lambda_ssim, -0.5 * config.lambda_ssim


def masked_photometric_loss(current: np.ndarray, warped: np.ndarray,
                            mask: np.ndarray,
                            config: PhotometricConfig | None = None) -> float:
    """Mean over masked pixels (and channels) of the L1 + DSSIM objective.

    Returns 0.0 for an all-zero mask.
    """
    config = config or PhotometricConfig()
    current = as_grid(current, "current")
    warped = as_grid(warped, "warped")
    if current.shape != warped.shape:
        raise ValueError(f"shape mismatch: {current.shape} vs {warped.shape}")
    mask = as_mask(mask)
    check_same_hw(current, mask[:, :, None], "current", "mask")
    count = int(np.count_nonzero(mask))
    if count == 0:
        return 0.0
    scale, offset, _ = _term_coeffs(config)
    term = config.lambda_l1 * np.abs(warped - current)
    if config.lambda_ssim != 0.0:
        term = term + scale * ssim_map(current, warped, config) + offset
    channels = current.shape[2]
    return float(np.sum(term[mask]) / (count * channels))


def loss_and_grad_wrt_warped(current: np.ndarray, warped: np.ndarray,
                             mask: np.ndarray,
                             config: PhotometricConfig | None = None
                             ) -> tuple[float, np.ndarray]:
    """Loss value plus its analytic gradient w.r.t. the warped image."""
    config = config or PhotometricConfig()
    current = as_grid(current, "current")
    warped = as_grid(warped, "warped")
    if current.shape != warped.shape:
        raise ValueError(f"shape mismatch: {current.shape} vs {warped.shape}")
    mask = as_mask(mask)
    check_same_hw(current, mask[:, :, None], "current", "mask")
    count = int(np.count_nonzero(mask))
    if count == 0:
        return 0.0, np.zeros_like(warped)
    channels = current.shape[2]
    norm = 1.0 / (count * channels)
    weight = mask[:, :, None] * norm

    diff = warped - current
    term = config.lambda_l1 * np.abs(diff)
    grad = config.lambda_l1 * np.sign(diff) * weight
    if config.lambda_ssim != 0.0:
        scale, offset, d_term = _term_coeffs(config)
        stats = _SsimStats(current, warped, config)
        term = term + scale * stats.value + offset
        grad = grad + stats.grad_wrt_b(current, warped,
                                       np.broadcast_to(weight * d_term,
                                                       current.shape),
                                       config.ssim_window)
    loss = float(np.sum(term[mask]) / (count * channels))
    return loss, grad


def loss_gradient_wrt_flow(current: np.ndarray, previous: np.ndarray,
                           flow: np.ndarray, mask: np.ndarray,
                           config: PhotometricConfig | None = None) -> np.ndarray:
    """Gradient of masked_photometric_loss(current, warp(previous, flow)) w.r.t. flow."""
    warped = warp(previous, flow)
    _, grad_warped = loss_and_grad_wrt_warped(current, warped, mask, config)
    _, grad_flow = warp_backward(previous, flow, grad_warped)
    return grad_flow
