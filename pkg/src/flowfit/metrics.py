"""Evaluation measures: PSNR, mean SSIM, region similarity (IoU) and a
boundary F-measure with dilation-based matching."""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import binary_dilation, binary_erosion

from .photometric import PhotometricConfig, ssim_map
from .validation import as_grid, as_mask

PSNR_CAP = 99.0


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for images on [0, 1].

    Identical inputs (MSE 0) return the 99 dB cap instead of infinity.
    """
    a = as_grid(a, "a")
    b = as_grid(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse <= 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def mean_ssim(a: np.ndarray, b: np.ndarray,
              config: PhotometricConfig | None = None) -> float:
    """Mean of the per-pixel structural similarity map."""
    return float(np.mean(ssim_map(a, b, config)))


def iou(pred: np.ndarray, truth: np.ndarray) -> float:
    """Intersection over union of two binary masks; both empty counts as 1.

    Args:
        pred: predicted binary mask, (H, W).
        truth: ground-truth binary mask, same shape.

    Returns:
        |pred & truth| / |pred | truth| in [0, 1].
    """
    pred = as_mask(pred, "pred")
    truth = as_mask(truth, "truth")
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    union = int(np.count_nonzero(pred | truth))
    if union == 0:
        return 1.0
    return float(np.count_nonzero(pred & truth) / union)


def _boundary(mask: np.ndarray) -> np.ndarray:
    # Inner boundary; erosion treats outside the frame as background, so a
    # full mask has its boundary on the frame edge.
    return mask & ~binary_erosion(mask, border_value=0)


def _disk(radius: int) -> np.ndarray:
    span = np.arange(-radius, radius + 1)
    yy, xx = np.meshgrid(span, span, indexing="ij")
    return (yy * yy + xx * xx) <= radius * radius


def default_boundary_tolerance(height: int, width: int) -> int:
    """0.8% of the image diagonal, rounded up."""
    return int(math.ceil(0.008 * math.hypot(height, width)))


def boundary_f(pred: np.ndarray, truth: np.ndarray,
               tolerance: int | None = None) -> float:
    """Boundary F-measure with tolerance-radius dilation matching.

    Precision counts predicted boundary pixels within ``tolerance`` of the
    ground-truth boundary, recall the converse; F = 2PR/(P+R). Two empty
    masks score 1.

    Args:
        pred: predicted binary mask, (H, W).
        truth: ground-truth binary mask, same shape.
        tolerance: match radius in pixels; defaults to 0.8% of the image
            diagonal rounded up.

    Returns:
        F-measure in [0, 1].
    """
    pred = as_mask(pred, "pred")
    truth = as_mask(truth, "truth")
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    if tolerance is None:
        tolerance = default_boundary_tolerance(*pred.shape)
    if not pred.any() and not truth.any():
        return 1.0
    pred_b = _boundary(pred)
    truth_b = _boundary(truth)
    if not pred_b.any() or not truth_b.any():
        return 0.0
    footprint = _disk(int(tolerance))
    truth_zone = binary_dilation(truth_b, structure=footprint)
    pred_zone = binary_dilation(pred_b, structure=footprint)
    precision = np.count_nonzero(pred_b & truth_zone) / np.count_nonzero(pred_b)
    recall = np.count_nonzero(truth_b & pred_zone) / np.count_nonzero(truth_b)
    if precision + recall == 0.0:
        return 0.0
    return float(2.0 * precision * recall / (precision + recall))


def crop_to_bbox_pair(a: np.ndarray, b: np.ndarray,
                      mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Crop both grids to the mask's bounding box (no padding).

    Raises ValueError on an empty mask: there is nothing to crop to.
    """
    a = as_grid(a, "a")
    b = as_grid(b, "b")
    mask = as_mask(mask)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.shape[:2] != mask.shape:
        raise ValueError(
            f"mask shape {mask.shape} does not match grids {a.shape[:2]}"
        )
    if not mask.any():
        raise ValueError("empty mask: nothing to crop")
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    r = slice(rows[0], rows[-1] + 1)
    c = slice(cols[0], cols[-1] + 1)
    return a[r, c].copy(), b[r, c].copy()
