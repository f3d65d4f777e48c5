"""Input validation helpers shared by the public API.

Arrays are handled channels-last: images and feature stacks are (H, W, C)
float64, flow fields are (H, W, 2) with channel 0 the horizontal (x)
displacement and channel 1 the vertical (y) displacement, masks are (H, W)
bool.
"""

from __future__ import annotations

import numpy as np


def as_grid(x, name: str = "grid", channels: int | None = None) -> np.ndarray:
    """Coerce to a (H, W, C) float64 array; 2-D input becomes one channel."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"{name} must be 2-D or 3-D, got shape {arr.shape}")
    if channels is not None and arr.shape[2] != channels:
        raise ValueError(
            f"{name} must have {channels} channel(s), got {arr.shape[2]}"
        )
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


def as_flow(x, name: str = "flow") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ValueError(f"{name} must have shape (H, W, 2), got {arr.shape}")
    return np.ascontiguousarray(arr)


def as_mask(x, name: str = "mask") -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.dtype != bool:
        vals = np.unique(arr)
        if not np.isin(vals, (0, 1)).all():
            raise ValueError(f"{name} values must be binary, got {vals[:8]}")
        arr = arr.astype(bool)
    return np.ascontiguousarray(arr)


def check_same_hw(a: np.ndarray, b: np.ndarray, name_a: str, name_b: str) -> None:
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(
            f"{name_a} and {name_b} must share height/width, "
            f"got {a.shape[:2]} vs {b.shape[:2]}"
        )


def check_finite(x: np.ndarray, name: str) -> None:
    if not np.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite values")
