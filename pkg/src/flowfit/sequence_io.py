"""Sequence ingestion and image output.

A sequence directory holds numerically ordered frame images (PNG or binary
PPM/PGM) and a ``masks/`` subdirectory with index masks named after the frame
stems; the frame-0 mask is mandatory, later ones optional. Mask pixel values
are object indices with 0 as background.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from .synthetic import SequenceBundle

_FRAME_SUFFIXES = {".png", ".ppm", ".pgm"}

# Palette for viewable index masks: background black, then saturated colors.
_PALETTE = [
    (0, 0, 0), (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
]


def _numeric_key(path: Path):
    digits = re.findall(r"\d+", path.stem)
    return (int(digits[-1]) if digits else 0, path.stem)


def _read_image(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            if img.mode in ("L", "I", "I;16"):
                arr = np.asarray(img.convert("L"), dtype=np.float64)[:, :, None]
            else:
                arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    except OSError as exc:
        raise ValueError(f"unreadable image file {path}: {exc}") from exc
    return arr / 255.0


def _read_mask(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            if img.mode not in ("P", "L"):
                img = img.convert("L")
            return np.asarray(img, dtype=np.int64)
    except OSError as exc:
        raise ValueError(f"unreadable mask file {path}: {exc}") from exc


def load_sequence(path) -> SequenceBundle:
    """Load frames plus masks; frames are normalized to [0, 1]."""
    root = Path(path)
    if not root.is_dir():
        raise ValueError(f"not a sequence directory: {root}")
    frame_paths = sorted((p for p in root.iterdir()
                          if p.suffix.lower() in _FRAME_SUFFIXES),
                         key=_numeric_key)
    if not frame_paths:
        raise ValueError(f"no frame images found in {root}")
    frames = []
    for p in frame_paths:
        frame = _read_image(p)
        if frames and frame.shape != frames[0].shape:
            raise ValueError(
                f"resolution mismatch: {p.name} is {frame.shape[:2]}, "
                f"expected {frames[0].shape[:2]}"
            )
        frames.append(frame)

    mask_dir = root / "masks"
    masks: list[np.ndarray | None] = []
    for p in frame_paths:
        candidates = [mask_dir / (p.stem + s) for s in (".png", ".pgm")]
        found = next((c for c in candidates if c.exists()), None)
        if found is None:
            masks.append(None)
            continue
        mask = _read_mask(found)
        if mask.shape != frames[0].shape[:2]:
            raise ValueError(
                f"mask {found.name} shape {mask.shape} does not match frames "
                f"{frames[0].shape[:2]}"
            )
        masks.append(mask)
    if masks[0] is None:
        raise ValueError(f"missing mask for the first frame in {mask_dir}")

    present = [m for m in masks if m is not None]
    n_objects = int(max(int(m.max()) for m in present))
    return SequenceBundle(frames, masks, n_objects=n_objects)


def write_image(image: np.ndarray, path) -> None:
    """Write a [0, 1] grid as an 8-bit PNG (grayscale for one channel)."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    data = (arr * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(data).save(path)


def write_mask(mask: np.ndarray, path) -> None:
    """Write an object-index mask as a paletted PNG (indices preserved)."""
    mask = np.asarray(mask)
    if mask.dtype == bool:
        mask = mask.astype(np.uint8)
    img = Image.fromarray(mask.astype(np.uint8), mode="P")
    palette = []
    for i in range(256):
        palette.extend(_PALETTE[i % len(_PALETTE)] if i < len(_PALETTE)
                       else (i, i, i))
    img.putpalette(palette)
    img.save(path)
