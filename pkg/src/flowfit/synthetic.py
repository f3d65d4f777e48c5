"""Synthetic sequences with known ground-truth flow.

A textured patch moves over a textured background with subpixel (bilinear)
placement. Each entry of ``motions`` is the ground-truth backward flow
(du, dv) of the foreground for one frame pair: the displacement that maps a
frame-t foreground pixel to its frame-(t-1) location. The renderer therefore
advances the patch by the negative of each entry, which makes the emitted
flow fields exact by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class OccluderSpec:
    height: int = 10
    width: int = 10
    row: float = 4.0
    col: float = 4.0
    motions: tuple = ()  # same convention as SyntheticSpec.motions


@dataclass(frozen=True)
class SyntheticSpec:
    height: int = 64
    width: int = 64
    channels: int = 3
    patch_height: int = 24
    patch_width: int = 24
    patch_row: float | None = None  # default: trajectory centered in frame
    patch_col: float | None = None
    motions: tuple = ((3.0, -2.0),)
    seed: int = 0
    smoothing_passes: int = 2
    occluder: OccluderSpec | None = None


@dataclass
class SequenceBundle:
    """Ordered frames plus per-frame object-index masks (0 = background)."""

    frames: list
    masks: list
    n_objects: int = 1

    def object_mask(self, frame_index: int, object_id: int = 1) -> np.ndarray:
        mask = self.masks[frame_index]
        if mask is None:
            raise ValueError(f"no mask available for frame {frame_index}")
        return mask == object_id


def _smooth_noise(rng: np.random.Generator, h: int, w: int, c: int,
                  passes: int) -> np.ndarray:
    x = rng.uniform(size=(h, w, c))
    for _ in range(passes):
        acc = np.copy(x)
        n = np.ones_like(x)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == 0 and dx == 0:
                    continue
                shifted = np.roll(np.roll(x, dy, axis=0), dx, axis=1)
                acc += shifted
                n += 1
        x = acc / n
    lo, hi = x.min(), x.max()
    if hi > lo:
        x = (x - lo) / (hi - lo)
    return 0.1 + 0.8 * x


def _paste(canvas: np.ndarray, texture: np.ndarray, top: float, left: float):
    """Composite a texture at a fractional offset with bilinear coverage.

    Returns the coverage map (0..1) so callers can derive masks.
    """
    h, w, _ = canvas.shape
    ph, pw, _ = texture.shape
    padded = np.pad(texture, ((1, 1), (1, 1), (0, 0)))
    alpha = np.pad(np.ones((ph, pw, 1)), ((1, 1), (1, 1), (0, 0)))
    ys = np.arange(h, dtype=np.float64) - top + 1.0
    xs = np.arange(w, dtype=np.float64) - left + 1.0
    ys = np.clip(ys, 0.0, ph + 1.0)
    xs = np.clip(xs, 0.0, pw + 1.0)
    y0 = np.minimum(np.floor(ys), ph + 1.0).astype(np.int64)
    x0 = np.minimum(np.floor(xs), pw + 1.0).astype(np.int64)
    y1 = np.minimum(y0 + 1, ph + 1)
    x1 = np.minimum(x0 + 1, pw + 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]

    def sample(img):
        rows0 = img[y0]
        rows1 = img[y1]
        rows = rows0 + fy * (rows1 - rows0)
        cols0 = rows[:, x0]
        cols1 = rows[:, x1]
        return cols0 + fx * (cols1 - cols0)

    premult = sample(padded * alpha)
    coverage = sample(alpha)
    canvas *= (1.0 - coverage)
    canvas += premult
    return coverage[:, :, 0]


def _positions(start_row: float, start_col: float, motions) -> list[tuple[float, float]]:
    positions = [(start_row, start_col)]
    row, col = start_row, start_col
    for du, dv in motions:
        # ground-truth backward flow (du, dv) => the patch advances by (-du, -dv)
        col -= du
        row -= dv
        positions.append((row, col))
    return positions


def synthesize_sequence(spec: SyntheticSpec) -> tuple[SequenceBundle, list[np.ndarray]]:
    """Render the sequence and return (bundle, ground-truth flows).

    flows[i] is the exact foreground flow of pair (i+1, i): constant
    spec.motions[i] inside the frame-(i+1) object mask, zero elsewhere.
    Raises ValueError if the patch would leave the frame on any frame.
    """
    motions = [(float(du), float(dv)) for du, dv in spec.motions]
    n_frames = len(motions) + 1
    rng = np.random.default_rng(spec.seed)
    background = _smooth_noise(rng, spec.height, spec.width, spec.channels,
                               spec.smoothing_passes)
    patch = _smooth_noise(rng, spec.patch_height, spec.patch_width,
                          spec.channels, spec.smoothing_passes)
    # Offset the patch intensities so foreground and background differ.
    patch = np.clip(patch + rng.uniform(-0.15, 0.15, size=(1, 1, spec.channels)),
                    0.02, 0.98)

    # Default start centers the whole trajectory (floored so that integer
    # motion lists render pixel-crisp frames), keeping long sequences inside
    # the frame for as long as geometrically possible.
    travel_row = -sum(dv for _, dv in motions)
    travel_col = -sum(du for du, _ in motions)
    start_row = (spec.patch_row if spec.patch_row is not None
                 else np.floor((spec.height - spec.patch_height - travel_row)
                               / 2.0))
    start_col = (spec.patch_col if spec.patch_col is not None
                 else np.floor((spec.width - spec.patch_width - travel_col)
                               / 2.0))
    positions = _positions(start_row, start_col, motions)
    for t, (row, col) in enumerate(positions):
        if (row < 0 or col < 0 or row + spec.patch_height > spec.height
                or col + spec.patch_width > spec.width):
            raise ValueError(
                f"patch leaves the frame at frame {t}: origin ({row}, {col})"
            )

    occ_texture = None
    occ_positions = None
    if spec.occluder is not None:
        occ = spec.occluder
        occ_texture = _smooth_noise(rng, occ.height, occ.width, spec.channels,
                                    spec.smoothing_passes)
        occ_motions = list(occ.motions) or [(0.0, 0.0)] * len(motions)
        if len(occ_motions) != len(motions):
            raise ValueError("occluder motions must match the motion list length")
        occ_positions = _positions(occ.row, occ.col, occ_motions)

    frames = []
    masks = []
    for t, (row, col) in enumerate(positions):
        frame = background.copy()
        coverage = _paste(frame, patch, row, col)
        if occ_texture is not None:
            _paste(frame, occ_texture, *occ_positions[t])
        frames.append(frame)
        masks.append((coverage >= 0.5).astype(np.int64))

    flows = []
    for i, (du, dv) in enumerate(motions):
        flow = np.zeros((spec.height, spec.width, 2))
        fg = masks[i + 1] == 1
        flow[fg, 0] = du
        flow[fg, 1] = dv
        flows.append(flow)

    return SequenceBundle(frames, masks, n_objects=1), flows
