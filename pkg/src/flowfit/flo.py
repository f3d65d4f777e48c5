"""Flow-field file interchange (.flo) and color-wheel visualization.

File layout (little-endian): the 4-byte float magic 202021.25 (reads as
"PIEH"), width and height as 32-bit integers, then row-major interleaved
(du, dv) 32-bit floats.
"""

from __future__ import annotations

import struct

import numpy as np

from .validation import as_flow, check_finite

MAGIC = 202021.25


def write_flo(flow: np.ndarray, path) -> None:
    flow = as_flow(flow)
    check_finite(flow, "flow")
    h, w, _ = flow.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<fii", MAGIC, w, h))
        fh.write(flow.astype("<f4").tobytes())


def read_flo(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) < 12:
            raise ValueError(f"truncated flow file: {path}")
        magic, w, h = struct.unpack("<fii", header)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r} in flow file: {path}")
        if w < 1 or h < 1:
            raise ValueError(f"invalid dimensions {w}x{h} in flow file: {path}")
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != h * w * 2:
        raise ValueError(
            f"truncated flow file: expected {h * w * 2} floats, got {data.size}"
        )
    return data.reshape(h, w, 2).astype(np.float64)


def _hsv_to_rgb(hue: np.ndarray, sat: np.ndarray, val: np.ndarray) -> np.ndarray:
    # hue in [0, 1); standard six-sector conversion, vectorized.
    h6 = (hue % 1.0) * 6.0
    sector = np.floor(h6).astype(np.int64) % 6
    f = h6 - np.floor(h6)
    p = val * (1.0 - sat)
    q = val * (1.0 - sat * f)
    t = val * (1.0 - sat * (1.0 - f))
    channels = [
        np.choose(sector, [val, q, p, p, t, val]),
        np.choose(sector, [t, val, val, q, p, p]),
        np.choose(sector, [p, p, t, val, val, q]),
    ]
    return np.stack(channels, axis=-1)


def colorize_flow(flow: np.ndarray) -> np.ndarray:
    """Color-wheel image of a flow field, (H, W, 3) in [0, 1].

    Hue encodes direction, saturation the magnitude normalized by the
    in-frame maximum; zero flow renders white.
    """
    flow = as_flow(flow)
    du = flow[:, :, 0]
    dv = flow[:, :, 1]
    magnitude = np.hypot(du, dv)
    peak = magnitude.max()
    sat = magnitude / peak if peak > 0 else np.zeros_like(magnitude)
    hue = (np.arctan2(dv, du) / (2.0 * np.pi)) % 1.0
    return _hsv_to_rgb(hue, sat, np.ones_like(sat))
