"""Differentiable backward warping of grids by flow fields.

Conventions, fixed once and used everywhere:
  * flow channel 0 is the horizontal displacement du, channel 1 the vertical
    dv; the reconstructed frame samples the source at (x + du, y + dv), i.e.
    the warp transports intensity against the flow direction;
  * sample coordinates are clamped to the frame (border replication), so no
    zeros leak into the photometric loss near edges;
  * at exactly-integer sample coordinates the derivative w.r.t. the flow is
    the right-continuous limit (a measure-zero convention).
"""

from __future__ import annotations

import numpy as np

from .validation import as_flow, as_grid, check_same_hw


def _sample_geometry(flow: np.ndarray, height: int, width: int):
    ygrid, xgrid = np.meshgrid(np.arange(height, dtype=np.float64),
                               np.arange(width, dtype=np.float64), indexing="ij")
    tx = xgrid + flow[:, :, 0]
    ty = ygrid + flow[:, :, 1]
    xs = np.clip(tx, 0.0, width - 1.0)
    ys = np.clip(ty, 0.0, height - 1.0)
    x0 = np.minimum(np.floor(xs), width - 1.0).astype(np.int64)
    y0 = np.minimum(np.floor(ys), height - 1.0).astype(np.int64)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = xs - x0
    fy = ys - y0
    return tx, ty, x0, x1, y0, y1, fx, fy


def warp(source: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Bilinear backward warp: out(x, y) = source(x + du, y + dv)."""
    source = as_grid(source, "source")
    flow = as_flow(flow)
    check_same_hw(source, flow, "source", "flow")
    h, w, _ = source.shape
    _, _, x0, x1, y0, y1, fx, fy = _sample_geometry(flow, h, w)
    v00 = source[y0, x0]
    v01 = source[y0, x1]
    v10 = source[y1, x0]
    v11 = source[y1, x1]
    fx = fx[:, :, None]
    fy = fy[:, :, None]
    top = v00 + fx * (v01 - v00)
    bottom = v10 + fx * (v11 - v10)
    return top + fy * (bottom - top)


def warp_backward(source: np.ndarray, flow: np.ndarray,
                  upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Adjoints of warp: (grad wrt source, grad wrt flow).

    The source gradient is the exact transpose of the bilinear gather; the
    flow gradient is the analytic derivative of the interpolant, zero where
    the sample coordinate is clamped at the border.
    """
    source = as_grid(source, "source")
    flow = as_flow(flow)
    upstream = as_grid(upstream, "upstream")
    check_same_hw(source, flow, "source", "flow")
    if upstream.shape != source.shape:
        raise ValueError(
            f"upstream shape {upstream.shape} does not match source {source.shape}"
        )
    h, w, c = source.shape
    tx, ty, x0, x1, y0, y1, fx, fy = _sample_geometry(flow, h, w)
    v00 = source[y0, x0]
    v01 = source[y0, x1]
    v10 = source[y1, x0]
    v11 = source[y1, x1]
    fxc = fx[:, :, None]
    fyc = fy[:, :, None]

    grad_flat = np.zeros((h * w, c))
    for yi, xi, wgt in ((y0, x0, (1 - fy) * (1 - fx)),
                        (y0, x1, (1 - fy) * fx),
                        (y1, x0, fy * (1 - fx)),
                        (y1, x1, fy * fx)):
        np.add.at(grad_flat, (yi * w + xi).ravel(),
                  (upstream * wgt[:, :, None]).reshape(-1, c))
    grad_source = grad_flat.reshape(h, w, c)

    d_dx = (1 - fyc) * (v01 - v00) + fyc * (v11 - v10)
    d_dy = (1 - fxc) * (v10 - v00) + fxc * (v11 - v01)
    # Clamp subgradient: right-continuous, so the slope survives at exactly 0
    # but dies at and beyond the far border.
    open_x = (tx >= 0.0) & (tx < w - 1.0)
    open_y = (ty >= 0.0) & (ty < h - 1.0)
    grad_flow = np.zeros((h, w, 2))
    grad_flow[:, :, 0] = np.sum(upstream * d_dx, axis=2) * open_x
    grad_flow[:, :, 1] = np.sum(upstream * d_dy, axis=2) * open_y
    return grad_source, grad_flow


def warp_chain(source: np.ndarray, older_flow: np.ndarray,
               newer_flow: np.ndarray) -> np.ndarray:
    """Two-step warp: transport by the older flow first, then the newer one."""
    return warp(warp(source, older_flow), newer_flow)
