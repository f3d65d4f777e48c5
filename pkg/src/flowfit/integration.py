"""Confidence-gated fusion of a probability map with flow-warped history.

The refined map adds, to a linear transform of the current map, history maps
warped forward by the flow and weighted per pixel by 1 - sigmoid(r), where r
is a learned transform of the photometric reconstruction error: accurate
pixel correspondence (small error) lets history through, inaccurate flow
suppresses it. The two history kernels are separate parameters since the two
lags contribute differently. The output sum is clamped to [0, 1].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .grids import ConvKernel, conv2d, conv2d_backward, sigmoid
from .validation import as_grid, as_mask, check_same_hw
from .warping import warp, warp_chain

_MAGIC = b"IKRN"
_VERSION = 1


@dataclass
class IntegrationParams:
    """Five 3x3 kernels: current-map path, two history paths, two error gates."""

    current: ConvKernel
    history_1: ConvKernel
    history_2: ConvKernel
    gate_1: ConvKernel
    gate_2: ConvKernel

    _FIELDS = ("current", "history_1", "history_2", "gate_1", "gate_2")

    def __post_init__(self):
        for name in self._FIELDS:
            k: ConvKernel = getattr(self, name)
            if (k.kernel_h, k.kernel_w) != (3, 3):
                raise ValueError(f"{name} kernel must be 3x3, got "
                                 f"{k.kernel_h}x{k.kernel_w}")

    @classmethod
    def initial(cls, frame_channels: int = 3) -> "IntegrationParams":
        """Pass-through start: identity on the current map, zeros elsewhere."""
        return cls(
            current=ConvKernel.center_identity(),
            history_1=ConvKernel.zeros(1, 1, 3, 3),
            history_2=ConvKernel.zeros(1, 1, 3, 3),
            gate_1=ConvKernel.zeros(1, frame_channels, 3, 3),
            gate_2=ConvKernel.zeros(1, frame_channels, 3, 3),
        )

    def copy(self) -> "IntegrationParams":
        return IntegrationParams(*(getattr(self, n).copy() for n in self._FIELDS))

    def to_bytes(self) -> bytes:
        """Self-describing little-endian blob: shape headers plus scalars."""
        out = [_MAGIC, struct.pack("<HH", _VERSION, len(self._FIELDS))]
        for name in self._FIELDS:
            k: ConvKernel = getattr(self, name)
            encoded = name.encode()
            out.append(struct.pack("<H", len(encoded)))
            out.append(encoded)
            out.append(struct.pack("<IIIIB", k.out_channels, k.in_channels,
                                   k.kernel_h, k.kernel_w,
                                   0 if k.bias is None else 1))
            out.append(k.weights.astype("<f8").tobytes())
            if k.bias is not None:
                out.append(k.bias.astype("<f8").tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "IntegrationParams":
        if blob[:4] != _MAGIC:
            raise ValueError("bad magic: not an integration parameter blob")
        version, count = struct.unpack_from("<HH", blob, 4)
        if version != _VERSION:
            raise ValueError(f"unsupported blob version {version}")
        offset = 8
        kernels = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset:offset + name_len].decode()
            offset += name_len
            out_c, in_c, kh, kw, has_bias = struct.unpack_from("<IIIIB", blob, offset)
            offset += 17
            n = out_c * in_c * kh * kw
            weights = np.frombuffer(blob, dtype="<f8", count=n, offset=offset)
            offset += 8 * n
            bias = None
            if has_bias:
                bias = np.frombuffer(blob, dtype="<f8", count=out_c, offset=offset).copy()
                offset += 8 * out_c
            kernels[name] = ConvKernel(weights.reshape(out_c, in_c, kh, kw).copy(),
                                       bias)
        missing = set(cls._FIELDS) - set(kernels)
        if missing:
            raise ValueError(f"blob is missing kernels: {sorted(missing)}")
        return cls(**kernels)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "IntegrationParams":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


@dataclass
class HistoryState:
    """Previous predictions and frames feeding the refinement; depth 0, 1 or 2.

    flow_12 is the flow between the two history frames (needed only at
    depth 2, where the older map is warped twice).
    """

    prob_1: np.ndarray | None = None
    frame_1: np.ndarray | None = None
    prob_2: np.ndarray | None = None
    frame_2: np.ndarray | None = None
    flow_12: np.ndarray | None = None

    @property
    def depth(self) -> int:
        if self.prob_1 is None:
            return 0
        if self.prob_2 is None:
            return 1
        return 2

    def validate(self) -> None:
        if self.prob_1 is not None and self.frame_1 is None:
            raise ValueError("history depth 1 requires frame_1")
        if self.prob_2 is not None:
            if self.prob_1 is None:
                raise ValueError("history depth 2 requires the depth-1 entries")
            if self.frame_2 is None or self.flow_12 is None:
                raise ValueError("history depth 2 requires frame_2 and flow_12")


@dataclass
class IntegrationSample:
    """One training/inference item: current frame + map, history, newest flow."""

    frame: np.ndarray
    prob: np.ndarray
    history: HistoryState
    flow: np.ndarray | None = None
    target: np.ndarray | None = None


def _forward(params: IntegrationParams, frame, prob, history, flow, use_gates):
    frame = as_grid(frame, "frame")
    prob3 = as_grid(prob, "prob", channels=1)
    check_same_hw(frame, prob3, "frame", "prob")
    history.validate()
    cache = {"prob3": prob3}
    x = conv2d(prob3, params.current)
    pre = x
    if history.depth >= 1:
        if flow is None:
            raise ValueError("history depth >= 1 requires the newest flow")
        warped_prob = warp(as_grid(history.prob_1, "prob_1", channels=1), flow)
        h = conv2d(warped_prob, params.history_1)
        err = np.abs(frame - warp(as_grid(history.frame_1, "frame_1"), flow))
        r = conv2d(err, params.gate_1)
        gate = 1.0 - sigmoid(r) if use_gates else np.ones_like(r)
        pre = pre + h * gate
        cache["h1"] = (warped_prob, h, err, r, gate)
    if history.depth >= 2:
        warped_prob = warp_chain(as_grid(history.prob_2, "prob_2", channels=1),
                                 history.flow_12, flow)
        h = conv2d(warped_prob, params.history_2)
        err = np.abs(frame - warp_chain(as_grid(history.frame_2, "frame_2"),
                                        history.flow_12, flow))
        r = conv2d(err, params.gate_2)
        gate = 1.0 - sigmoid(r) if use_gates else np.ones_like(r)
        pre = pre + h * gate
        cache["h2"] = (warped_prob, h, err, r, gate)
    cache["pre"] = pre
    return np.clip(pre, 0.0, 1.0), cache


def integrate(params: IntegrationParams, frame: np.ndarray, prob: np.ndarray,
              history: HistoryState, flow: np.ndarray | None = None,
              use_gates: bool = True) -> np.ndarray:
    """Refined probability map in [0, 1], shape (H, W).

    With history depth 0 the output is exactly the current-map path alone.
    use_gates=False drops the reconstruction-error gating (history passes
    unweighted), the ablation variant.
    """
    refined, _ = _forward(params, frame, prob, history, flow, use_gates)
    return refined[:, :, 0]


def bce_loss(prediction: np.ndarray, target: np.ndarray,
             eps: float = 1e-4) -> float:
    """Mean binary cross entropy; predictions are eps-clamped away from {0,1}.

    The clamp also bounds the gradient cliff at confidently-wrong pixels to
    1/eps, which keeps plain full-batch gradient descent stable; adaptive
    optimizers would tolerate a smaller eps.
    """
    pred = np.clip(as_grid(prediction, "prediction", channels=1)[:, :, 0],
                   eps, 1.0 - eps)
    target = as_mask(target, "target").astype(np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(-np.mean(target * np.log(pred)
                          + (1.0 - target) * np.log(1.0 - pred)))


def _sample_gradient(params, sample, use_gates, eps=1e-4):
    """(bce, param gradients dict) for one sample."""
    refined, cache = _forward(params, sample.frame, sample.prob, sample.history,
                              sample.flow, use_gates)
    target = as_mask(sample.target, "target").astype(np.float64)[:, :, None]
    pred = np.clip(refined, eps, 1.0 - eps)
    n = pred.shape[0] * pred.shape[1]
    loss = float(-np.sum(target * np.log(pred)
                         + (1.0 - target) * np.log(1.0 - pred)) / n)
    d_pred = (pred - target) / (pred * (1.0 - pred)) / n
    # Clamp subgradient: pass-through on the closed interval [0, 1].
    pre = cache["pre"]
    d_pre = d_pred * ((pre >= 0.0) & (pre <= 1.0))

    grads: dict[str, ConvKernel] = {}
    _, grads["current"] = conv2d_backward(cache["prob3"], params.current, d_pre)
    for key, h_name, g_name in (("h1", "history_1", "gate_1"),
                                ("h2", "history_2", "gate_2")):
        if key not in cache:
            grads[h_name] = getattr(params, h_name).zeros_like()
            grads[g_name] = getattr(params, g_name).zeros_like()
            continue
        warped_prob, h, err, r, gate = cache[key]
        _, grads[h_name] = conv2d_backward(warped_prob, getattr(params, h_name),
                                           d_pre * gate)
        if use_gates:
            s = sigmoid(r)
            d_r = -d_pre * h * s * (1.0 - s)
            _, grads[g_name] = conv2d_backward(err, getattr(params, g_name), d_r)
        else:
            grads[g_name] = getattr(params, g_name).zeros_like()
    return loss, grads


def integration_bce(params: IntegrationParams, samples,
                    use_gates: bool = True) -> float:
    """Mean BCE of the refined maps over a sample set."""
    samples = list(samples)
    if not samples:
        raise ValueError("at least one sample is required")
    total = 0.0
    for sample in samples:
        refined = integrate(params, sample.frame, sample.prob, sample.history,
                            sample.flow, use_gates)
        total += bce_loss(refined, sample.target)
    return total / len(samples)


def train_integration(params: IntegrationParams, samples, epochs: int,
                      lr: float, use_gates: bool = True) -> IntegrationParams:
    """Full-batch gradient descent on the mean BCE of the refined maps.

    Deterministic given its inputs; returns the trained parameters and leaves
    the argument untouched.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("training requires at least one sample")
    for i, sample in enumerate(samples):
        if sample.target is None:
            raise ValueError(f"samples[{i}] has no target")
    params = params.copy()
    if epochs < 0:
        raise ValueError(f"epochs must be >= 0, got {epochs}")
    for _ in range(epochs):
        accum = {name: getattr(params, name).zeros_like()
                 for name in IntegrationParams._FIELDS}
        for sample in samples:
            _, grads = _sample_gradient(params, sample, use_gates)
            for name in IntegrationParams._FIELDS:
                accum[name].weights += grads[name].weights
                if accum[name].bias is not None:
                    accum[name].bias += grads[name].bias
        scale = lr / len(samples)
        for name in IntegrationParams._FIELDS:
            kernel = getattr(params, name)
            kernel.weights -= scale * accum[name].weights
            if kernel.bias is not None:
                kernel.bias -= scale * accum[name].bias
    return params
