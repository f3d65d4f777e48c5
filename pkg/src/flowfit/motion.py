"""Lightweight online flow model: two convolutions over concatenated per-frame
features, upsampled to full resolution.

The feature extractor is a fixed deterministic stand-in for a pretrained
backbone: box-downsampled intensities, their spatial gradients, and a seeded
bank of random 3x3 convolutions with a tanh nonlinearity. It is never
trained; only the two convolution kernels are fitted, per frame pair, against
the masked photometric objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import ConvKernel, bilinear_resize, bilinear_resize_backward, \
    conv2d, conv2d_backward
from .optim import Objective
from .photometric import PhotometricConfig, loss_and_grad_wrt_warped, \
    mask_to_bbox, masked_photometric_loss
from .validation import as_grid, as_mask
from .warping import warp, warp_backward


@dataclass(frozen=True)
class FeatureConfig:
    """Settings of the fixed feature extractor.

    channels is the per-frame feature count; the motion model consumes the
    concatenation of two frames, i.e. 2 * channels input channels.
    """

    channels: int = 16
    scale: int = 8
    seed: int = 0


def _box_downsample(frame: np.ndarray, scale: int) -> np.ndarray:
    h, w, c = frame.shape
    return frame.reshape(h // scale, scale, w // scale, scale, c).mean(axis=(1, 3))


def extract_features(frame: np.ndarray, config: FeatureConfig) -> np.ndarray:
    """Deterministic feature stack at 1/scale resolution, (h, w, channels).

    Channels are standardized over the grid (zero mean, unit-ish variance);
    without this the pooled channels are nearly constant and the model's
    parameter-to-flow map cannot localize updates spatially.
    """
    frame = as_grid(frame, "frame")
    h, w, c = frame.shape
    if h % config.scale or w % config.scale:
        raise ValueError(
            f"frame dims {h}x{w} must be divisible by scale {config.scale}"
        )
    pooled = _box_downsample(frame, config.scale)
    gy, gx = np.gradient(pooled, axis=(0, 1))
    base = np.concatenate([pooled, gx, gy], axis=2)
    extra = config.channels - base.shape[2]
    if extra < 0:
        raise ValueError(
            f"channels must be >= {base.shape[2]} for a {c}-channel frame, "
            f"got {config.channels}"
        )
    if extra > 0:
        rng = np.random.default_rng(config.seed)
        bank = ConvKernel(
            rng.normal(0.0, 1.0, size=(extra, base.shape[2], 3, 3))
            / np.sqrt(9.0 * base.shape[2]),
            bias=None,
        )
        base = np.concatenate([base, np.tanh(conv2d(base, bank))], axis=2)
    return (base - base.mean(axis=(0, 1))) / (base.std(axis=(0, 1)) + 1e-3)


@dataclass
class MotionParams:
    """The two trainable convolution kernels of the flow model."""

    conv1: ConvKernel
    conv2: ConvKernel
    scale: int = 8

    def __post_init__(self):
        if self.conv2.out_channels != 2:
            raise ValueError(
                f"second kernel must emit 2 flow channels, got {self.conv2.out_channels}"
            )
        if self.scale < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")

    @classmethod
    def zeros(cls, in_channels: int = 32, hidden_channels: int = 48,
              scale: int = 8, bias: bool = True) -> "MotionParams":
        return cls(
            ConvKernel.zeros(hidden_channels, in_channels, 1, 1, bias=bias),
            ConvKernel.zeros(2, hidden_channels, 3, 3, bias=bias),
            scale,
        )

    @classmethod
    def initial(cls, in_channels: int = 32, hidden_channels: int = 48,
                scale: int = 8, seed: int = 0, bias: bool = True) -> "MotionParams":
        """Fresh per-pair parameters predicting exactly zero flow.

        The first convolution carries seeded nonzero weights while the second
        stays zero: the prediction is still identically zero, but the loss
        gradient spans the full second-kernel space. (With both kernels zero
        the product structure zeroes every weight gradient and only the two
        output biases remain, a degenerate saddle that makes the auto-stepped
        update wildly overshoot.)
        """
        rng = np.random.default_rng(seed)
        conv1 = ConvKernel(
            rng.normal(0.0, 1.0, size=(hidden_channels, in_channels, 1, 1))
            / np.sqrt(in_channels),
            np.zeros(hidden_channels) if bias else None,
        )
        conv2 = ConvKernel.zeros(2, hidden_channels, 3, 3, bias=bias)
        return cls(conv1, conv2, scale)

    def copy(self) -> "MotionParams":
        return MotionParams(self.conv1.copy(), self.conv2.copy(), self.scale)

    def _pieces(self) -> list[np.ndarray]:
        pieces = [self.conv1.weights, self.conv2.weights]
        if self.conv1.bias is not None:
            pieces.insert(1, self.conv1.bias)
        if self.conv2.bias is not None:
            pieces.append(self.conv2.bias)
        return pieces

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self._pieces())

    def pack(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self._pieces()])

    def unpack(self, vector: np.ndarray) -> "MotionParams":
        """New MotionParams with this instance's shapes and the given values."""
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.n_params,):
            raise ValueError(
                f"expected a flat vector of {self.n_params} values, got {vector.shape}"
            )
        out = self.copy()
        offset = 0
        for piece in out._pieces():
            piece[...] = vector[offset:offset + piece.size].reshape(piece.shape)
            offset += piece.size
        return out


def predict_flow(params: MotionParams, feat_current: np.ndarray,
                 feat_previous: np.ndarray) -> np.ndarray:
    """Full-resolution flow from the concatenated feature pair."""
    feat_current = as_grid(feat_current, "feat_current")
    feat_previous = as_grid(feat_previous, "feat_previous")
    if feat_current.shape != feat_previous.shape:
        raise ValueError(
            f"feature shapes differ: {feat_current.shape} vs {feat_previous.shape}"
        )
    stacked = np.concatenate([feat_current, feat_previous], axis=2)
    return bilinear_resize(conv2d(conv2d(stacked, params.conv1), params.conv2),
                           params.scale)


@dataclass
class MotionEvaluation:
    loss: float
    grad: MotionParams
    empty_mask: bool = False


def loss_and_gradient(params: MotionParams, current: np.ndarray,
                      previous: np.ndarray, feat_current: np.ndarray,
                      feat_previous: np.ndarray, mask: np.ndarray,
                      config: PhotometricConfig | None = None,
                      use_bbox: bool = True) -> MotionEvaluation:
    """Masked photometric loss of the predicted flow and its exact gradient
    w.r.t. every entry of both kernels (weights and biases).

    The mask is converted to its padded bounding box before entering the
    loss, unless use_bbox is False. An empty mask short-circuits to a zero
    loss and zero gradient, flagged on the result.
    """
    config = config or PhotometricConfig()
    current = as_grid(current, "current")
    previous = as_grid(previous, "previous")
    mask = as_mask(mask)
    loss_mask = mask_to_bbox(mask, config.mask_pad) if use_bbox else mask
    if not loss_mask.any():
        return MotionEvaluation(0.0, _zero_grad(params), empty_mask=True)

    stacked = np.concatenate([as_grid(feat_current, "feat_current"),
                              as_grid(feat_previous, "feat_previous")], axis=2)
    hidden = conv2d(stacked, params.conv1)
    coarse = conv2d(hidden, params.conv2)
    flow = bilinear_resize(coarse, params.scale)
    warped = warp(previous, flow)
    loss, grad_warped = loss_and_grad_wrt_warped(current, warped, loss_mask, config)
    _, grad_flow = warp_backward(previous, flow, grad_warped)
    grad_coarse = bilinear_resize_backward(grad_flow, params.scale)
    grad_hidden, grad_conv2 = conv2d_backward(hidden, params.conv2, grad_coarse)
    _, grad_conv1 = conv2d_backward(stacked, params.conv1, grad_hidden)
    return MotionEvaluation(loss,
                            MotionParams(grad_conv1, grad_conv2, params.scale))


def _zero_grad(params: MotionParams) -> MotionParams:
    return MotionParams(params.conv1.zeros_like(), params.conv2.zeros_like(),
                        params.scale)


class MotionObjective(Objective):
    """Flat-vector view of the motion model's loss over one or more frame pairs.

    Multi-pair losses and gradients are averaged over the pairs (the joint
    objective used by interval-batched updates).
    """

    def __init__(self, pairs, template: MotionParams,
                 config: PhotometricConfig | None = None, use_bbox: bool = True):
        # Each pair is (current, previous, feat_current, feat_previous, mask).
        self.pairs = list(pairs)
        if not self.pairs:
            raise ValueError("at least one frame pair is required")
        self.template = template
        self.config = config or PhotometricConfig()
        self.use_bbox = use_bbox

    def _params(self, vector: np.ndarray) -> MotionParams:
        return self.template.unpack(vector)

    def evaluate(self, params: np.ndarray) -> float:
        model = self._params(params)
        total = 0.0
        for current, previous, feat_c, feat_p, mask in self.pairs:
            flow = predict_flow(model, feat_c, feat_p)
            loss_mask = (mask_to_bbox(mask, self.config.mask_pad)
                         if self.use_bbox else as_mask(mask))
            total += masked_photometric_loss(current, warp(previous, flow),
                                             loss_mask, self.config)
        return total / len(self.pairs)

    def gradient(self, params: np.ndarray) -> np.ndarray:
        return self.value_and_gradient(params)[1]

    def value_and_gradient(self, params: np.ndarray) -> tuple[float, np.ndarray]:
        model = self._params(params)
        total_loss = 0.0
        total_grad = np.zeros(self.template.n_params)
        for current, previous, feat_c, feat_p, mask in self.pairs:
            result = loss_and_gradient(model, current, previous, feat_c, feat_p,
                                       mask, self.config, self.use_bbox)
            total_loss += result.loss
            total_grad += result.grad.pack()
        n = len(self.pairs)
        return total_loss / n, total_grad / n
