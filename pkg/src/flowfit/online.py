"""Per-sequence online optimization of the flow model.

Two schedules are provided. The streaming loop fits a fresh (or shared)
parameter set on every consecutive frame pair as soon as the current frame
arrives. The interval-batched loop caches frames and, every N frames, fits
one parameter set jointly on the last N pairs (mean loss) and emits their N
flows at once; with N = 1 it reduces exactly to the streaming loop. Frames
and features live in a ring-buffer cache and each frame is featurized exactly
once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .motion import FeatureConfig, MotionObjective, MotionParams, \
    extract_features, predict_flow
from .optim import DEFAULT_STEP_CAP, FrameCache, RsdStepRecord, rsd_optimize
from .photometric import PhotometricConfig
from .validation import as_grid, as_mask


@dataclass(frozen=True)
class OnlineFlowConfig:
    iterations: int = 5
    interval: int = 1
    share_params: bool = False
    hidden_channels: int = 48
    feature_channels: int = 16
    scale: int = 8
    feature_seed: int = 0
    param_seed: int = 0
    photometric: PhotometricConfig = field(default_factory=PhotometricConfig)
    use_bbox_mask: bool = True
    step_cap: float | None = DEFAULT_STEP_CAP

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.interval < 1:
            raise ValueError(f"interval must be >= 1, got {self.interval}")

    @classmethod
    def balanced(cls, **overrides) -> "OnlineFlowConfig":
        """Interval-2, 2-iteration preset: the accuracy/speed balance point."""
        overrides.setdefault("interval", 2)
        overrides.setdefault("iterations", 2)
        return cls(**overrides)

    @property
    def in_channels(self) -> int:
        return 2 * self.feature_channels


class OnlineFlowSession:
    """Single-owner optimization state for one object in one sequence.

    Sessions for different objects or sequences are independent and may run
    concurrently; nothing is shared between instances.
    """

    def __init__(self, config: OnlineFlowConfig | None = None):
        self.config = config or OnlineFlowConfig()
        self.feature_config = FeatureConfig(self.config.feature_channels,
                                            self.config.scale,
                                            self.config.feature_seed)
        self.feature_evals = 0
        self.records: dict[int, list[RsdStepRecord]] = {}
        self._shared: MotionParams | None = None

    def featurize(self, frame: np.ndarray) -> np.ndarray:
        self.feature_evals += 1
        return extract_features(frame, self.feature_config)

    def _fresh_params(self) -> MotionParams:
        return MotionParams.initial(self.config.in_channels,
                                    self.config.hidden_channels,
                                    self.config.scale,
                                    seed=self.config.param_seed)

    def _params_for_update(self) -> MotionParams:
        if not self.config.share_params:
            return self._fresh_params()
        if self._shared is None:
            self._shared = self._fresh_params()
        return self._shared

    def _optimize(self, pairs, pair_indices, iterations: int) -> MotionParams:
        params = self._params_for_update()
        objective = MotionObjective(pairs, params, self.config.photometric,
                                    self.config.use_bbox_mask)
        vector, trajectory = rsd_optimize(objective, params.pack(), iterations,
                                          step_cap=self.config.step_cap)
        fitted = params.unpack(vector)
        if self.config.share_params:
            self._shared = fitted
        for idx in pair_indices:
            self.records[idx] = trajectory
        return fitted

    def run_streaming(self, frames, masks=None,
                      iterations: int | None = None) -> list[np.ndarray]:
        """Fit and emit one flow per consecutive pair, in frame order.

        masks[t] gates the loss of pair (t, t-1); None means full-frame.
        Returns flows[i] for pair (i+1, i).
        """
        frames, masks = self._check_sequence(frames, masks)
        iterations = iterations or self.config.iterations
        cache = FrameCache(capacity=2)
        flows: list[np.ndarray] = []
        for t, frame in enumerate(frames):
            features = self.featurize(frame)
            if t == 0:
                cache.put(t, frame, features)
                continue
            prev_frame, prev_features = cache.get(t - 1)
            pair = (frame, prev_frame, features, prev_features, masks[t])
            params = self._optimize([pair], [t - 1], iterations)
            flows.append(predict_flow(params, features, prev_features))
            cache.put(t, frame, features)
        return flows

    def run_batched(self, frames, masks=None, interval: int | None = None,
                    iterations: int | None = None) -> list[np.ndarray | None]:
        """Interval-batched schedule: optimize on N cached pairs every N frames.

        Returns a list aligned to pair index; entries the modulo rule never
        reaches (e.g. trailing pairs of a sequence whose length is not a
        multiple of N) are None.
        """
        frames, masks = self._check_sequence(frames, masks)
        interval = interval or self.config.interval
        iterations = iterations or self.config.iterations
        if interval < 1:
            raise ValueError(f"interval must be >= 1, got {interval}")
        cache = FrameCache(capacity=interval + 1)
        flows: list[np.ndarray | None] = [None] * (len(frames) - 1)
        for t, frame in enumerate(frames):
            features = self.featurize(frame)
            if t == 0 or t % interval != 0:
                cache.put(t, frame, features)
                continue
            pairs = []
            pair_feats = []
            for i in range(1, interval + 1):
                older_frame, older_features = cache.get(t - i)
                if i == 1:
                    newer_frame, newer_features = frame, features
                else:
                    newer_frame, newer_features = cache.get(t - i + 1)
                pairs.append((newer_frame, older_frame, newer_features,
                              older_features, masks[t - i + 1]))
                pair_feats.append((newer_features, older_features))
            if len(pairs) != interval:
                raise RuntimeError(
                    f"batch size {len(pairs)} does not equal interval {interval}"
                )
            pair_indices = [t - i for i in range(1, interval + 1)]
            params = self._optimize(pairs, pair_indices, iterations)
            for idx, (newer_features, older_features) in zip(pair_indices,
                                                             pair_feats):
                flows[idx] = predict_flow(params, newer_features, older_features)
            cache.put(t, frame, features)
        return flows

    def _check_sequence(self, frames, masks):
        frames = [as_grid(f, f"frames[{i}]") for i, f in enumerate(frames)]
        if len(frames) < 2:
            raise ValueError(f"need at least 2 frames, got {len(frames)}")
        shape = frames[0].shape
        for i, f in enumerate(frames):
            if f.shape != shape:
                raise ValueError(
                    f"frames[{i}] shape {f.shape} differs from frames[0] {shape}"
                )
        if masks is None:
            full = np.ones(shape[:2], dtype=bool)
            masks = [full] * len(frames)
        else:
            masks = [as_mask(m, f"masks[{i}]") for i, m in enumerate(masks)]
            if len(masks) != len(frames):
                raise ValueError(
                    f"got {len(masks)} masks for {len(frames)} frames"
                )
        return frames, masks


def run_streaming(session: OnlineFlowSession, frames, masks=None,
                  iterations: int | None = None) -> list[np.ndarray]:
    return session.run_streaming(frames, masks, iterations)


def run_batched(session: OnlineFlowSession, frames, masks=None,
                interval: int | None = None,
                iterations: int | None = None) -> list[np.ndarray | None]:
    return session.run_batched(frames, masks, interval, iterations)
