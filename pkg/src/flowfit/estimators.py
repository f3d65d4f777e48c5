"""Scikit-learn compatible wrappers around the online flow fitter and the
integration refiner, so both compose with the wider estimator ecosystem
(get_params/set_params, clone, pipelines over parameter sweeps)."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .integration import (IntegrationParams, IntegrationSample, integrate,
                          integration_bce, train_integration)
from .metrics import iou
from .online import OnlineFlowConfig, OnlineFlowSession
from .photometric import PhotometricConfig


class OnlineFlowEstimator(BaseEstimator):
    """Per-sequence optical flow via relaxed steepest descent.

    The estimator is transductive: ``fit`` runs the online optimization over
    the given frame sequence and stores the resulting flow fields; there is
    no separate training set.

    Parameters
    ----------
    iterations : int, optimization steps per update.
    interval : int, update every N frames on a batch of N pairs (1 streams).
    share_params : bool, carry the fitted kernels across updates instead of
        re-initializing to zero flow.
    feature_channels : int, per-frame feature count (the model consumes twice
        as many after concatenation).
    hidden_channels : int, width of the intermediate convolution.
    scale : int, feature downsampling / flow upsampling factor.
    feature_seed : int, seed of the fixed random feature bank.
    param_seed : int, seed of the first-kernel initialization.
    lambda_l1, lambda_ssim : floats, photometric loss weights.
    ssim_window : int, odd local window of the structural term.
    mask_pad : int, padding of the bounding box derived from the object mask.
    literal_ssim_sign : bool, use the raw signed SSIM term instead of the
        nonnegative dissimilarity form.
    step_cap : float or None, upper bound on the computed step size.

    Attributes
    ----------
    flows_ : list of (H, W, 2) arrays, one per consecutive pair (interval-
        batched runs leave unreached trailing pairs as None).
    records_ : dict mapping pair index to its optimization trajectory.
    """

    def __init__(self, iterations=5, interval=1, share_params=False,
                 feature_channels=16, hidden_channels=48, scale=8,
                 feature_seed=0, param_seed=0, lambda_l1=0.15, lambda_ssim=0.85,
                 ssim_window=7, mask_pad=20, literal_ssim_sign=False,
                 step_cap=1e3):
        self.iterations = iterations
        self.interval = interval
        self.share_params = share_params
        self.feature_channels = feature_channels
        self.hidden_channels = hidden_channels
        self.scale = scale
        self.feature_seed = feature_seed
        self.param_seed = param_seed
        self.lambda_l1 = lambda_l1
        self.lambda_ssim = lambda_ssim
        self.ssim_window = ssim_window
        self.mask_pad = mask_pad
        self.literal_ssim_sign = literal_ssim_sign
        self.step_cap = step_cap

    def _config(self) -> OnlineFlowConfig:
        return OnlineFlowConfig(
            iterations=self.iterations,
            interval=self.interval,
            share_params=self.share_params,
            hidden_channels=self.hidden_channels,
            feature_channels=self.feature_channels,
            scale=self.scale,
            feature_seed=self.feature_seed,
            param_seed=self.param_seed,
            photometric=PhotometricConfig(
                lambda_l1=self.lambda_l1,
                lambda_ssim=self.lambda_ssim,
                ssim_window=self.ssim_window,
                mask_pad=self.mask_pad,
                literal_ssim_sign=self.literal_ssim_sign,
            ),
            step_cap=self.step_cap,
        )

    def fit(self, frames, masks=None):
        """Run the online optimization over the sequence; returns self."""
        session = OnlineFlowSession(self._config())
        if self.interval == 1:
            flows = session.run_streaming(frames, masks)
        else:
            flows = session.run_batched(frames, masks)
        self.session_ = session
        self.flows_ = flows
        self.records_ = session.records
        return self

    def predict(self, frames=None, masks=None):
        """Flow fields of the fitted sequence (refits when frames are given)."""
        if frames is not None:
            self.fit(frames, masks)
        check_is_fitted(self, "flows_")
        return self.flows_

    def fit_predict(self, frames, masks=None):
        return self.fit(frames, masks).flows_


class IntegrationRefiner(BaseEstimator):
    """Trainable gated fusion of probability maps with warped history.

    Parameters
    ----------
    epochs : int, full-batch gradient descent epochs.
    learning_rate : float, descent step size.
    use_gates : bool, keep the reconstruction-error confidence gates (False
        reproduces the ungated ablation).
    frame_channels : int, color channels of the frames feeding the gates.

    Attributes
    ----------
    params_ : IntegrationParams, the trained kernels.
    loss_curve_ : list of float, mean BCE after each epoch.
    """

    def __init__(self, epochs=150, learning_rate=0.1, use_gates=True,
                 frame_channels=3):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.use_gates = use_gates
        self.frame_channels = frame_channels

    def fit(self, X, y=None):
        """Train on IntegrationSample items; targets from y or the samples."""
        samples = self._with_targets(X, y)
        params = IntegrationParams.initial(self.frame_channels)
        curve = []
        for _ in range(self.epochs):
            params = train_integration(params, samples, epochs=1,
                                       lr=self.learning_rate,
                                       use_gates=self.use_gates)
            curve.append(integration_bce(params, samples, self.use_gates))
        self.params_ = params
        self.loss_curve_ = curve
        return self

    def predict(self, X):
        """Refined probability maps, one (H, W) array per sample."""
        check_is_fitted(self, "params_")
        return [integrate(self.params_, s.frame, s.prob, s.history, s.flow,
                          self.use_gates) for s in X]

    def score(self, X, y=None):
        """Mean IoU of the thresholded refined maps against the targets."""
        samples = self._with_targets(X, y)
        refined = self.predict(samples)
        return float(np.mean([iou(r > 0.5, s.target)
                              for r, s in zip(refined, samples)]))

    def save(self, path) -> None:
        check_is_fitted(self, "params_")
        self.params_.save(path)

    def load_params(self, path):
        self.params_ = IntegrationParams.load(path)
        return self

    @staticmethod
    def _with_targets(X, y):
        samples = list(X)
        if y is not None:
            targets = list(y)
            if len(targets) != len(samples):
                raise ValueError(
                    f"got {len(targets)} targets for {len(samples)} samples"
                )
            samples = [IntegrationSample(s.frame, s.prob, s.history, s.flow,
                                         target)
                       for s, target in zip(samples, targets)]
        for i, s in enumerate(samples):
            if s.target is None:
                raise ValueError(f"samples[{i}] has no target and y is None")
        return samples
