import numpy as np
import pytest
from sklearn.base import clone

from flowfit.estimators import IntegrationRefiner, OnlineFlowEstimator
from flowfit.integration import HistoryState, IntegrationSample
from flowfit.synthetic import SyntheticSpec, synthesize_sequence


def small_sequence(seed=0, n_pairs=2):
    spec = SyntheticSpec(height=32, width=32, patch_height=16, patch_width=16,
                         motions=((1.5, -1.0),) * n_pairs, seed=seed,
                         smoothing_passes=3)
    bundle, _ = synthesize_sequence(spec)
    return bundle.frames, [m == 1 for m in bundle.masks]


def test_flow_estimator_sklearn_contract():
    est = OnlineFlowEstimator(iterations=2, hidden_channels=8,
                              feature_channels=8)
    params = est.get_params()
    assert params["iterations"] == 2
    cloned = clone(est)
    assert cloned.get_params() == params
    est.set_params(iterations=3)
    assert est.iterations == 3


def test_flow_estimator_fit_predict():
    frames, masks = small_sequence()
    est = OnlineFlowEstimator(iterations=2, hidden_channels=8,
                              feature_channels=8)
    flows = est.fit_predict(frames, masks)
    assert len(flows) == 2
    assert flows[0].shape == (32, 32, 2)
    assert est.predict() is flows
    assert 0 in est.records_


def test_flow_estimator_predict_requires_fit():
    est = OnlineFlowEstimator()
    with pytest.raises(Exception):
        est.predict()


def test_flow_estimator_batched_interval():
    frames, masks = small_sequence(seed=1, n_pairs=3)
    est = OnlineFlowEstimator(iterations=2, interval=2, hidden_channels=8,
                              feature_channels=8)
    flows = est.fit_predict(frames, masks)
    assert len(flows) == 3
    assert flows[2] is None  # deferred by the modulo rule


def refinement_dataset(seed, n=4):
    rng = np.random.default_rng(seed)
    samples, targets = [], []
    for _ in range(n):
        target = np.zeros((16, 16), dtype=bool)
        r, c = rng.integers(2, 6, size=2)
        target[r:r + 8, c:c + 8] = True
        clean = target * 0.9 + 0.05
        corrupted = np.clip(clean + rng.uniform(-0.6, 0.6, (16, 16)),
                            0.02, 0.98)
        frame = rng.uniform(size=(16, 16, 3))
        history = HistoryState(prob_1=clean, frame_1=frame, prob_2=clean,
                               frame_2=frame, flow_12=np.zeros((16, 16, 2)))
        samples.append(IntegrationSample(frame, corrupted, history,
                                         np.zeros((16, 16, 2))))
        targets.append(target)
    return samples, targets


def test_integration_refiner_fit_predict_score(tmp_path):
    samples, targets = refinement_dataset(seed=2)
    refiner = IntegrationRefiner(epochs=40, learning_rate=0.1)
    refiner.fit(samples, targets)
    assert len(refiner.loss_curve_) == 40
    maps = refiner.predict(samples)
    assert len(maps) == len(samples)
    assert maps[0].shape == (16, 16)
    score = refiner.score(samples, targets)
    assert 0.0 <= score <= 1.0

    path = tmp_path / "refiner.bin"
    refiner.save(path)
    other = IntegrationRefiner().load_params(path)
    for a, b in zip(maps, other.predict(samples)):
        np.testing.assert_array_equal(a, b)


def test_integration_refiner_requires_targets():
    samples, _ = refinement_dataset(seed=3)
    with pytest.raises(ValueError, match="target"):
        IntegrationRefiner(epochs=1).fit(samples)


def test_integration_refiner_clone():
    refiner = IntegrationRefiner(epochs=7, learning_rate=0.3, use_gates=False)
    params = clone(refiner).get_params()
    assert params["epochs"] == 7
    assert params["use_gates"] is False
