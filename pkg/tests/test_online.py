import numpy as np
import pytest

from flowfit.online import OnlineFlowConfig, OnlineFlowSession, run_batched, \
    run_streaming
from flowfit.photometric import PhotometricConfig
from flowfit.synthetic import SyntheticSpec, synthesize_sequence

QUICK = OnlineFlowConfig(iterations=2, hidden_channels=8, feature_channels=8)


def make_sequence(n_pairs, seed=0, motion=(1.5, -1.0)):
    spec = SyntheticSpec(height=32, width=32, patch_height=16, patch_width=16,
                         motions=tuple([motion] * n_pairs), seed=seed,
                         smoothing_passes=3)
    bundle, flows = synthesize_sequence(spec)
    masks = [m == 1 for m in bundle.masks]
    return bundle.frames, masks


def test_two_frames_one_flow():
    frames, masks = make_sequence(1)
    session = OnlineFlowSession(QUICK)
    flows = session.run_streaming(frames, masks)
    assert len(flows) == 1
    assert flows[0].shape == (32, 32, 2)


def test_each_frame_featurized_exactly_once():
    frames, masks = make_sequence(4)
    session = OnlineFlowSession(QUICK)
    flows = session.run_streaming(frames, masks)
    assert len(flows) == 4
    assert session.feature_evals == 5

    session = OnlineFlowSession(QUICK)
    session.run_batched(frames, masks, interval=2)
    assert session.feature_evals == 5


def test_identical_frames_give_near_zero_flow():
    rng = np.random.default_rng(1)
    frame = rng.uniform(size=(32, 32, 3))
    frames = [frame, frame.copy(), frame.copy()]
    mask = np.zeros((32, 32), dtype=bool)
    mask[8:24, 8:24] = True
    session = OnlineFlowSession(QUICK)
    flows = session.run_streaming(frames, [mask] * 3)
    for flow in flows:
        assert np.abs(flow[mask]).mean() < 0.1


def test_batched_interval_one_equals_streaming():
    frames, masks = make_sequence(5, seed=2)
    stream = OnlineFlowSession(QUICK).run_streaming(frames, masks)
    batch = OnlineFlowSession(QUICK).run_batched(frames, masks, interval=1)
    assert all(f is not None for f in batch)
    for s, b in zip(stream, batch):
        assert np.abs(s - b).max() <= 1e-6


def simulate_batched_schedule(n_frames, interval):
    """Hand simulation of the interval-batched loop's emission schedule."""
    emitted = []
    for t in range(n_frames):
        if t == 0 or t % interval != 0:
            continue
        for i in range(1, interval + 1):
            emitted.append(t - i)
    return sorted(emitted)


def test_batched_schedule_matches_trace_oracle():
    # 5 frames, interval 2: updates fire at t=2 and t=4, covering all pairs.
    frames, masks = make_sequence(4, seed=3)
    flows = OnlineFlowSession(QUICK).run_batched(frames, masks, interval=2)
    emitted = [i for i, f in enumerate(flows) if f is not None]
    assert emitted == simulate_batched_schedule(5, 2) == [0, 1, 2, 3]

    # 6 frames, interval 2: the trailing pair (5, 4) is deferred for good.
    frames, masks = make_sequence(5, seed=4)
    flows = OnlineFlowSession(QUICK).run_batched(frames, masks, interval=2)
    emitted = [i for i, f in enumerate(flows) if f is not None]
    assert emitted == simulate_batched_schedule(6, 2) == [0, 1, 2, 3]
    assert flows[4] is None


def test_batched_interval_larger_than_sequence():
    frames, masks = make_sequence(3, seed=5)
    session = OnlineFlowSession(QUICK)
    flows = session.run_batched(frames, masks, interval=10)
    assert all(f is None for f in flows)
    assert session.records == {}


def test_share_params_persists_state():
    frames, masks = make_sequence(3, seed=6)
    shared_cfg = OnlineFlowConfig(iterations=2, hidden_channels=8,
                                  feature_channels=8, share_params=True)
    session = OnlineFlowSession(shared_cfg)
    session.run_streaming(frames, masks)
    assert session._shared is not None


def test_sequence_validation():
    session = OnlineFlowSession(QUICK)
    with pytest.raises(ValueError):
        session.run_streaming([np.zeros((32, 32, 3))])
    frames = [np.zeros((32, 32, 3)), np.zeros((16, 16, 3))]
    with pytest.raises(ValueError):
        session.run_streaming(frames)
    frames, masks = make_sequence(1, seed=7)
    with pytest.raises(ValueError):
        session.run_streaming(frames, masks[:1])


def test_module_level_wrappers():
    frames, masks = make_sequence(1, seed=8)
    session = OnlineFlowSession(QUICK)
    flows = run_streaming(session, frames, masks)
    assert len(flows) == 1
    session = OnlineFlowSession(QUICK)
    flows = run_batched(session, frames, masks, interval=1)
    assert len(flows) == 1


def test_balanced_preset_interval_two():
    cfg = OnlineFlowConfig.balanced()
    assert cfg.interval == 2
    assert cfg.iterations == 2


def test_loss_decreases_over_first_iterations():
    # Empirical oracle over seeded trials: the masked loss strictly
    # decreases for at least the first two updates in >= 90% of runs.
    decreasing = 0
    n_trials = 50
    for seed in range(n_trials):
        spec = SyntheticSpec(seed=seed, motions=((3.0, -2.0),),
                             patch_height=48, patch_width=48,
                             smoothing_passes=3)
        bundle, _ = synthesize_sequence(spec)
        masks = [m == 1 for m in bundle.masks]
        session = OnlineFlowSession(OnlineFlowConfig(
            iterations=3, photometric=PhotometricConfig(mask_pad=4)))
        session.run_streaming(bundle.frames, masks)
        records = session.records[0]
        if (len(records) >= 3 and records[1].loss < records[0].loss
                and records[2].loss < records[1].loss):
            decreasing += 1
    assert decreasing >= 0.9 * n_trials
