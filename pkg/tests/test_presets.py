import json

import numpy as np
import pytest
from click.testing import CliRunner

from flowfit.cli import main
from flowfit.presets import (PRESET_NAMES, corrupt_probability_map,
                             merge_object_maps, run_preset, strip_timing)

FAST_OVERRIDES = {
    "fig3-race": {"iterations": 5},
    "flow-sanity": {"frames": 3, "iterations": 2},
    "optimizer-sweep": {"n_seeds": 2, "iterations": 1},
    "integration-demo": {"n_sequences": 2, "n_train_sequences": 2,
                         "epochs": 10, "height": 32, "width": 32},
    "stream-vs-batch": {"frames": 4, "iterations": 1},
}


def test_unknown_preset_rejected():
    with pytest.raises(ValueError, match="unknown preset"):
        run_preset("does-not-exist")


def test_invalid_override_rejected():
    with pytest.raises(ValueError, match="invalid overrides"):
        run_preset("fig3-race", {"bogus_option": 1})


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_preset_determinism(name):
    first = run_preset(name, dict(FAST_OVERRIDES[name]))
    second = run_preset(name, dict(FAST_OVERRIDES[name]))
    dump_a = json.dumps(strip_timing(first), sort_keys=True)
    dump_b = json.dumps(strip_timing(second), sort_keys=True)
    assert dump_a == dump_b
    assert first["schema_version"] == 1
    assert "timing" in first


def test_flow_sanity_artifacts(tmp_path):
    out = tmp_path / "run"
    run_preset("flow-sanity", {"frames": 3, "iterations": 2}, out_dir=out)
    assert (out / "report.json").exists()
    assert sorted(p.name for p in (out / "flows").glob("*.flo")) == [
        "0000.flo", "0001.flo"]
    assert (out / "flows" / "0000.png").exists()
    assert (out / "masks" / "0000.png").exists()
    report = json.loads((out / "report.json").read_text())
    assert report["preset"] == "flow-sanity"
    summary = report["results"]["objects"][0]["summary"]
    assert summary["mean_rsd_psnr"] > summary["mean_no_warp_psnr"]


def test_integration_demo_writes_params(tmp_path):
    out = tmp_path / "demo"
    run_preset("integration-demo", dict(FAST_OVERRIDES["integration-demo"]),
               out_dir=out)
    assert (out / "integration_params.bin").exists()
    assert list((out / "masks").glob("*.png"))


def test_flow_sanity_loaded_input(tmp_path):
    from flowfit.sequence_io import write_image, write_mask
    from flowfit.synthetic import SyntheticSpec, synthesize_sequence
    bundle, _ = synthesize_sequence(SyntheticSpec(
        height=32, width=32, patch_height=16, patch_width=16,
        motions=((2.0, -1.0),), seed=5, smoothing_passes=3))
    seq_dir = tmp_path / "seq"
    (seq_dir / "masks").mkdir(parents=True)
    for i, frame in enumerate(bundle.frames):
        write_image(frame, seq_dir / f"{i:03d}.png")
        write_mask(bundle.masks[i], seq_dir / "masks" / f"{i:03d}.png")
    report = run_preset("flow-sanity", {"input_dir": str(seq_dir),
                                        "iterations": 2})
    rows = report["results"]["objects"][0]["pairs"]
    assert rows[0] is not None
    assert "rsd" in rows[0]
    assert report["config"]["input_dir"] == str(seq_dir)


def test_corrupt_probability_map_properties():
    rng = np.random.default_rng(0)
    mask = np.zeros((32, 32), dtype=bool)
    mask[8:24, 8:24] = True
    prob = corrupt_probability_map(mask, rng)
    assert prob.min() >= 0.02 and prob.max() <= 0.98
    from flowfit.metrics import iou
    assert iou(prob > 0.5, mask) < 1.0


def test_merge_object_maps():
    a = np.zeros((4, 4))
    b = np.zeros((4, 4))
    a[0, 0] = 0.9
    b[0, 0] = 0.7
    b[1, 1] = 0.8
    merged = merge_object_maps([a, b])
    assert merged[0, 0] == 1
    assert merged[1, 1] == 2
    assert merged[2, 2] == 0


def test_cli_run_writes_report(tmp_path):
    runner = CliRunner()
    out = tmp_path / "cli-out"
    result = runner.invoke(main, ["run", "fig3-race", "--seed", "1",
                                  "--iters", "4", "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert (out / "report.json").exists()
    summary = json.loads(result.output.strip())
    assert summary["preset"] == "fig3-race"


def test_cli_rejects_unknown_preset():
    runner = CliRunner()
    result = runner.invoke(main, ["run", "nonsense"])
    assert result.exit_code != 0


def test_cli_machine_readable_error():
    runner = CliRunner()
    result = runner.invoke(main, ["run", "flow-sanity", "--size", "13x13"],
                           mix_stderr=False)
    assert result.exit_code == 1
    err = json.loads(result.stderr.strip().splitlines()[-1])
    assert "error" in err and "type" in err


def test_cli_option_plumbing(tmp_path):
    runner = CliRunner()
    result = runner.invoke(main, [
        "run", "stream-vs-batch", "--interval", "1", "--iters", "1",
        "--size", "32x32", "--out", str(tmp_path / "svb")])
    assert result.exit_code == 0, result.output
    report = json.loads((tmp_path / "svb" / "report.json").read_text())
    assert report["config"]["interval"] == 1
    assert report["results"]["max_abs_discrepancy"] <= 1e-6
