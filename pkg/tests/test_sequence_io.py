import numpy as np
import pytest
from PIL import Image

from flowfit.sequence_io import load_sequence, write_image, write_mask


def make_sequence_dir(tmp_path, n_frames=3, size=(16, 20), masks=(0,),
                      mask_values=None):
    rng = np.random.default_rng(0)
    root = tmp_path / "seq"
    (root / "masks").mkdir(parents=True)
    for i in range(n_frames):
        img = (rng.uniform(size=(size[0], size[1], 3)) * 255).astype(np.uint8)
        Image.fromarray(img).save(root / f"{i:05d}.png")
    for i in masks:
        mask = np.zeros(size, dtype=np.uint8)
        if mask_values is None:
            mask[4:10, 5:12] = 1
        else:
            for v, (r, c) in mask_values:
                mask[r:r + 4, c:c + 4] = v
        write_mask(mask, root / "masks" / f"{i:05d}.png")
    return root


def test_load_basic_sequence(tmp_path):
    root = make_sequence_dir(tmp_path)
    bundle = load_sequence(root)
    assert len(bundle.frames) == 3
    assert bundle.frames[0].shape == (16, 20, 3)
    assert bundle.frames[0].min() >= 0.0 and bundle.frames[0].max() <= 1.0
    assert bundle.n_objects == 1
    assert bundle.masks[0] is not None
    assert bundle.masks[1] is None


def test_mask_indices_roundtrip(tmp_path):
    root = make_sequence_dir(tmp_path, masks=(0,),
                             mask_values=[(1, (2, 2)), (2, (10, 12))])
    bundle = load_sequence(root)
    assert bundle.n_objects == 2
    assert set(np.unique(bundle.masks[0])) == {0, 1, 2}
    assert bundle.object_mask(0, 2).sum() == 16


def test_resolution_mismatch_names_file(tmp_path):
    root = make_sequence_dir(tmp_path)
    bad = (np.zeros((8, 8, 3)) * 255).astype(np.uint8)
    Image.fromarray(bad).save(root / "00099.png")
    with pytest.raises(ValueError, match="00099"):
        load_sequence(root)


def test_missing_first_mask(tmp_path):
    root = make_sequence_dir(tmp_path, masks=(1,))
    with pytest.raises(ValueError, match="first frame"):
        load_sequence(root)


def test_missing_directory_and_empty(tmp_path):
    with pytest.raises(ValueError):
        load_sequence(tmp_path / "nope")
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(ValueError, match="no frame images"):
        load_sequence(empty)


def test_numeric_ordering(tmp_path):
    root = tmp_path / "seq"
    (root / "masks").mkdir(parents=True)
    values = {}
    for i in (10, 2, 1):
        img = np.full((4, 4, 3), i * 20, dtype=np.uint8)
        Image.fromarray(img).save(root / f"frame_{i}.png")
        values[i] = i * 20 / 255.0
    write_mask(np.ones((4, 4), dtype=np.uint8), root / "masks" / "frame_1.png")
    bundle = load_sequence(root)
    loaded = [f[0, 0, 0] for f in bundle.frames]
    assert loaded == pytest.approx([values[1], values[2], values[10]])


def test_write_image_roundtrip(tmp_path):
    img = np.linspace(0, 1, 64).reshape(8, 8)
    path = tmp_path / "img.png"
    write_image(img, path)
    back = np.asarray(Image.open(path), dtype=np.float64) / 255.0
    assert np.abs(back - img).max() <= 1.0 / 255.0


def test_ppm_frames_supported(tmp_path):
    root = tmp_path / "seq"
    (root / "masks").mkdir(parents=True)
    rng = np.random.default_rng(1)
    for i in range(2):
        img = (rng.uniform(size=(6, 6, 3)) * 255).astype(np.uint8)
        Image.fromarray(img).save(root / f"{i}.ppm")
    write_mask(np.ones((6, 6), dtype=np.uint8), root / "masks" / "0.png")
    bundle = load_sequence(root)
    assert len(bundle.frames) == 2
