import math

import numpy as np
import pytest
from PIL import Image

from istdkit.dataset_io import (
    DatasetError,
    LabeledSample,
    dataset_stats,
    load_dataset,
    load_gray_png,
    load_mask_png,
    save_gray_png,
    save_sample,
)


def write_pair(root, name, image, mask):
    (root / "images").mkdir(exist_ok=True, parents=True)
    (root / "masks").mkdir(exist_ok=True, parents=True)
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="L").save(root / "images" / f"{name}.png")
    Image.fromarray(np.asarray(mask, dtype=np.uint8), mode="L").save(root / "masks" / f"{name}.png")


def blob_mask(h, w, y, x, size):
    m = np.zeros((h, w), dtype=np.uint8)
    m[y : y + size, x : x + size] = 255
    return m


def test_load_dataset_sorted_ids(tmp_path):
    rng = np.random.default_rng(0)
    for name in ["c", "a", "b"]:
        write_pair(tmp_path, name, rng.integers(0, 256, (6, 5)), blob_mask(6, 5, 1, 1, 2))
    samples = load_dataset(tmp_path)
    assert [s.id for s in samples] == ["a", "b", "c"]
    assert all(s.width == 5 and s.height == 6 for s in samples)


def test_load_dataset_orphan_image_named(tmp_path):
    write_pair(tmp_path, "a", np.zeros((4, 4)), np.zeros((4, 4)))
    (tmp_path / "masks" / "a.png").unlink()
    with pytest.raises(DatasetError, match="a"):
        load_dataset(tmp_path)


def test_load_dataset_dimension_mismatch_named(tmp_path):
    (tmp_path / "images").mkdir(parents=True)
    (tmp_path / "masks").mkdir(parents=True)
    Image.fromarray(np.zeros((4, 4), dtype=np.uint8), mode="L").save(tmp_path / "images" / "bad.png")
    Image.fromarray(np.zeros((5, 4), dtype=np.uint8), mode="L").save(tmp_path / "masks" / "bad.png")
    with pytest.raises(DatasetError, match="bad"):
        load_dataset(tmp_path)


def test_load_dataset_rejects_multichannel(tmp_path):
    (tmp_path / "images").mkdir(parents=True)
    (tmp_path / "masks").mkdir(parents=True)
    Image.new("RGB", (4, 4)).save(tmp_path / "images" / "a.png")
    Image.new("L", (4, 4)).save(tmp_path / "masks" / "a.png")
    with pytest.raises(DatasetError, match="mode"):
        load_dataset(tmp_path)


def test_load_dataset_standard_frame_size(tmp_path):
    # benchmark-style frames arrive as 540x420 and must round-trip those dims
    img = np.zeros((420, 540), dtype=np.uint8)
    write_pair(tmp_path, "frame", img, blob_mask(420, 540, 10, 10, 3))
    (sample,) = load_dataset(tmp_path)
    assert sample.width == 540
    assert sample.height == 420


def test_mask_binarisation_threshold(tmp_path):
    mask_values = np.array([[0, 127, 128, 255]], dtype=np.uint8)
    write_pair(tmp_path, "t", np.zeros((1, 4), dtype=np.uint8), mask_values)
    (sample,) = load_dataset(tmp_path)
    assert sample.mask.tolist() == [[False, False, True, True]]


def test_dataset_stats_constant_image():
    s = LabeledSample("s", np.full((2, 2), 100.0), np.zeros((2, 2), bool))
    stats = dataset_stats([s])
    assert stats.sample_count == 1
    assert stats.mean_intensity == pytest.approx(100.0, abs=0)


def test_dataset_stats_two_point_average():
    a = LabeledSample("a", np.array([[0.0]]), np.zeros((1, 1), bool))
    b = LabeledSample("b", np.array([[255.0]]), np.zeros((1, 1), bool))
    assert dataset_stats([a, b]).mean_intensity == pytest.approx(127.5, abs=0)


def test_dataset_stats_direct_sum_oracle():
    pixels = np.array([[10.0, 20.0], [30.0, 40.0]])
    s = LabeledSample("s", pixels, np.zeros((2, 2), bool))
    # oracle: plain sum over the listed pixels
    expected = (10.0 + 20.0 + 30.0 + 40.0) / 4.0
    assert dataset_stats([s]).mean_intensity == pytest.approx(expected, abs=0)
    assert expected == 25.0


def test_dataset_stats_permutation_invariant_and_weighted_mean():
    rng = np.random.default_rng(7)
    samples = []
    for i in range(10):
        shape = (int(rng.integers(1, 9)), int(rng.integers(1, 9)))
        samples.append(LabeledSample(f"s{i}", rng.uniform(0, 255, shape), np.zeros(shape, bool)))
    forward = dataset_stats(samples)
    backward = dataset_stats(list(reversed(samples)))
    assert forward.mean_intensity == backward.mean_intensity

    # brute-force oracle: flat sum over every pixel of every image
    flat = np.concatenate([s.image.ravel() for s in samples])
    brute = math.fsum(flat.tolist()) / flat.size
    assert forward.mean_intensity == pytest.approx(brute, rel=1e-9)


def test_dataset_stats_empty_list():
    with pytest.raises(DatasetError):
        dataset_stats([])


def test_save_load_round_trip_integer_pixels(tmp_path):
    rng = np.random.default_rng(3)
    image = rng.integers(0, 256, (7, 9)).astype(np.float64)
    mask = rng.random((7, 9)) > 0.6
    sample = LabeledSample("rt", image, mask)
    save_sample(sample, tmp_path)
    (loaded,) = load_dataset(tmp_path)
    assert np.array_equal(loaded.image, image)
    assert np.array_equal(loaded.mask, mask)


def test_save_quantisation_round_half_to_even(tmp_path):
    image = np.array([[100.5, 101.5]])
    save_gray_png(tmp_path / "q.png", image)
    stored = load_gray_png(tmp_path / "q.png")
    assert stored.tolist() == [[100.0, 102.0]]


def test_mask_round_trip_is_exact(tmp_path):
    mask = np.array([[True, False], [False, True]])
    sample = LabeledSample("m", np.zeros((2, 2)), mask)
    save_sample(sample, tmp_path)
    assert np.array_equal(load_mask_png(tmp_path / "masks" / "m.png"), mask)


def test_sample_rejects_mismatched_shapes():
    with pytest.raises(DatasetError):
        LabeledSample("x", np.zeros((2, 2)), np.zeros((3, 2), bool))


def test_image_validation_range():
    with pytest.raises(DatasetError):
        LabeledSample("x", np.full((2, 2), 300.0), np.zeros((2, 2), bool))
