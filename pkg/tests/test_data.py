"""Dataset tests: IDX parsing against hand-built fixture bytes, the
deterministic split, the pinned subsampling stream, normalization, and
the synthetic glyphs."""

import gzip
import struct

import numpy as np
import pytest

from gfnn.data import (Dataset, SplitMix64, load_idx, load_mnist, normalize,
                       render_digit, split_train_val, subsample,
                       subsample_indices, synthetic_digits, synthetic_split)
from gfnn.errors import DataError, IdxFormatError

# Reference outputs of the published 64-bit mix function, generated by an
# independent C implementation of the same constants (see the stream
# documentation in gfnn.data).  Frozen: any change to the generator is a
# compatibility break.
SPLITMIX_SEED0_FIRST6 = [
    0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F,
    0xF88BB8A8724C81EC, 0x1B39896A51A8749B, 0x53CB9F0C747EA2EA,
]
SPLITMIX_SEED42_FIRST3 = [
    0xBDD732262FEB6E95, 0x28EFE333B266F103, 0x47526757130F9F52,
]
# partial Fisher-Yates of [0,8) drawing 4 with seed 7, from the same C run
SUBSAMPLE_8_4_SEED7 = [7, 4, 2, 6]


def _idx_images_bytes(images):
    n, h, w = images.shape
    return struct.pack(">iiii", 2051, n, h, w) + images.tobytes()


def _idx_labels_bytes(labels):
    return struct.pack(">ii", 2049, len(labels)) + bytes(labels)


@pytest.fixture
def fixture_pair(tmp_path):
    """Two 28x28 images with labels [3, 7], bytes packed by hand."""
    rng = np.random.default_rng(99)
    images = rng.integers(0, 256, (2, 28, 28), dtype=np.uint8)
    labels = [3, 7]
    img_path = tmp_path / "imgs"
    lbl_path = tmp_path / "lbls"
    img_path.write_bytes(_idx_images_bytes(images))
    lbl_path.write_bytes(_idx_labels_bytes(labels))
    return img_path, lbl_path, images, labels


def test_load_idx_round_trips_fixture_bytes(fixture_pair):
    img_path, lbl_path, images, labels = fixture_pair
    ds = load_idx(img_path, lbl_path)
    assert len(ds) == 2
    assert np.array_equal(ds.images, images)
    assert np.array_equal(ds.labels, labels)


def test_load_idx_transparent_gzip(tmp_path, fixture_pair):
    img_path, lbl_path, images, labels = fixture_pair
    gz_img = tmp_path / "imgs.gz"
    gz_lbl = tmp_path / "lbls.gz"
    gz_img.write_bytes(gzip.compress(img_path.read_bytes()))
    gz_lbl.write_bytes(gzip.compress(lbl_path.read_bytes()))
    ds = load_idx(gz_img, gz_lbl)
    assert np.array_equal(ds.images, images)
    assert np.array_equal(ds.labels, labels)


def test_load_idx_rejects_swapped_files(fixture_pair):
    img_path, lbl_path, _, _ = fixture_pair
    with pytest.raises(IdxFormatError, match="2049"):
        load_idx(lbl_path, lbl_path)
    with pytest.raises(IdxFormatError, match="2051"):
        load_idx(lbl_path, img_path)


def test_load_idx_rejects_truncated_payload(tmp_path, fixture_pair):
    img_path, lbl_path, _, _ = fixture_pair
    clipped = tmp_path / "clipped"
    clipped.write_bytes(img_path.read_bytes()[:-10])
    with pytest.raises(IdxFormatError, match="payload"):
        load_idx(clipped, lbl_path)


def test_load_idx_rejects_count_mismatch(tmp_path, fixture_pair):
    img_path, _, _, _ = fixture_pair
    three = tmp_path / "three"
    three.write_bytes(_idx_labels_bytes([1, 2, 3]))
    with pytest.raises(IdxFormatError, match=r"2 images but .* 3 labels"):
        load_idx(img_path, three)


def test_load_idx_rejects_non_28x28(tmp_path):
    imgs = tmp_path / "small"
    imgs.write_bytes(struct.pack(">iiii", 2051, 2, 2, 2) + bytes(8))
    lbls = tmp_path / "lbl"
    lbls.write_bytes(_idx_labels_bytes([0, 1]))
    with pytest.raises(IdxFormatError, match="28x28"):
        load_idx(imgs, lbls)


def test_load_mnist_names_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="train-images-idx3-ubyte"):
        load_mnist(tmp_path, "train")


def test_dataset_invariants():
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 28, 28), np.uint8), np.zeros(3, np.int64))
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 28, 28), np.uint8), np.array([0, 10]))
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 14, 14), np.uint8), np.array([0, 1]))


def test_split_train_val_partition():
    images = np.zeros((60000, 28, 28), dtype=np.uint8)
    images[:, 0, 0] = (np.arange(60000) % 251).astype(np.uint8)
    labels = (np.arange(60000) % 10).astype(np.int64)
    split = split_train_val(Dataset(images, labels, name="full"))
    assert len(split.train) == 55000
    assert len(split.validation) == 5000
    # order-preserving: sample 0 of train is sample 0 of the source
    assert split.train.images[0, 0, 0] == images[0, 0, 0]
    assert np.array_equal(split.train.labels, labels[:55000])
    assert np.array_equal(split.validation.labels, labels[55000:])


def test_split_train_val_requires_60000():
    ds = synthetic_digits(100, 0)
    with pytest.raises(DataError, match="60000"):
        split_train_val(ds)


def test_splitmix_stream_matches_reference():
    s = SplitMix64(0)
    assert [s.next() for _ in range(6)] == SPLITMIX_SEED0_FIRST6
    s = SplitMix64(42)
    assert [s.next() for _ in range(3)] == SPLITMIX_SEED42_FIRST3


def test_subsample_indices_match_reference():
    assert subsample_indices(8, 4, 7).tolist() == SUBSAMPLE_8_4_SEED7


def test_subsample_properties():
    ds = synthetic_digits(50, 1)
    sub = subsample(ds, 20, seed=5)
    assert len(sub) == 20
    again = subsample(ds, 20, seed=5)
    assert np.array_equal(sub.images, again.images)
    assert np.array_equal(sub.labels, again.labels)
    # full-size draw is a permutation
    perm = subsample_indices(50, 50, seed=9)
    assert sorted(perm.tolist()) == list(range(50))
    with pytest.raises(DataError):
        subsample(ds, 51, seed=0)


def test_subsample_differs_across_seeds():
    assert (subsample_indices(1000, 10, 1).tolist()
            != subsample_indices(1000, 10, 2).tolist())


def test_normalize_exact_values_and_shape():
    images = np.zeros((1, 28, 28), dtype=np.uint8)
    images[0, 0, 0] = 255
    images[0, 0, 1] = 51
    x = normalize(Dataset(images, np.array([0])))
    assert x.shape == (1, 28, 28, 1)
    assert x.dtype == np.float32
    assert x[0, 0, 0, 0] == np.float32(1.0)
    assert x[0, 0, 1, 0] == np.float32(0.2)  # 51/255 is exactly 1/5
    assert x[0, 1, 0, 0] == np.float32(0.0)


def test_normalize_is_monotone():
    images = np.arange(256, dtype=np.uint8).reshape(1, 16, 16)
    pad = np.zeros((1, 28, 28), dtype=np.uint8)
    pad[0, :16, :16] = images
    x = normalize(Dataset(pad, np.array([0])))
    flat = x[0, :16, :16, 0].reshape(-1)
    assert np.all(np.diff(flat) > 0)


def test_synthetic_balance_and_determinism():
    ds = synthetic_digits(100, 4)
    counts = np.bincount(ds.labels, minlength=10)
    assert np.all(counts == 10)
    again = synthetic_digits(100, 4)
    assert ds.digest() == again.digest()
    other = synthetic_digits(100, 5)
    assert ds.digest() != other.digest()


def test_synthetic_prefix_balance():
    # round-robin classes: any multiple-of-10 prefix is balanced, which
    # the train/validation split relies on
    ds = synthetic_digits(400, 0)
    assert np.all(np.bincount(ds.labels[:200], minlength=10) == 20)
    assert np.all(np.bincount(ds.labels[200:], minlength=10) == 20)


def test_synthetic_rejects_zero_samples():
    with pytest.raises(DataError):
        synthetic_digits(0, 0)


def test_synthetic_glyphs_distinct_by_class():
    base = {d: render_digit(d).tobytes() for d in range(10)}
    assert len(set(base.values())) == 10


def test_synthetic_jitter_stays_in_frame():
    ds = synthetic_digits(500, 11)
    assert ds.images.max() == 255
    assert ds.images.min() == 0
    # strokes never touch the outermost pixel ring even at max jitter
    assert ds.images[:, 0, :].max() == 0
    assert ds.images[:, -1, :].max() == 0


def test_synthetic_split_sizes():
    split = synthetic_split(300, 100, 2)
    assert len(split.train) == 300
    assert len(split.validation) == 100
    assert np.all(np.bincount(split.train.labels, minlength=10) == 30)
    assert np.all(np.bincount(split.validation.labels, minlength=10) == 10)
