"""MNIST loading, deterministic splits, subsampling, and a synthetic
stand-in dataset so the test suite never needs a download.

File conventions (big-endian IDX, magics 2051/2049) follow the published
MNIST distribution: `train-images-idx3-ubyte`, `train-labels-idx1-ubyte`,
`t10k-images-idx3-ubyte`, `t10k-labels-idx1-ubyte`, each optionally
gzip-compressed with a `.gz` suffix.
"""

import gzip
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, IdxFormatError
from .util import sha256_of_arrays

IMAGE_MAGIC = 2051  # 0x00000803
LABEL_MAGIC = 2049  # 0x00000801
IMAGE_SIDE = 28
NUM_CLASSES = 10

TRAIN_SIZE = 55000
VAL_SIZE = 5000

IMAGE_FILES = {"train": "train-images-idx3-ubyte", "t10k": "t10k-images-idx3-ubyte"}
LABEL_FILES = {"train": "train-labels-idx1-ubyte", "t10k": "t10k-labels-idx1-ubyte"}


@dataclass
class Dataset:
    """Images as 8-bit grayscale 28x28 grids with integer labels."""

    images: np.ndarray  # (N, 28, 28) uint8
    labels: np.ndarray  # (N,) int64 in [0, 9]
    name: str = "dataset"

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.uint8)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.images.ndim != 3 or self.images.shape[1:] != (IMAGE_SIDE, IMAGE_SIDE):
            raise DataError(f"images must be (N, 28, 28), got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise DataError(
                f"{self.images.shape[0]} images but {self.labels.shape[0]} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= NUM_CLASSES):
            raise DataError("labels must lie in [0, 9]")

    def __len__(self):
        return self.images.shape[0]

    def subset(self, indices, name=None):
        return Dataset(self.images[indices], self.labels[indices],
                       name or self.name)

    def digest(self):
        """32-byte identity of the raw image and label bytes."""
        return sha256_of_arrays(self.images, self.labels)


@dataclass
class Split:
    train: Dataset
    validation: Dataset


def _read_file(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == b"\x1f\x8b":  # gzip
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw, expected_magic, path):
    if len(raw) < 4:
        raise IdxFormatError(f"{path}: file too short for an IDX header")
    (magic,) = struct.unpack(">i", raw[:4])
    if magic != expected_magic:
        raise IdxFormatError(
            f"{path}: magic {magic}, expected {expected_magic}"
        )
    ndim = magic & 0xFF
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise IdxFormatError(f"{path}: truncated dimension header")
    dims = struct.unpack(f">{ndim}i", raw[4:header_len])
    payload = raw[header_len:]
    expected = int(np.prod(dims))
    if len(payload) != expected:
        raise IdxFormatError(
            f"{path}: payload holds {len(payload)} bytes, expected {expected}"
        )
    return dims, np.frombuffer(payload, dtype=np.uint8)


def load_idx(images_path, labels_path, name=None):
    """Load a paired IDX image/label file set into a Dataset.

    Accepts plain or gzip-compressed files.  Raises IdxFormatError for a
    wrong magic number, truncated payload, or mismatched pair counts.
    """
    img_dims, img_bytes = _parse_idx(_read_file(images_path), IMAGE_MAGIC,
                                     images_path)
    lbl_dims, lbl_bytes = _parse_idx(_read_file(labels_path), LABEL_MAGIC,
                                     labels_path)
    if img_dims[1:] != (IMAGE_SIDE, IMAGE_SIDE):
        raise IdxFormatError(f"{images_path}: expected 28x28 images, "
                             f"got {img_dims[1]}x{img_dims[2]}")
    if img_dims[0] != lbl_dims[0]:
        raise IdxFormatError(
            f"{images_path} holds {img_dims[0]} images but {labels_path} "
            f"holds {lbl_dims[0]} labels"
        )
    images = img_bytes.reshape(img_dims)
    return Dataset(images, lbl_bytes.astype(np.int64),
                   name or os.path.basename(str(images_path)))


def _find(data_dir, basename):
    for candidate in (basename, basename + ".gz"):
        path = os.path.join(data_dir, candidate)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(
        f"missing {basename}[.gz] under {data_dir}"
    )


def load_mnist(data_dir, which="train"):
    """Load the `train` (60000) or `t10k` (10000) MNIST file pair from a
    directory following the standard file-name convention."""
    if which not in IMAGE_FILES:
        raise DataError(f"which must be 'train' or 't10k', got {which!r}")
    images = _find(data_dir, IMAGE_FILES[which])
    labels = _find(data_dir, LABEL_FILES[which])
    return load_idx(images, labels, name=f"mnist-{which}")


def split_train_val(dataset):
    """Deterministic partition of the 60000-image training file: the first
    55000 samples (file order) train, the last 5000 validate."""
    if len(dataset) != TRAIN_SIZE + VAL_SIZE:
        raise DataError(
            f"split requires exactly {TRAIN_SIZE + VAL_SIZE} samples, "
            f"got {len(dataset)}"
        )
    train = dataset.subset(slice(0, TRAIN_SIZE), name=dataset.name + "-train")
    val = dataset.subset(slice(TRAIN_SIZE, None), name=dataset.name + "-val")
    return Split(train, val)


# --- seeded subsampling -------------------------------------------------
#
# Index selection uses a SplitMix64 stream so that ports in any language
# reproduce identical subsets from the same seed:
#
#   state    <- (state + 0x9E3779B97F4A7C15) mod 2^64   per draw
#   z        <- state
#   z        <- (z xor (z >> 30)) * 0xBF58476D1CE4E5B9  mod 2^64
#   z        <- (z xor (z >> 27)) * 0x94D049BB133111EB  mod 2^64
#   output   <- z xor (z >> 31)
#
# Selection is a partial Fisher-Yates shuffle of [0, size): at step i the
# swap partner is i + output_i mod (size - i); the first n slots are the
# sample, in draw order.

_MASK64 = (1 << 64) - 1
SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
SPLITMIX_MUL1 = 0xBF58476D1CE4E5B9
SPLITMIX_MUL2 = 0x94D049BB133111EB


class SplitMix64:
    """The 64-bit SplitMix stream used for reproducible subsampling."""

    def __init__(self, seed):
        self.state = seed & _MASK64

    def next(self):
        self.state = (self.state + SPLITMIX_GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * SPLITMIX_MUL1) & _MASK64
        z = ((z ^ (z >> 27)) * SPLITMIX_MUL2) & _MASK64
        return z ^ (z >> 31)


def subsample_indices(size, n, seed):
    """First n slots of a SplitMix64-driven partial Fisher-Yates shuffle."""
    if n > size:
        raise DataError(f"cannot draw {n} samples from {size}")
    stream = SplitMix64(seed)
    idx = list(range(size))
    for i in range(n):
        j = i + stream.next() % (size - i)
        idx[i], idx[j] = idx[j], idx[i]
    return np.asarray(idx[:n], dtype=np.int64)


def subsample(dataset, n, seed):
    """Draw n samples without replacement, reproducibly across platforms."""
    indices = subsample_indices(len(dataset), n, seed)
    return dataset.subset(indices, name=f"{dataset.name}-sub{n}")


def normalize(dataset):
    """Map 8-bit intensities to [0, 1] float32, shaped (N, 28, 28, 1)."""
    scaled = dataset.images.astype(np.float32) / np.float32(255.0)
    return scaled[:, :, :, None]


# --- synthetic stand-in dataset ------------------------------------------
#
# Seven-segment style digits rendered procedurally: enough class structure
# for a network to learn, zero download requirements.  Jitter per sample:
# integer translation up to 3 px and stroke thickness 1..3.

_TOP, _MID, _BOT = 5, 13, 21
_LEFT, _RIGHT = 9, 18

# (y0, x0, y1, x1) per segment, axis-aligned
_SEGMENTS = {
    "A": (_TOP, _LEFT, _TOP, _RIGHT),
    "B": (_TOP, _RIGHT, _MID, _RIGHT),
    "C": (_MID, _RIGHT, _BOT, _RIGHT),
    "D": (_BOT, _LEFT, _BOT, _RIGHT),
    "E": (_MID, _LEFT, _BOT, _LEFT),
    "F": (_TOP, _LEFT, _MID, _LEFT),
    "G": (_MID, _LEFT, _MID, _RIGHT),
}

_DIGIT_SEGMENTS = {
    0: "ABCDEF",
    1: "BC",
    2: "ABGED",
    3: "ABGCD",
    4: "FGBC",
    5: "AFGCD",
    6: "AFGECD",
    7: "ABC",
    8: "ABCDEFG",
    9: "ABCDFG",
}


def _draw_segment(img, seg, dy, dx, thickness):
    y0, x0, y1, x1 = seg
    y0, y1 = y0 + dy, y1 + dy
    x0, x1 = x0 + dx, x1 + dx
    half = thickness // 2
    lo = lambda v: max(0, v)
    hi = lambda v: min(IMAGE_SIDE, v)
    if y0 == y1:  # horizontal
        img[lo(y0 - half):hi(y0 - half + thickness), lo(x0):hi(x1 + 1)] = 255
    else:  # vertical
        img[lo(y0):hi(y1 + 1), lo(x0 - half):hi(x0 - half + thickness)] = 255


def render_digit(digit, dy=0, dx=0, thickness=1):
    """One 28x28 seven-segment glyph with the given jitter."""
    img = np.zeros((IMAGE_SIDE, IMAGE_SIDE), dtype=np.uint8)
    for name in _DIGIT_SEGMENTS[digit]:
        _draw_segment(img, _SEGMENTS[name], dy, dx, thickness)
    return img


def synthetic_digits(n, seed):
    """Procedural dataset of n jittered glyphs, classes balanced.

    Classes repeat round-robin (0,1,...,9,0,1,...), so any prefix whose
    length is a multiple of 10 is exactly balanced.  Identical (n, seed)
    always produce a bit-identical dataset.
    """
    if n < 1:
        raise DataError(f"need at least 1 sample, got {n}")
    rng = np.random.default_rng((seed, 0x5E6))
    images = np.zeros((n, IMAGE_SIDE, IMAGE_SIDE), dtype=np.uint8)
    labels = np.arange(n, dtype=np.int64) % NUM_CLASSES
    for i in range(n):
        dy, dx = (int(v) for v in rng.integers(-3, 4, size=2))
        thickness = int(rng.integers(1, 4))
        images[i] = render_digit(int(labels[i]), dy, dx, thickness)
    return Dataset(images, labels, name=f"synthetic-{n}-seed{seed}")


def synthetic_split(train_n, val_n, seed):
    """Synthetic train/validation pair drawn from one generator stream."""
    ds = synthetic_digits(train_n + val_n, seed)
    return Split(ds.subset(slice(0, train_n), name=ds.name + "-train"),
                 ds.subset(slice(train_n, None), name=ds.name + "-val"))
