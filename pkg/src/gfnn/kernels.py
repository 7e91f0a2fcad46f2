"""The fixed bank of 41 general-purpose 3x3 image-processing kernels.

The bank is the frozen first convolution layer of the GFNN architecture:
32 compass gradient operators (Roberts, Prewitt, Sobel, Frei-Chen, each in
8 orientations 45 degrees apart), one DCT basis kernel, two second-order
(Laplacian) operators, three sharpening kernels, one embossing kernel and
two blurring kernels.

Conventions used throughout the repository:

* Kernels are applied by cross-correlation (no flip), stride 1, zero
  padding 1, so compass direction names stay meaningful.
* Gradient-style families (compass, second-order, DCT) sum to 0: they give
  zero response on constant images.  Sharpen/emboss/blur sum to 1: they
  preserve constant images.
* The 8 orientations of a compass family come from rotating the 8 border
  cells of the base kernel clockwise, 45 degrees (one ring position) per
  step, keeping the center fixed.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .util import atomic_write_bytes, sha256_of_arrays

FAMILY_SHARPEN = "sharpen"
FAMILY_EMBOSS = "emboss"
FAMILY_BLUR = "blur"
FAMILY_ROBERTS = "roberts"
FAMILY_PREWITT = "prewitt"
FAMILY_SOBEL = "sobel"
FAMILY_FREI_CHEN = "frei_chen"
FAMILY_SECOND_ORDER = "second_order"
FAMILY_DCT = "dct"

ZERO_SUM_FAMILIES = frozenset(
    {FAMILY_ROBERTS, FAMILY_PREWITT, FAMILY_SOBEL, FAMILY_FREI_CHEN,
     FAMILY_SECOND_ORDER, FAMILY_DCT}
)
UNIT_SUM_FAMILIES = frozenset({FAMILY_SHARPEN, FAMILY_EMBOSS, FAMILY_BLUR})

# Expected composition of the canonical bank, in bank order.
BANK_FAMILY_COUNTS = {
    FAMILY_SHARPEN: 3,
    FAMILY_EMBOSS: 1,
    FAMILY_BLUR: 2,
    FAMILY_ROBERTS: 8,
    FAMILY_PREWITT: 8,
    FAMILY_SOBEL: 8,
    FAMILY_FREI_CHEN: 8,
    FAMILY_SECOND_ORDER: 2,
    FAMILY_DCT: 1,
}
BANK_SIZE = 41

# Border cells of a 3x3 grid in clockwise order, starting top-left.
# One ring step rotates every border coefficient 45 degrees clockwise.
RING = ((0, 0), (0, 1), (0, 2), (1, 2), (2, 2), (2, 1), (2, 0), (1, 0))

_SUM_TOL = 1e-9


@dataclass(frozen=True)
class Kernel:
    """A named 3x3 coefficient grid belonging to one kernel family."""

    name: str
    family: str
    coeffs: np.ndarray  # (3, 3) float64, read-only

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if coeffs.shape != (3, 3):
            raise DataError(
                f"kernel {self.name!r} must be 3x3, got shape {coeffs.shape}"
            )
        coeffs = coeffs.copy()
        coeffs.flags.writeable = False
        object.__setattr__(self, "coeffs", coeffs)
        total = float(coeffs.sum())
        if self.family in ZERO_SUM_FAMILIES and abs(total) > _SUM_TOL:
            raise DataError(
                f"{self.family} kernel {self.name!r} must sum to 0, got {total}"
            )
        if self.family in UNIT_SUM_FAMILIES and abs(total - 1.0) > _SUM_TOL:
            raise DataError(
                f"{self.family} kernel {self.name!r} must sum to 1, got {total}"
            )
        if self.family not in ZERO_SUM_FAMILIES | UNIT_SUM_FAMILIES:
            raise DataError(f"unknown kernel family {self.family!r}")


class KernelBank:
    """Ordered, validated collection of the 41 fixed kernels."""

    def __init__(self, kernels):
        self.kernels = tuple(kernels)
        self._validate()

    def _validate(self):
        if len(self.kernels) != BANK_SIZE:
            raise DataError(
                f"bank must hold {BANK_SIZE} kernels, got {len(self.kernels)}"
            )
        names = [k.name for k in self.kernels]
        if len(set(names)) != len(names):
            raise DataError("kernel names must be unique within a bank")
        counts = self.family_counts()
        if counts != BANK_FAMILY_COUNTS:
            raise DataError(f"bad family counts: {counts}")
        expected_order = (
            [FAMILY_ROBERTS] * 8 + [FAMILY_PREWITT] * 8 + [FAMILY_SOBEL] * 8
            + [FAMILY_FREI_CHEN] * 8 + [FAMILY_DCT] + [FAMILY_SECOND_ORDER] * 2
            + [FAMILY_SHARPEN] * 3 + [FAMILY_EMBOSS] + [FAMILY_BLUR] * 2
        )
        actual_order = [k.family for k in self.kernels]
        if actual_order != expected_order:
            raise DataError("bank order must be: 32 compass operators, "
                            "DCT, second order x2, sharpen x3, emboss, blur x2")

    def __len__(self):
        return len(self.kernels)

    def __iter__(self):
        return iter(self.kernels)

    def __getitem__(self, i):
        return self.kernels[i]

    def __eq__(self, other):
        if not isinstance(other, KernelBank):
            return NotImplemented
        return len(self) == len(other) and all(
            a.name == b.name and a.family == b.family
            and np.array_equal(a.coeffs, b.coeffs)
            for a, b in zip(self.kernels, other.kernels)
        )

    def family_counts(self):
        counts = {}
        for k in self.kernels:
            counts[k.family] = counts.get(k.family, 0) + 1
        return counts

    def weights(self):
        """Bank as a conv-weight tensor, shape (41, 1, 3, 3) float32.

        Kernel i maps to output channel i.
        """
        stack = np.stack([k.coeffs for k in self.kernels]).astype(np.float32)
        return stack[:, None, :, :]

    def digest(self):
        """32-byte identity of the bank's float32 weight values."""
        return sha256_of_arrays(self.weights())


def rotate_coeffs(coeffs, steps):
    """Rotate the 8 border cells of a 3x3 grid clockwise by `steps`
    positions (45 degrees each); the center cell stays put."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    out = coeffs.copy()
    steps = steps % 8
    for i, (y, x) in enumerate(RING):
        ty, tx = RING[(i + steps) % 8]
        out[ty, tx] = coeffs[y, x]
    return out


def rotate_ring(kernel, steps):
    """Kernel rotated `steps` ring positions clockwise (name kept)."""
    return Kernel(kernel.name, kernel.family, rotate_coeffs(kernel.coeffs, steps))


_SQRT2 = math.sqrt(2.0)

# Base (orientation 0) kernels of the compass families.  The other seven
# orientations are ring rotations of these.
ROBERTS_BASE = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]
PREWITT_BASE = [[-1.0, -1.0, -1.0], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]
SOBEL_BASE = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]]
FREI_CHEN_BASE = [[-1.0, -_SQRT2, -1.0], [0.0, 0.0, 0.0], [1.0, _SQRT2, 1.0]]

# Lowest mixed-frequency (non-DC) basis of the 3x3 2D DCT-II:
# coeffs[m][n] = cos(pi*(2m+1)/6) * cos(pi*(2n+1)/6).
DCT_BASIS = [[0.75, 0.0, -0.75], [0.0, 0.0, 0.0], [-0.75, 0.0, 0.75]]

LAPLACIAN_4 = [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]]
LAPLACIAN_8 = [[1.0, 1.0, 1.0], [1.0, -8.0, 1.0], [1.0, 1.0, 1.0]]

SHARPEN_4 = [[0.0, -1.0, 0.0], [-1.0, 5.0, -1.0], [0.0, -1.0, 0.0]]
SHARPEN_8 = [[-1.0, -1.0, -1.0], [-1.0, 9.0, -1.0], [-1.0, -1.0, -1.0]]
SHARPEN_DIAG = [[1.0, -2.0, 1.0], [-2.0, 5.0, -2.0], [1.0, -2.0, 1.0]]

EMBOSS = [[-2.0, -1.0, 0.0], [-1.0, 1.0, 1.0], [0.0, 1.0, 2.0]]

BLUR_BOX = [[1 / 9] * 3] * 3
BLUR_GAUSSIAN = [[1 / 16, 2 / 16, 1 / 16],
                 [2 / 16, 4 / 16, 2 / 16],
                 [1 / 16, 2 / 16, 1 / 16]]

_COMPASS_BASES = (
    (FAMILY_ROBERTS, ROBERTS_BASE),
    (FAMILY_PREWITT, PREWITT_BASE),
    (FAMILY_SOBEL, SOBEL_BASE),
    (FAMILY_FREI_CHEN, FREI_CHEN_BASE),
)


def build_bank():
    """Construct the canonical 41-kernel bank.

    Deterministic: two calls return bit-identical coefficient values.
    """
    kernels = []
    for family, base in _COMPASS_BASES:
        for step in range(8):
            kernels.append(
                Kernel(f"{family}_{step}", family, rotate_coeffs(base, step))
            )
    kernels.append(Kernel("dct", FAMILY_DCT, DCT_BASIS))
    kernels.append(Kernel("laplacian_4", FAMILY_SECOND_ORDER, LAPLACIAN_4))
    kernels.append(Kernel("laplacian_8", FAMILY_SECOND_ORDER, LAPLACIAN_8))
    kernels.append(Kernel("sharpen_4", FAMILY_SHARPEN, SHARPEN_4))
    kernels.append(Kernel("sharpen_8", FAMILY_SHARPEN, SHARPEN_8))
    kernels.append(Kernel("sharpen_diag", FAMILY_SHARPEN, SHARPEN_DIAG))
    kernels.append(Kernel("emboss", FAMILY_EMBOSS, EMBOSS))
    kernels.append(Kernel("blur_box", FAMILY_BLUR, BLUR_BOX))
    kernels.append(Kernel("blur_gaussian", FAMILY_BLUR, BLUR_GAUSSIAN))
    return KernelBank(kernels)


def apply_kernel(kernel, image):
    """Cross-correlate one kernel with a 2D image, zero padding 1.

    Output has the image's shape; out-of-range pixels read as 0.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise DataError(f"image must be 2D, got shape {image.shape}")
    if image.size == 0:
        raise DataError("empty input")
    h, w = image.shape
    padded = np.pad(image, 1)
    out = np.zeros((h, w), dtype=np.float64)
    for dy in range(3):
        for dx in range(3):
            out += kernel.coeffs[dy, dx] * padded[dy:dy + h, dx:dx + w]
    return out


def _normalized_tile(coeffs):
    """3x3 uint8 tile: kernel min -> 0, max -> 255, constant -> mid-gray."""
    lo = float(coeffs.min())
    hi = float(coeffs.max())
    if hi - lo < 1e-12:
        return np.full((3, 3), 128, dtype=np.uint8)
    scaled = (coeffs - lo) / (hi - lo) * 255.0
    return np.rint(scaled).astype(np.uint8)


def render_bank(bank, tile_scale=8, gutter=2, columns=8):
    """Grayscale grid of per-kernel tiles, brighter meaning a higher value.

    Tiles run left to right, top to bottom in bank order.  Each tile is
    normalized independently; each coefficient becomes a tile_scale-sized
    square of pixels.
    """
    if tile_scale < 1 or columns < 1 or gutter < 0:
        raise DataError("tile_scale and columns must be >= 1, gutter >= 0")
    n = len(bank)
    rows = -(-n // columns)
    tile_px = 3 * tile_scale
    height = rows * tile_px + (rows + 1) * gutter
    width = columns * tile_px + (columns + 1) * gutter
    img = np.zeros((height, width), dtype=np.uint8)
    for i, kernel in enumerate(bank):
        r, c = divmod(i, columns)
        tile = np.kron(_normalized_tile(kernel.coeffs),
                       np.ones((tile_scale, tile_scale), dtype=np.uint8))
        y = gutter + r * (tile_px + gutter)
        x = gutter + c * (tile_px + gutter)
        img[y:y + tile_px, x:x + tile_px] = tile
    return img


def write_pgm(path, image):
    """Write a 2D uint8 array as a binary PGM (P5, maxval 255)."""
    image = np.asarray(image)
    if image.ndim != 2 or image.dtype != np.uint8:
        raise DataError(f"PGM export needs a 2D uint8 array, got "
                        f"{image.dtype} {image.shape}")
    h, w = image.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + image.tobytes())


def read_pgm(path):
    """Read a binary PGM (P5, maxval 255) into a 2D uint8 array."""
    with open(path, "rb") as f:
        raw = f.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":  # comment runs to end of line
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise DataError(f"not a P5 PGM file: magic {tokens[0]!r}")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise DataError(f"unsupported PGM maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    pixels = raw[pos:pos + w * h]
    if len(pixels) != w * h:
        raise DataError("truncated PGM payload")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w)


def bank_to_json(bank):
    """Serialize a bank as a JSON array of {name, family, coeffs}."""
    entries = [
        {"name": k.name, "family": k.family, "coeffs": k.coeffs.tolist()}
        for k in bank
    ]
    return json.dumps(entries, indent=2)


def bank_from_json(text):
    """Inverse of bank_to_json, with full invariant validation."""
    try:
        entries = json.loads(text)
    except json.JSONDecodeError as e:
        raise DataError(f"bad bank JSON: {e}") from e
    if not isinstance(entries, list):
        raise DataError("bank JSON must be an array")
    kernels = []
    for entry in entries:
        try:
            kernels.append(Kernel(entry["name"], entry["family"],
                                  entry["coeffs"]))
        except (KeyError, TypeError) as e:
            raise DataError(f"bad bank JSON entry: {entry!r}") from e
    return KernelBank(kernels)
