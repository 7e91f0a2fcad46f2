#!/usr/bin/env python3
"""Push one digit through the fixed first layer and save the 41 response
maps as a single contact sheet.  Shows what each filter family actually
extracts: compass kernels light up on strokes of one orientation, the
Laplacians on stroke boundaries, the blurs on the glyph body."""

import os
import sys

import numpy as np

from gfnn.data import normalize, synthetic_digits
from gfnn.kernels import build_bank, write_pgm
from gfnn.network import NetworkConfig, build_network

COLUMNS = 8
GUTTER = 2


def to_tiles(maps):
    """(H, W, C) responses -> per-channel uint8 tiles, each normalized
    independently so weak responses stay visible."""
    tiles = []
    for c in range(maps.shape[-1]):
        m = maps[:, :, c]
        span = m.max() - m.min()
        if span < 1e-12:
            tiles.append(np.full(m.shape, 128, np.uint8))
        else:
            tiles.append(np.round((m - m.min()) / span * 255).astype(np.uint8))
    return tiles


def montage(tiles):
    th, tw = tiles[0].shape
    rows = -(-len(tiles) // COLUMNS)
    sheet = np.zeros((rows * th + (rows + 1) * GUTTER,
                      COLUMNS * tw + (COLUMNS + 1) * GUTTER), np.uint8)
    for i, tile in enumerate(tiles):
        r, c = divmod(i, COLUMNS)
        y = GUTTER + r * (th + GUTTER)
        x = GUTTER + c * (tw + GUTTER)
        sheet[y:y + th, x:x + tw] = tile
    return sheet


def main():
    out_dir = os.path.dirname(os.path.abspath(__file__))
    bank = build_bank()
    net = build_network(NetworkConfig(arch="gfnn"), bank=bank)

    digit = synthetic_digits(8, seed=0)  # labels cycle 0..9; index 7 -> "7"
    x = normalize(digit)[7:8]
    _, acts = net.forward(x)

    # z1: raw conv responses before relu/pool, one 28x28 map per filter
    z1 = acts["z1"][0]
    print(f"input digit: {digit.labels[7]}")
    print(f"conv1 response block: {z1.shape}")
    for name, c in (("roberts_0", 0), ("sobel_2", 18), ("laplacian_4", 33),
                    ("blur_box", 39)):
        m = z1[:, :, c]
        print(f"  {name:<12} min {m.min():+.3f}  max {m.max():+.3f}")

    sheet = montage(to_tiles(z1))
    out = os.path.join(out_dir, "feature_maps.pgm")
    write_pgm(out, sheet)
    print(f"wrote {out}  ({sheet.shape[0]}x{sheet.shape[1]})")

    in_sheet = np.round(x[0, :, :, 0] * 255).astype(np.uint8)
    out_in = os.path.join(out_dir, "feature_maps_input.pgm")
    write_pgm(out_in, in_sheet)
    print(f"wrote {out_in}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
