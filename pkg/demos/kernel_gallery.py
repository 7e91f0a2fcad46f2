#!/usr/bin/env python3
"""Walk through the 41-filter bank: print every kernel with its family
and coefficient sum, then export the contact sheet (PGM) and the JSON
description next to this script."""

import os
import sys

import numpy as np

from gfnn.kernels import bank_to_json, build_bank, render_bank, write_pgm


def main():
    out_dir = os.path.dirname(os.path.abspath(__file__))
    bank = build_bank()

    print(f"filter bank: {len(bank)} kernels\n")
    print(f"{'idx':>3}  {'name':<14} {'family':<12} {'sum':>8}  coefficients")
    for i, k in enumerate(bank):
        flat = " ".join(f"{c:+.2f}" for c in k.coeffs.reshape(-1))
        print(f"{i:>3}  {k.name:<14} {k.family:<12} "
              f"{k.coeffs.sum():>8.4f}  [{flat}]")

    sums = np.array([k.coeffs.sum() for k in bank])
    print(f"\nzero-sum kernels: {int(np.sum(np.abs(sums) < 1e-9))}")
    print(f"unit-sum kernels: {int(np.sum(np.abs(sums - 1.0) < 1e-9))}")

    pgm = os.path.join(out_dir, "kernel_gallery.pgm")
    write_pgm(pgm, render_bank(bank))
    js = os.path.join(out_dir, "kernel_gallery.json")
    with open(js, "w") as f:
        f.write(bank_to_json(bank) + "\n")
    print(f"\nwrote {pgm}")
    print(f"wrote {js}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
