#!/usr/bin/env python3
"""Benchmark gate: the cached fixed-bank network must train in at most
0.85x the learned network's time.

Runs the paired comparison three times on 2000 samples / 3 epochs and
gates on the median time ratio, which keeps a single noisy run (page
cache, CPU frequency wander) from flipping the verdict.  Uses MNIST when
the files are present, the procedural digits otherwise.  Exits 0 when
the gate holds, 1 when it does not.
"""

import argparse
import json
import os
import statistics
import sys
import tempfile

from gfnn.data import load_mnist, split_train_val, synthetic_split
from gfnn.training import TrainConfig, bench_compare

GATE = 0.85
RUNS = 3
TRAIN_SIZE = 2000
EPOCHS = 3


def load_split(data_dir, seed):
    try:
        full = load_mnist(data_dir, "train")
    except FileNotFoundError:
        print("MNIST files not found; using the procedural dataset")
        return synthetic_split(TRAIN_SIZE, 200, seed)
    return split_train_val(full)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data-dir",
                    default=os.environ.get("GFNN_DATA_DIR", "data"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None,
                    help="write the full 3-run record as JSON")
    args = ap.parse_args()

    split = load_split(args.data_dir, args.seed)
    results = []
    with tempfile.TemporaryDirectory() as tmp:
        for run in range(1, RUNS + 1):
            cfg_cnn = TrainConfig(epochs=EPOCHS, batch_size=64,
                                  train_size=TRAIN_SIZE, seed=args.seed)
            cfg_gfnn = TrainConfig(epochs=EPOCHS, batch_size=64,
                                   train_size=TRAIN_SIZE, seed=args.seed,
                                   use_cache=True)
            out = bench_compare(split, cfg_cnn, cfg_gfnn,
                                cache_path=f"{tmp}/run{run}.gfnc")
            results.append(out)
            print(f"run {run}/{RUNS}: ratio {out['timeRatio']:.3f}  "
                  f"steady-state {out['steadyStateRatio']:.3f}  "
                  f"accuracy delta {out['accuracyDelta']:+.4f}")

    ratios = [r["timeRatio"] for r in results]
    median = statistics.median(ratios)
    gfnn_phases = [e["phaseSeconds"]["layer1Forward"]
                   for r in results for e in r["reports"][1]["epochs"]]

    print(f"\nmedian time ratio over {RUNS} runs: {median:.3f}  "
          f"(gate: <= {GATE})")
    print(f"max per-epoch layer-1 forward time, cached arm: "
          f"{max(gfnn_phases):.6f}s")

    if args.out:
        with open(args.out, "w") as f:
            json.dump({"medianTimeRatio": median, "gate": GATE,
                       "runs": results}, f, indent=2)
        print(f"wrote {args.out}")

    ok = median <= GATE and max(gfnn_phases) == 0.0
    print("GATE PASS" if ok else "GATE FAIL")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
