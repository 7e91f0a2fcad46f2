"""Command-line entry point: train, eval, bench, sweep, and kernel export.

Exit codes: 0 success, 1 usage or invalid configuration, 2 output I/O
failure, 3 missing/unreadable input data, 4 corrupt artifact (checkpoint
or stale feature cache).

Every flag can also come from a JSON config file (`--config path`): an
object whose keys are the flag names in snake_case or camelCase.
Explicit flags override the file; the file overrides built-in defaults.
"""

import argparse
import json
import os
import re
import sys
from dataclasses import replace
from types import SimpleNamespace

from .data import (load_mnist, split_train_val, synthetic_digits,
                   synthetic_split)
from .errors import (CheckpointError, ConfigError, DataError, GfnnError,
                     IdxFormatError, StaleCacheError)
from .kernels import bank_to_json, build_bank, render_bank, write_pgm
from .network import (NetworkConfig, build_network, load_checkpoint,
                      save_checkpoint)
from .training import (TrainConfig, bench_compare, evaluate, sweep,
                       sweep_to_csv, train)
from .util import atomic_write_text

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NO_DATA = 3
EXIT_BAD_ARTIFACT = 4

SMALL_RUN_EPOCHS = 100  # default when training on <= SMALL_RUN_CUTOFF samples
SMALL_RUN_CUTOFF = 2000
FULL_RUN_EPOCHS = 20

DOWNLOAD_HINT = (
    "Expected MNIST IDX files: train-images-idx3-ubyte, "
    "train-labels-idx1-ubyte, t10k-images-idx3-ubyte, "
    "t10k-labels-idx1-ubyte (each optionally gzip-compressed with a .gz "
    "suffix).\nDownload them from an MNIST mirror, e.g.\n"
    "  https://ossci-datasets.s3.amazonaws.com/mnist/\n"
    "into the data directory (--data-dir or $GFNN_DATA_DIR), or pass "
    "--synthetic to run without any files."
)


class _UsageError(Exception):
    pass


class _MissingData(Exception):
    def __init__(self, message, hint=None):
        super().__init__(message)
        self.hint = hint


class _Parser(argparse.ArgumentParser):
    # argparse's default error() calls sys.exit(2); route through the
    # package convention (usage problems exit 1) instead.
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


_S = argparse.SUPPRESS

_DEFAULTS = {
    "kernels": {"format": "json", "out": None},
    "train": {"arch": None, "data_dir": None, "synthetic": False,
              "epochs": None, "batch_size": 64, "lr": 0.001, "dropout": 0.5,
              "train_size": None, "seed": 0, "cache": False,
              "cache_path": None, "out_report": "report.json",
              "out_checkpoint": "model.gfnn"},
    "bench": {"data_dir": None, "synthetic": False, "epochs": 3,
              "batch_size": 64, "lr": 0.001, "dropout": 0.5,
              "train_size": 2000, "seed": 0, "no_cache": False,
              "cache_path": None, "out": "bench.json"},
    "sweep": {"axis": None, "values": None, "data_dir": None,
              "synthetic": False, "epochs": 20, "batch_size": 64,
              "lr": 0.001, "dropout": 0.5, "train_size": None, "seed": 0,
              "cache": False, "out": "sweep.csv"},
    "eval": {"checkpoint": None, "data_dir": None, "synthetic": False,
             "split": "val", "seed": 0, "out": "eval.json"},
}


def _add_common(p, *, bench=False):
    p.add_argument("--config", default=_S, metavar="JSON",
                   help="JSON config file; flags override its values")
    p.add_argument("--data-dir", default=_S,
                   help="directory with MNIST IDX files "
                        "(default: $GFNN_DATA_DIR or ./data)")
    p.add_argument("--synthetic", action="store_true", default=_S,
                   help="use the procedural dataset; no files needed")
    p.add_argument("--seed", type=int, default=_S,
                   help="seed driving init, shuffling, dropout, subsampling")


def _add_budget(p):
    p.add_argument("--epochs", type=int, default=_S)
    p.add_argument("--batch-size", type=int, default=_S)
    p.add_argument("--lr", type=float, default=_S, help="learning rate")
    p.add_argument("--dropout", type=float, default=_S,
                   help="dropout rate after dense1")
    p.add_argument("--train-size", type=int, default=_S,
                   help="train on a seeded subsample of this size")


def build_parser():
    parser = _Parser(prog="gfnn",
                     description="Fixed-filter-bank CNN benchmark harness")
    from . import __version__
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("kernels", help="export the 41-kernel filter bank")
    p.add_argument("--format", choices=("json", "pgm"), default=_S)
    p.add_argument("--out", default=_S,
                   help="output path (default kernels.json / kernels.pgm)")
    p.add_argument("--config", default=_S, metavar="JSON")
    p.set_defaults(func=cmd_kernels)

    p = sub.add_parser("train", help="train one architecture")
    p.add_argument("--arch", choices=("cnn", "gfnn"), default=_S)
    _add_budget(p)
    p.add_argument("--cache", action="store_true", default=_S,
                   help="train from precomputed layer-1 features (gfnn only)")
    p.add_argument("--cache-path", default=_S,
                   help="feature-cache file (default: <out-report>.features)")
    p.add_argument("--out-report", default=_S, metavar="JSON")
    p.add_argument("--out-checkpoint", default=_S, metavar="PATH")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench",
                       help="train cnn and gfnn back to back, report ratio")
    _add_budget(p)
    p.add_argument("--no-cache", action="store_true", default=_S,
                   help="disable the gfnn feature cache")
    p.add_argument("--cache-path", default=_S)
    p.add_argument("--out", default=_S, metavar="JSON")
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="accuracy/time table over an axis")
    p.add_argument("--axis", choices=("train-size", "batch-size"), default=_S)
    p.add_argument("--values", type=_int_list, default=_S,
                   help="comma-separated axis values, e.g. 500,1000,2000")
    _add_budget(p)
    p.add_argument("--cache", action="store_true", default=_S,
                   help="enable the gfnn feature cache per cell")
    p.add_argument("--out", default=_S, metavar="CSV")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", default=_S, metavar="PATH")
    p.add_argument("--split", choices=("val", "test"), default=_S)
    p.add_argument("--out", default=_S, metavar="JSON")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    return parser


_CAMEL_SPLIT = re.compile(r"(?<!^)(?=[A-Z])")


def _load_config_file(path):
    try:
        with open(path, encoding="utf-8") as f:
            obj = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}") from e
    except ValueError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(obj, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return {_CAMEL_SPLIT.sub("_", k).replace("-", "_").lower(): v
            for k, v in obj.items()}


def _resolve(args):
    """Layer defaults < config file < explicit flags into one namespace."""
    ns = vars(args).copy()
    func = ns.pop("func")
    command = ns.pop("command")
    layered = dict(_DEFAULTS[command])
    cfg_path = ns.pop("config", None)
    if cfg_path:
        file_vals = _load_config_file(cfg_path)
        unknown = sorted(set(file_vals) - set(layered))
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {unknown}")
        layered.update(file_vals)
    layered.update(ns)
    return SimpleNamespace(**layered), func


def _data_dir(o):
    return o.data_dir or os.environ.get("GFNN_DATA_DIR") or "data"


def _load_split(o):
    """Training+validation data: synthetic pool or the 60000-image MNIST
    training file split 55000/5000."""
    if o.synthetic:
        pool = max(1000, int(o.train_size or 0))
        return synthetic_split(pool, 200, int(o.seed))
    try:
        full = load_mnist(_data_dir(o), "train")
    except FileNotFoundError as e:
        raise _MissingData(str(e), hint=DOWNLOAD_HINT) from e
    return split_train_val(full)


def _train_cfg(o, **overrides):
    try:
        cfg = TrainConfig(
            epochs=int(overrides.pop("epochs", o.epochs)),
            batch_size=int(o.batch_size),
            learning_rate=float(o.lr),
            dropout_rate=float(o.dropout),
            seed=int(o.seed),
            train_size=None if o.train_size is None else int(o.train_size),
            **overrides,
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, GfnnError):
            raise
        raise ConfigError(f"bad numeric option: {e}") from e
    return cfg


def _default_epochs(o):
    if o.epochs is not None:
        return int(o.epochs)
    if o.train_size is not None and int(o.train_size) <= SMALL_RUN_CUTOFF:
        return SMALL_RUN_EPOCHS
    return FULL_RUN_EPOCHS


def _build_net(arch, o):
    net_cfg = NetworkConfig(arch=arch, dropout_rate=float(o.dropout),
                            init_seed=int(o.seed))
    return build_network(net_cfg, build_bank() if arch == "gfnn" else None)


# -- subcommands --------------------------------------------------------------


def cmd_kernels(o):
    bank = build_bank()
    if o.format == "json":
        out = o.out or "kernels.json"
        atomic_write_text(out, bank_to_json(bank) + "\n")
    else:
        out = o.out or "kernels.pgm"
        write_pgm(out, render_bank(bank))
    print(f"wrote {len(bank)} kernels to {out}")
    return EXIT_OK


def cmd_train(o):
    if o.arch not in ("cnn", "gfnn"):
        raise ConfigError("--arch is required (cnn or gfnn)")
    cfg = _train_cfg(o, epochs=_default_epochs(o), use_cache=bool(o.cache))
    if cfg.use_cache and o.arch != "gfnn":
        raise ConfigError("cache requires frozen first layer")
    cache_path = o.cache_path or (o.out_report + ".features")

    split = _load_split(o)
    net = _build_net(o.arch, o)
    report = train(net, split, cfg, cache_path=cache_path, progress=print)

    atomic_write_text(o.out_report,
                      json.dumps(report.to_json_dict(), indent=2) + "\n")
    save_checkpoint(net, o.out_checkpoint)
    print(f"best val accuracy {report.best_val_accuracy:.4f}  "
          f"report {o.out_report}  checkpoint {o.out_checkpoint}")
    return EXIT_OK


def cmd_bench(o):
    cfg_cnn = _train_cfg(o, use_cache=False)
    cfg_gfnn = replace(cfg_cnn, use_cache=not bool(o.no_cache))
    cache_path = o.cache_path or (o.out + ".features")
    split = _load_split(o)
    result = bench_compare(split, cfg_cnn, cfg_gfnn, cache_path=cache_path,
                           progress=print)
    atomic_write_text(o.out, json.dumps(result, indent=2) + "\n")
    print(f"time ratio (gfnn/cnn): {result['timeRatio']:.3f}")
    print(f"accuracy delta (gfnn-cnn): {result['accuracyDelta']:+.4f}")
    print(f"wrote {o.out}")
    return EXIT_OK


def cmd_sweep(o):
    if o.axis not in ("train-size", "batch-size"):
        raise ConfigError("--axis is required (train-size or batch-size)")
    if not o.values:
        raise ConfigError("--values is required, e.g. --values 500,1000")
    axis = {"train-size": "trainSize", "batch-size": "batchSize"}[o.axis]
    base = _train_cfg(o, epochs=int(o.epochs), use_cache=bool(o.cache))
    split = _load_split(o)
    cache_dir = os.path.dirname(os.path.abspath(o.out))
    rows = sweep(axis, [int(v) for v in o.values], base, split,
                 cache_dir=cache_dir, progress=print)
    sweep_to_csv(rows, o.out)
    print(f"wrote {len(rows)} rows to {o.out}")
    return EXIT_OK


def cmd_eval(o):
    if not o.checkpoint:
        raise ConfigError("--checkpoint is required")
    try:
        net = load_checkpoint(o.checkpoint)
    except FileNotFoundError as e:
        raise _MissingData(f"checkpoint not found: {o.checkpoint}") from e

    if o.synthetic:
        ds = synthetic_digits(1000, int(o.seed))
    elif o.split == "val":
        try:
            full = load_mnist(_data_dir(o), "train")
        except FileNotFoundError as e:
            raise _MissingData(str(e), hint=DOWNLOAD_HINT) from e
        ds = split_train_val(full).validation
    else:
        try:
            ds = load_mnist(_data_dir(o), "t10k")
        except FileNotFoundError as e:
            raise _MissingData(str(e), hint=DOWNLOAD_HINT) from e

    acc = evaluate(net, ds)
    atomic_write_text(o.out, json.dumps({
        "formatVersion": 1,
        "accuracy": acc,
        "split": "synthetic" if o.synthetic else o.split,
        "samples": len(ds),
        "arch": net.arch,
        "checkpoint": o.checkpoint,
    }, indent=2) + "\n")
    print(f"accuracy {acc:.4f} on {len(ds)} samples  ({o.out})")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        print("run 'gfnn --help' for usage", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help/--version print and exit 0
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    try:
        opts, func = _resolve(args)
        return func(opts)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except _MissingData as e:
        print(f"error: {e}", file=sys.stderr)
        if e.hint:
            print(e.hint, file=sys.stderr)
        return EXIT_NO_DATA
    except (StaleCacheError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_ARTIFACT
    except IdxFormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NO_DATA
    except (ConfigError, DataError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except GfnnError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_USAGE
