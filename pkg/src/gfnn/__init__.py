"""Fixed-filter-bank convolutional network engine and benchmark harness.

The library side of the package: a 41-kernel image-processing filter
bank, numpy forward/backward passes for a small convolutional
classifier, a frozen-layer feature cache, and the training/benchmark
drivers.  The `gfnn` console script exposes the same capabilities on the
command line.
"""

from .data import (Dataset, Split, load_idx, load_mnist, normalize,
                   split_train_val, subsample, synthetic_digits,
                   synthetic_split)
from .errors import (CheckpointError, ConfigError, DataError, GfnnError,
                     IdxFormatError, InternalError, ShapeError,
                     StaleCacheError)
from .kernels import (BANK_SIZE, Kernel, KernelBank, apply_kernel,
                      bank_from_json, bank_to_json, build_bank, render_bank,
                      rotate_ring)
from .network import (FeatureCache, Network, NetworkConfig, build_network,
                      forward_from_cache, load_checkpoint,
                      precompute_features, save_checkpoint)
from .training import (OptimizerState, TrainConfig, TrainReport,
                       bench_compare, evaluate, init_optimizer,
                       optimizer_step, sweep, train)

__version__ = "0.1.0"

__all__ = [
    "BANK_SIZE", "CheckpointError", "ConfigError", "DataError", "Dataset",
    "FeatureCache", "GfnnError", "IdxFormatError", "InternalError", "Kernel",
    "KernelBank", "Network", "NetworkConfig", "OptimizerState", "ShapeError",
    "Split", "StaleCacheError", "TrainConfig", "TrainReport", "apply_kernel",
    "bank_from_json", "bank_to_json", "bench_compare", "build_bank",
    "build_network", "evaluate", "forward_from_cache", "init_optimizer",
    "load_checkpoint", "load_idx", "load_mnist", "normalize",
    "optimizer_step", "precompute_features", "render_bank", "rotate_ring",
    "save_checkpoint", "split_train_val", "subsample", "sweep",
    "synthetic_digits", "synthetic_split", "train",
]
