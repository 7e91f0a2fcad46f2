"""Optimization loop with phase-resolved wall-clock instrumentation,
plus the benchmark comparison and sweep drivers behind the reports.

Timing phases per epoch: layer1Forward, layer1Backward, rest (all other
compute including the optimizer), dataLoad (batch assembly and cache
reads).  Validation passes are timed separately and never count toward
the phase totals, so the per-layer comparison is about training work.
"""

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import normalize, subsample
from .errors import ConfigError, DataError, GfnnError, InternalError
from .kernels import build_bank
from .network import (Network, NetworkConfig, build_network,
                      precompute_features)
from .ops import softmax_xent
from .util import PhaseClock

PHASES = ("layer1Forward", "layer1Backward", "rest", "dataLoad")
OPTIMIZERS = ("adam", "sgd")
REPORT_FORMAT_VERSION = 1

_SHUFFLE_TAG = 101
_DROPOUT_TAG = 202
_EVAL_BATCH = 512


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 0.001
    dropout_rate: float = 0.5
    seed: int = 0
    use_cache: bool = False
    train_size: int = None
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, "
                              f"got {self.optimizer!r}")
        if self.train_size is not None and self.train_size < 1:
            raise ConfigError(f"train size must be >= 1, got {self.train_size}")

    def to_json_dict(self):
        return {
            "epochs": self.epochs,
            "batchSize": self.batch_size,
            "learningRate": self.learning_rate,
            "dropoutRate": self.dropout_rate,
            "seed": self.seed,
            "useCache": self.use_cache,
            "trainSize": self.train_size,
            "optimizer": self.optimizer,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
        }


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    val_accuracy: float
    wall_clock_seconds: float
    train_seconds: float
    val_seconds: float
    phase_seconds: dict

    def to_json_dict(self):
        return {
            "epoch": self.epoch,
            "meanLoss": self.mean_loss,
            "valAccuracy": self.val_accuracy,
            "wallClockSeconds": self.wall_clock_seconds,
            "trainSeconds": self.train_seconds,
            "valSeconds": self.val_seconds,
            "phaseSeconds": {k: self.phase_seconds.get(k, 0.0) for k in PHASES},
        }


@dataclass
class TrainReport:
    arch: str
    config: TrainConfig
    epochs: list
    best_val_accuracy: float
    total_seconds: float
    training_seconds: float  # cache build + per-epoch training, no validation
    cache_build_seconds: float
    optimizer_steps: int

    def to_json_dict(self):
        from . import __version__
        return {
            "formatVersion": REPORT_FORMAT_VERSION,
            "version": __version__,
            "arch": self.arch,
            "config": self.config.to_json_dict(),
            "epochs": [e.to_json_dict() for e in self.epochs],
            "bestValAccuracy": self.best_val_accuracy,
            "totalSeconds": self.total_seconds,
            "trainingSeconds": self.training_seconds,
            "cacheBuildSeconds": self.cache_build_seconds,
            "optimizerSteps": self.optimizer_steps,
        }


# -- optimizer ---------------------------------------------------------------


@dataclass
class OptimizerState:
    names: tuple
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    scratch: dict = field(default_factory=dict)


def init_optimizer(net, cfg):
    """Moment buffers for every trainable layer; frozen layers get none."""
    names = net.trainable_names()
    state = OptimizerState(names=names)
    if cfg.optimizer == "adam":
        for name in names:
            p = net.params[name]
            state.m[name] = (np.zeros_like(p.weights), np.zeros_like(p.bias))
            state.v[name] = (np.zeros_like(p.weights), np.zeros_like(p.bias))
            # two work buffers per tensor so the step allocates nothing
            state.scratch[name] = (
                (np.empty_like(p.weights), np.empty_like(p.weights)),
                (np.empty_like(p.bias), np.empty_like(p.bias)))
    return state


def optimizer_step(net, grads, state, cfg):
    """Apply one update in place.  Layers absent from `grads` (the frozen
    first layer) are untouched; a gradient for a layer without optimizer
    state is an internal inconsistency."""
    state.step += 1
    t = state.step
    lr = cfg.learning_rate
    for name, (dw, db) in grads.items():
        if name not in state.names:
            raise InternalError(f"gradient for {name!r} but no optimizer "
                                f"state; frozen layers take no updates")
        p = net.params[name]
        if dw.shape != p.weights.shape or db.shape != p.bias.shape:
            raise InternalError(f"gradient shapes {dw.shape}/{db.shape} do "
                                f"not match {name} parameters")
        if cfg.optimizer == "sgd":
            p.weights -= lr * dw
            p.bias -= lr * db
            continue
        c1 = 1.0 - cfg.beta1 ** t
        c2 = 1.0 - cfg.beta2 ** t
        # in place on preallocated buffers, in the same operation order as
        # the plain form  p -= lr*(m/c1) / (sqrt(v/c2) + eps)
        for j, (g, param) in enumerate(((dw, p.weights), (db, p.bias))):
            moment1 = state.m[name][j]
            moment2 = state.v[name][j]
            num, den = state.scratch[name][j]
            np.multiply(moment1, cfg.beta1, out=moment1)
            np.multiply(g, 1.0 - cfg.beta1, out=num)
            moment1 += num
            np.multiply(moment2, cfg.beta2, out=moment2)
            np.multiply(g, g, out=num)
            num *= 1.0 - cfg.beta2
            moment2 += num
            np.divide(moment2, c2, out=den)
            np.sqrt(den, out=den)
            den += cfg.eps
            np.divide(moment1, c1, out=num)
            num *= lr
            num /= den
            param -= num


# -- evaluation --------------------------------------------------------------


def _batched_accuracy(net, images, labels):
    hits = 0
    for start in range(0, images.shape[0], _EVAL_BATCH):
        xb = images[start:start + _EVAL_BATCH]
        logits, _ = net.forward(x=xb, training=False)
        hits += int((logits.argmax(axis=1) ==
                     labels[start:start + _EVAL_BATCH]).sum())
    return hits / images.shape[0]


def evaluate(net, dataset):
    """Argmax accuracy with dropout off; deterministic."""
    if len(dataset) == 0:
        raise DataError("cannot evaluate on an empty dataset")
    return _batched_accuracy(net, normalize(dataset), dataset.labels)


# -- training loop -----------------------------------------------------------


def train(net, split, cfg, cache_path=None, progress=None):
    """Optimize `net` on split.train, validating each epoch on
    split.validation.  Returns a fully populated TrainReport.

    With cfg.use_cache, layer-1 output is precomputed once into
    `cache_path` and every epoch trains from the cache; requires a frozen
    first layer.  Identical seeds give identical loss/accuracy
    trajectories with the cache on or off.
    """
    if cfg.use_cache and not net.frozen_layer1:
        raise ConfigError("cache requires frozen first layer")
    if cfg.use_cache and cache_path is None:
        raise ConfigError("use_cache needs a cache_path")

    total_t0 = time.perf_counter()
    train_ds = split.train
    if cfg.train_size is not None:
        if cfg.train_size > len(train_ds):
            raise DataError(f"train_size {cfg.train_size} exceeds the "
                            f"{len(train_ds)} available samples")
        train_ds = subsample(train_ds, cfg.train_size, cfg.seed)
    n = len(train_ds)
    labels = train_ds.labels

    cache = None
    cache_build = 0.0
    images = None
    if cfg.use_cache:
        t0 = time.perf_counter()
        cache = precompute_features(net, train_ds, cache_path)
        cache_build = time.perf_counter() - t0
    else:
        images = normalize(train_ds)

    val_images = normalize(split.validation)
    val_labels = split.validation.labels

    state = init_optimizer(net, cfg)
    records = []
    for epoch in range(1, cfg.epochs + 1):
        clock = PhaseClock()
        epoch_t0 = time.perf_counter()
        order = np.random.default_rng((cfg.seed, _SHUFFLE_TAG, epoch)).permutation(n)
        drop_rng = np.random.default_rng((cfg.seed, _DROPOUT_TAG, epoch))
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            with clock.phase("dataLoad"):
                yb = labels[idx]
                if cache is not None:
                    feats = cache.take(idx)
                else:
                    xb = images[idx]
            if cache is not None:
                logits, acts = net.forward(features=feats, training=True,
                                           rng=drop_rng, clock=clock)
            else:
                logits, acts = net.forward(x=xb, training=True,
                                           rng=drop_rng, clock=clock)
            with clock.phase("rest"):
                loss, _, dlogits = softmax_xent(logits, yb)
            grads = net.backward(acts, dlogits, clock=clock)
            with clock.phase("rest"):
                optimizer_step(net, grads, state, cfg)
            loss_sum += loss * len(idx)
        train_seconds = time.perf_counter() - epoch_t0

        val_t0 = time.perf_counter()
        val_acc = _batched_accuracy(net, val_images, val_labels)
        val_seconds = time.perf_counter() - val_t0

        rec = EpochRecord(
            epoch=epoch,
            mean_loss=loss_sum / n,
            val_accuracy=val_acc,
            wall_clock_seconds=train_seconds + val_seconds,
            train_seconds=train_seconds,
            val_seconds=val_seconds,
            phase_seconds={k: clock.seconds.get(k, 0.0) for k in PHASES},
        )
        records.append(rec)
        if progress is not None:
            progress(f"epoch {epoch}/{cfg.epochs}  loss {rec.mean_loss:.4f}  "
                     f"val {val_acc:.4f}  ({train_seconds:.1f}s train, "
                     f"{val_seconds:.1f}s val)")

    return TrainReport(
        arch=net.arch,
        config=cfg,
        epochs=records,
        best_val_accuracy=max(r.val_accuracy for r in records),
        total_seconds=time.perf_counter() - total_t0,
        training_seconds=cache_build + sum(r.train_seconds for r in records),
        cache_build_seconds=cache_build,
        optimizer_steps=state.step,
    )


# -- benchmark comparison ----------------------------------------------------


def _build_for(arch, cfg, init_seed):
    net_cfg = NetworkConfig(arch=arch, dropout_rate=cfg.dropout_rate,
                            init_seed=init_seed)
    bank = build_bank() if arch == "gfnn" else None
    return build_network(net_cfg, bank)


def bench_compare(split, cfg_a, cfg_b, arch_a="cnn", arch_b="gfnn",
                  cache_path=None, progress=None):
    """Train both architectures on identical data and budget; report the
    end-to-end time ratio (arm B over arm A, cache construction included
    in each arm's own training time) and the accuracy delta.

    A steady-state ratio excluding each arm's first epoch and cache build
    is reported alongside, since warm-up and one-time costs land there.
    """
    same = (cfg_a.epochs == cfg_b.epochs
            and cfg_a.batch_size == cfg_b.batch_size
            and cfg_a.seed == cfg_b.seed
            and cfg_a.train_size == cfg_b.train_size
            and cfg_a.learning_rate == cfg_b.learning_rate)
    if not same:
        raise ConfigError("benchmark arms must share epochs, batch size, "
                          "seed, train size, and learning rate")
    for arch, cfg in ((arch_a, cfg_a), (arch_b, cfg_b)):
        if cfg.use_cache and cache_path is None:
            raise ConfigError("benchmark with use_cache needs a cache_path")

    reports = []
    for arch, cfg in ((arch_a, cfg_a), (arch_b, cfg_b)):
        net = _build_for(arch, cfg, cfg.seed)
        if progress is not None:
            progress(f"[{arch}] training {cfg.epochs} epochs")
        reports.append(train(net, split, cfg, cache_path=cache_path,
                             progress=progress))
    rep_a, rep_b = reports

    def steady(rep):
        return sum(r.train_seconds for r in rep.epochs[1:])

    steady_a, steady_b = steady(rep_a), steady(rep_b)
    return {
        "formatVersion": REPORT_FORMAT_VERSION,
        "arches": [arch_a, arch_b],
        "timeRatio": rep_b.training_seconds / rep_a.training_seconds,
        "steadyStateRatio": (steady_b / steady_a) if steady_a > 0 else None,
        "accuracyDelta": rep_b.best_val_accuracy - rep_a.best_val_accuracy,
        "firstEpochSeconds": [rep_a.epochs[0].train_seconds,
                              rep_b.epochs[0].train_seconds],
        "cacheBuildSeconds": [rep_a.cache_build_seconds,
                              rep_b.cache_build_seconds],
        "reports": [rep_a.to_json_dict(), rep_b.to_json_dict()],
    }


# -- sweeps ------------------------------------------------------------------

SWEEP_AXES = ("batchSize", "trainSize")
SWEEP_HEADER = ("axisValue", "arch", "accuracy", "totalSeconds")


def sweep(axis, values, base_cfg, split, cache_dir=None, progress=None):
    """One run per (value, architecture); failures mark the row ERR
    instead of aborting the sweep.  Returns rows in axis order."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not values:
        raise ConfigError("sweep needs at least one axis value")
    rows = []
    for value in values:
        for arch in ("cnn", "gfnn"):
            if axis == "batchSize":
                cfg = replace(base_cfg, batch_size=int(value))
            else:
                cfg = replace(base_cfg, train_size=int(value))
            use_cache = cfg.use_cache and arch == "gfnn"
            cfg = replace(cfg, use_cache=use_cache)
            cache_path = None
            if use_cache:
                if cache_dir is None:
                    raise ConfigError("sweep with use_cache needs a cache_dir")
                cache_path = f"{cache_dir}/sweep-{axis}-{value}.gfnc"
            if progress is not None:
                progress(f"[{axis}={value} {arch}] training")
            try:
                net = _build_for(arch, cfg, cfg.seed)
                rep = train(net, split, cfg, cache_path=cache_path)
                rows.append({"axisValue": value, "arch": arch,
                             "accuracy": rep.best_val_accuracy,
                             "totalSeconds": rep.total_seconds})
            except GfnnError as e:
                if progress is not None:
                    progress(f"[{axis}={value} {arch}] failed: {e}")
                rows.append({"axisValue": value, "arch": arch,
                             "accuracy": "ERR", "totalSeconds": "ERR"})
    return rows


def sweep_to_csv(rows, path):
    from .util import atomic_write_text
    import io
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for row in rows:
        writer.writerow([row[k] for k in SWEEP_HEADER])
    atomic_write_text(path, buf.getvalue())


def read_sweep_csv(path):
    """Parse a sweep CSV back into row dicts (numbers as floats,
    failed cells as the string ERR)."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = tuple(next(reader))
        if header != SWEEP_HEADER:
            raise DataError(f"unexpected sweep header {header}")
        rows = []
        for rec in reader:
            row = dict(zip(SWEEP_HEADER, rec))
            for k in ("axisValue", "accuracy", "totalSeconds"):
                if row[k] != "ERR":
                    row[k] = float(row[k])
            rows.append(row)
    return rows
