"""Trainer tests: optimizer math against closed forms and a direct
simulation, step accounting, frozen-layer conservation, cache/no-cache
trajectory equality, the self-comparison timing control, and sweeps."""

import math
from types import SimpleNamespace

import numpy as np
import pytest

from gfnn.data import Dataset, synthetic_digits, synthetic_split
from gfnn.errors import ConfigError, DataError, InternalError
from gfnn.kernels import build_bank
from gfnn.network import NetworkConfig, build_network
from gfnn.ops import DenseParams
from gfnn.training import (PHASES, TrainConfig, bench_compare, evaluate,
                           init_optimizer, optimizer_step, read_sweep_csv,
                           sweep, sweep_to_csv, train)


def _vector_net(w0):
    """Minimal stand-in exposing the parameter protocol the optimizer
    needs: one dense tensor named 'w'."""
    params = {"w": DenseParams(np.asarray(w0, np.float32).reshape(-1, 1),
                               np.zeros(1, np.float32))}
    return SimpleNamespace(params=params, trainable_names=lambda: ("w",))


def _gfnn(seed=0):
    return build_network(NetworkConfig(arch="gfnn", init_seed=seed),
                         bank=build_bank())


def _cnn(seed=0):
    return build_network(NetworkConfig(arch="cnn", init_seed=seed))


def test_config_defaults_and_validation():
    cfg = TrainConfig()
    assert cfg.learning_rate == 0.001
    assert cfg.optimizer == "adam"
    assert (cfg.beta1, cfg.beta2, cfg.eps) == (0.9, 0.999, 1e-8)
    for bad in (dict(epochs=0), dict(batch_size=0), dict(learning_rate=0.0),
                dict(optimizer="rmsprop"), dict(train_size=0)):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


def test_sgd_step_is_plain_descent():
    net = _vector_net([1.0, -2.0])
    cfg = TrainConfig(optimizer="sgd", learning_rate=0.1)
    state = init_optimizer(net, cfg)
    g = np.array([[0.5], [-0.25]], np.float32)
    optimizer_step(net, {"w": (g, np.zeros(1, np.float32))}, state, cfg)
    assert np.array_equal(net.params["w"].weights,
                          np.array([[0.95], [-1.975]], np.float32))
    before = net.params["w"].weights.copy()
    optimizer_step(net, {"w": (np.zeros_like(g), np.zeros(1, np.float32))},
                   state, cfg)
    assert np.array_equal(net.params["w"].weights, before)


def test_adam_first_step_closed_form():
    """Bias correction makes step 1 collapse to -lr * g / (|g| + eps)."""
    net = _vector_net([1.0, 1.0, 1.0])
    cfg = TrainConfig(learning_rate=0.001)
    state = init_optimizer(net, cfg)
    g = np.array([[3.0], [-0.002], [7.5]], np.float32)
    optimizer_step(net, {"w": (g, np.zeros(1, np.float32))}, state, cfg)
    expected = 1.0 - cfg.learning_rate * g / (np.abs(g) + cfg.eps)
    assert np.max(np.abs(net.params["w"].weights - expected)) < 1e-7
    assert state.step == 1


def test_adam_minimizes_quadratic_bowl():
    """f(w) = ||w||^2 from a unit-norm start: 200 steps at lr 0.01 land
    inside 1e-2.  Checked against an independent float64 simulation of
    the same update rule."""
    w0 = np.array([0.6, -0.8])  # norm exactly 1
    cfg = TrainConfig(learning_rate=0.01)

    w, m, v = w0.astype(np.float64), np.zeros(2), np.zeros(2)
    for t in range(1, 201):
        g = 2.0 * w
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        mhat = m / (1 - cfg.beta1 ** t)
        vhat = v / (1 - cfg.beta2 ** t)
        w = w - cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.eps)
    assert np.linalg.norm(w) < 1e-2

    net = _vector_net(w0)
    state = init_optimizer(net, cfg)
    for _ in range(200):
        g = 2.0 * net.params["w"].weights.astype(np.float64)
        optimizer_step(net, {"w": (g.astype(np.float32),
                                   np.zeros(1, np.float32))}, state, cfg)
    got = net.params["w"].weights.reshape(-1)
    assert np.linalg.norm(got) < 1e-2
    assert np.max(np.abs(got - w)) < 1e-4


def test_optimizer_rejects_frozen_and_misshapen_gradients():
    net = _vector_net([1.0])
    cfg = TrainConfig()
    state = init_optimizer(net, cfg)
    with pytest.raises(InternalError, match="frozen layers take no updates"):
        optimizer_step(net, {"conv1": (np.zeros((1, 1), np.float32),
                                       np.zeros(1, np.float32))}, state, cfg)
    with pytest.raises(InternalError, match="do not match"):
        optimizer_step(net, {"w": (np.zeros((2, 2), np.float32),
                                   np.zeros(1, np.float32))}, state, cfg)


def test_step_count_arithmetic():
    split = synthetic_split(100, 20, seed=0)
    cfg = TrainConfig(epochs=2, batch_size=10, seed=0)
    report = train(_gfnn(), split, cfg)
    assert report.optimizer_steps == 20  # 10 batches/epoch x 2 epochs
    assert [r.epoch for r in report.epochs] == [1, 2]
    assert report.arch == "gfnn"


def test_uneven_final_batch_counts_as_a_step():
    split = synthetic_split(25, 10, seed=0)
    cfg = TrainConfig(epochs=1, batch_size=10, seed=0)
    assert train(_gfnn(), split, cfg).optimizer_steps == 3


def test_train_size_subsampling_and_bounds():
    split = synthetic_split(100, 20, seed=0)
    cfg = TrainConfig(epochs=1, batch_size=16, train_size=30, seed=1)
    report = train(_gfnn(), split, cfg)
    assert report.optimizer_steps == math.ceil(30 / 16)
    assert report.config.train_size == 30
    with pytest.raises(DataError, match="exceeds"):
        train(_gfnn(), split, TrainConfig(epochs=1, train_size=200))


def test_loss_decreases_on_small_fixture():
    split = synthetic_split(50, 20, seed=2)
    cfg = TrainConfig(epochs=5, batch_size=10, seed=2)
    report = train(_gfnn(seed=2), split, cfg)
    assert report.epochs[-1].mean_loss < report.epochs[0].mean_loss
    assert report.best_val_accuracy == max(r.val_accuracy
                                           for r in report.epochs)


def test_frozen_conv1_survives_training_bitwise():
    net = _gfnn(seed=4)
    before_w = net.params["conv1"].weights.tobytes()
    before_b = net.params["conv1"].bias.tobytes()
    train(net, synthetic_split(40, 10, seed=4),
          TrainConfig(epochs=2, batch_size=8, seed=4))
    assert net.params["conv1"].weights.tobytes() == before_w
    assert net.params["conv1"].bias.tobytes() == before_b
    assert np.array_equal(net.params["conv1"].weights,
                          build_bank().weights())


def test_cnn_conv1_does_train():
    net = _cnn(seed=4)
    before = net.params["conv1"].weights.tobytes()
    train(net, synthetic_split(40, 10, seed=4),
          TrainConfig(epochs=1, batch_size=8, seed=4))
    assert net.params["conv1"].weights.tobytes() != before


def test_evaluate_constant_classifier_counts_labels():
    net = _cnn()
    net.params["dense2"].weights[...] = 0.0
    net.params["dense2"].bias[...] = 0.0
    net.params["dense2"].bias[3] = 1.0
    balanced = synthetic_digits(50, 0)
    assert evaluate(net, balanced) == pytest.approx(0.1)
    labels = np.array([3, 3, 1, 4, 3, 2, 0, 9, 3, 3])
    rigged = Dataset(synthetic_digits(10, 0).images, labels, name="rigged")
    assert evaluate(net, rigged) == pytest.approx(0.5)
    assert evaluate(net, rigged) == evaluate(net, rigged)


def test_evaluate_rejects_empty():
    empty = Dataset(np.zeros((0, 28, 28), np.uint8),
                    np.zeros(0, np.int64), name="empty")
    with pytest.raises(DataError):
        evaluate(_cnn(), empty)


def test_cache_and_direct_trajectories_are_identical(tmp_path):
    """Per-sample batched matmuls make results independent of batch
    grouping, so the cached path must reproduce the direct path float
    for float, not merely approximately."""
    split = synthetic_split(64, 24, seed=3)
    cfg = TrainConfig(epochs=2, batch_size=16, seed=3)
    plain = train(_gfnn(seed=3), split, cfg)
    cached = train(_gfnn(seed=3), split,
                   TrainConfig(epochs=2, batch_size=16, seed=3,
                               use_cache=True),
                   cache_path=str(tmp_path / "t.gfnc"))
    assert [r.mean_loss for r in plain.epochs] == \
           [r.mean_loss for r in cached.epochs]
    assert [r.val_accuracy for r in plain.epochs] == \
           [r.val_accuracy for r in cached.epochs]
    assert cached.cache_build_seconds > 0.0
    for rec in cached.epochs:
        assert rec.phase_seconds["layer1Forward"] == 0.0
        assert rec.phase_seconds["layer1Backward"] == 0.0
    assert plain.epochs[0].phase_seconds["layer1Forward"] > 0.0


def test_cache_flag_guards():
    split = synthetic_split(10, 10, seed=0)
    with pytest.raises(ConfigError, match="frozen first layer"):
        train(_cnn(), split, TrainConfig(epochs=1, use_cache=True))
    with pytest.raises(ConfigError, match="cache_path"):
        train(_gfnn(), split, TrainConfig(epochs=1, use_cache=True))


def test_report_json_layout():
    split = synthetic_split(20, 10, seed=0)
    report = train(_gfnn(), split, TrainConfig(epochs=1, batch_size=10))
    d = report.to_json_dict()
    assert d["formatVersion"] == 1
    assert d["arch"] == "gfnn"
    assert d["config"]["batchSize"] == 10
    assert d["optimizerSteps"] == 2
    assert len(d["epochs"]) == 1
    assert set(d["epochs"][0]["phaseSeconds"]) == set(PHASES)
    assert d["trainingSeconds"] <= d["totalSeconds"]


def test_training_is_deterministic():
    split = synthetic_split(50, 20, seed=6)
    cfg = TrainConfig(epochs=2, batch_size=16, seed=6)
    a = train(_gfnn(seed=6), split, cfg)
    b = train(_gfnn(seed=6), split, cfg)
    assert [r.mean_loss for r in a.epochs] == [r.mean_loss for r in b.epochs]
    assert [r.val_accuracy for r in a.epochs] == \
           [r.val_accuracy for r in b.epochs]


def test_bench_rejects_mismatched_budgets():
    split = synthetic_split(10, 10, seed=0)
    with pytest.raises(ConfigError, match="share"):
        bench_compare(split, TrainConfig(epochs=1), TrainConfig(epochs=2))


def test_bench_self_comparison_control():
    """CNN against itself: the measured time ratio is timer noise around
    1, bounded at +-10%."""
    split = synthetic_split(400, 40, seed=8)
    # warm-up run so allocator and BLAS setup do not land in arm A
    train(_cnn(seed=8), split, TrainConfig(epochs=1, batch_size=64,
                                           train_size=64, seed=8))
    cfg = TrainConfig(epochs=3, batch_size=32, seed=8)
    out = bench_compare(split, cfg, cfg, arch_a="cnn", arch_b="cnn")
    assert out["arches"] == ["cnn", "cnn"]
    assert 0.9 <= out["timeRatio"] <= 1.1
    assert out["accuracyDelta"] == 0.0
    assert len(out["reports"]) == 2


def test_bench_report_fields():
    split = synthetic_split(30, 10, seed=1)
    cfg = TrainConfig(epochs=2, batch_size=10, seed=1)
    out = bench_compare(split, cfg, cfg)
    for key in ("timeRatio", "steadyStateRatio", "accuracyDelta",
                "firstEpochSeconds", "cacheBuildSeconds", "reports"):
        assert key in out
    assert out["arches"] == ["cnn", "gfnn"]
    assert out["reports"][0]["arch"] == "cnn"
    assert out["reports"][1]["arch"] == "gfnn"


def test_sweep_rows_and_csv_round_trip(tmp_path):
    split = synthetic_split(120, 20, seed=0)
    base = TrainConfig(epochs=1, batch_size=32, seed=0)
    rows = sweep("trainSize", [50, 100], base, split)
    assert [(r["axisValue"], r["arch"]) for r in rows] == \
           [(50, "cnn"), (50, "gfnn"), (100, "cnn"), (100, "gfnn")]
    for r in rows:
        assert 0.0 <= r["accuracy"] <= 1.0
        assert r["totalSeconds"] > 0.0
    path = str(tmp_path / "sweep.csv")
    sweep_to_csv(rows, path)
    with open(path) as f:
        assert f.readline().rstrip("\n") == "axisValue,arch,accuracy,totalSeconds"
    back = read_sweep_csv(path)
    for orig, parsed in zip(rows, back):
        assert parsed["arch"] == orig["arch"]
        assert parsed["axisValue"] == float(orig["axisValue"])
        assert parsed["accuracy"] == pytest.approx(orig["accuracy"])


def test_sweep_marks_failures_and_continues(tmp_path):
    split = synthetic_split(60, 10, seed=0)
    base = TrainConfig(epochs=1, batch_size=32, seed=0)
    rows = sweep("trainSize", [40, 10000], base, split)
    assert rows[0]["accuracy"] != "ERR"
    assert rows[2]["accuracy"] == "ERR" and rows[3]["accuracy"] == "ERR"
    path = str(tmp_path / "sweep.csv")
    sweep_to_csv(rows, path)
    back = read_sweep_csv(path)
    assert back[2]["accuracy"] == "ERR"
    assert back[0]["accuracy"] == pytest.approx(rows[0]["accuracy"])


def test_sweep_axis_validation():
    split = synthetic_split(10, 10, seed=0)
    with pytest.raises(ConfigError, match="axis"):
        sweep("learningRate", [0.1], TrainConfig(), split)
    with pytest.raises(ConfigError, match="at least one"):
        sweep("trainSize", [], TrainConfig(), split)


def test_training_time_grows_with_workload():
    """3-point monotone timing check, 10% timer tolerance."""
    split = synthetic_split(400, 20, seed=9)
    base = TrainConfig(epochs=1, batch_size=32, seed=9)
    rows = sweep("trainSize", [100, 200, 400], base, split)
    for arch in ("cnn", "gfnn"):
        times = [r["totalSeconds"] for r in rows if r["arch"] == arch]
        assert len(times) == 3
        assert times[1] > times[0] * 0.9
        assert times[2] > times[1] * 0.9
