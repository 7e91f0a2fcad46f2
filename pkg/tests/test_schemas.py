"""Every JSON artifact the package emits validates against the schemas
shipped in schemas/."""

import json
import pathlib

import jsonschema
import pytest

from gfnn.cli import main
from gfnn.kernels import bank_to_json, build_bank
from gfnn.network import NetworkConfig, build_network
from gfnn.training import TrainConfig, bench_compare, train
from gfnn.data import synthetic_split

SCHEMA_DIR = pathlib.Path(__file__).resolve().parent.parent / "schemas"


def _schema(name):
    with open(SCHEMA_DIR / name) as f:
        return json.load(f)


@pytest.fixture(scope="module")
def bench_doc():
    split = synthetic_split(40, 20, seed=0)
    cfg = TrainConfig(epochs=1, batch_size=20, seed=0)
    return bench_compare(split, cfg, cfg)


def test_train_report_schema():
    split = synthetic_split(30, 10, seed=0)
    net = build_network(NetworkConfig(arch="cnn", init_seed=0))
    report = train(net, split, TrainConfig(epochs=2, batch_size=10))
    jsonschema.validate(report.to_json_dict(), _schema("train-report.schema.json"))


def test_bench_schema(bench_doc):
    jsonschema.validate(bench_doc, _schema("bench.schema.json"))


def test_bench_reports_validate_as_train_reports(bench_doc):
    schema = _schema("train-report.schema.json")
    for rep in bench_doc["reports"]:
        jsonschema.validate(rep, schema)


def test_bank_schema():
    jsonschema.validate(json.loads(bank_to_json(build_bank())),
                        _schema("bank.schema.json"))


def test_eval_schema(tmp_path):
    report = tmp_path / "r.json"
    ckpt = tmp_path / "m.gfnn"
    out = tmp_path / "e.json"
    assert main(["train", "--arch", "gfnn", "--synthetic", "--epochs", "1",
                 "--train-size", "30", "--batch-size", "10",
                 "--out-report", str(report),
                 "--out-checkpoint", str(ckpt)]) == 0
    assert main(["eval", "--checkpoint", str(ckpt), "--synthetic",
                 "--out", str(out)]) == 0
    jsonschema.validate(json.loads(out.read_text()), _schema("eval.schema.json"))
    # the CLI-written report obeys the same schema as the API object
    jsonschema.validate(json.loads(report.read_text()),
                        _schema("train-report.schema.json"))
