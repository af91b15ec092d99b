import dataclasses
import json

import numpy as np
import pytest

from itactf.config import RunConfig, apply_overrides
from itactf.data import synth_dataset
from itactf.errors import StageError
from itactf.pipeline import BenchShape, bench, run_pipeline, sweep, write_sweep_outputs


@pytest.fixture(scope="module")
def split():
    train, test, _ = synth_dataset(3, 8, 4, 24, 3, noise=0.2, warp=0.5, seed=1, test_per_class=4)
    return train, test


@pytest.fixture(scope="module")
def cfg():
    return apply_overrides(RunConfig(), {"run.seeds": "0,1", "ctf.rank": "4", "ctf.max_epochs": "8",
                                         "mlp.epochs": "20", "mlp.learning_rate": "0.01"})


def test_report_blocks_and_outputs(split, cfg, tmp_path):
    report = run_pipeline(cfg, *split, out_dir=tmp_path)
    text = (tmp_path / "report.txt").read_text()
    assert text.count("[seed ") == 2 and text.count("[aggregate]") == 1 and "[provenance]" in text
    record = json.loads((tmp_path / "report.json").read_text())
    assert record["provenance"]["config_sha256"] == report.provenance["config_sha256"]
    assert set(record["provenance"]["versions"]) >= {"numpy", "scipy", "numba", "python", "itactf"}
    seed_dir = tmp_path / "seed_0"
    for name in ("model.ctf", "loss_trace.csv", "metrics.txt", "metrics.json", "export/A.csv", "export/B.csv",
                 "export/coefficients_class_2.csv", "figures/factors.png", "figures/confusion.png"):
        assert (seed_dir / name).exists(), name
    A = np.loadtxt(seed_dir / "export" / "A.csv", delimiter=",")
    assert A.shape == (4, 4)


def test_determinism_serial_and_threaded(split, cfg, tmp_path):
    a = run_pipeline(cfg, *split, out_dir=tmp_path / "a", figures=False)
    b = run_pipeline(cfg, *split, out_dir=tmp_path / "b", figures=False, jobs=2)
    assert a.to_text() == b.to_text()
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_stage_errors_name_stage_and_seed(split, cfg):
    bad = apply_overrides(cfg, {"run.method": "none", "ctf.beta": "0.4"})
    with pytest.raises(StageError) as info:
        run_pipeline(bad, *split)
    assert info.value.stage == "augment" and info.value.seed == 0


def test_sweep_shapes(split, cfg, tmp_path):
    one = apply_overrides(cfg, {"run.seeds": "0"})
    rows = sweep(one, *split, {"beta": [0.4]})
    direct = run_pipeline(one, *split)
    assert rows[0]["balanced_accuracy_mean"] == direct.aggregate["balanced_accuracy_mean"]
    grid = sweep(one, *split, {"S": [3, 4], "R": [2, 3], "beta": [0.0, 0.4]})
    assert len(grid) == 8 and all(r["status"] == "ok" for r in grid)
    write_sweep_outputs(grid, tmp_path)
    assert (tmp_path / "sweep.csv").read_text().count("\n") == 9
    assert (tmp_path / "trend_beta.png").exists()


def test_sweep_beta_zero_is_plain_factorisation(split, cfg):
    one = apply_overrides(cfg, {"run.seeds": "0"})
    ita_row = sweep(one, *split, {"beta": [0.0]})[0]
    plain = run_pipeline(apply_overrides(one, {"run.method": "none", "ctf.beta": "0"}), *split)
    assert ita_row["balanced_accuracy_mean"] == plain.aggregate["balanced_accuracy_mean"]


def test_sweep_marks_failures(split, cfg):
    rows = sweep(apply_overrides(cfg, {"run.seeds": "0"}), *split, {"S": [1, 3]})
    assert rows[0]["status"] == "failed" and rows[0]["error"] and rows[1]["status"] == "ok"


def test_bench_single_shape():
    rows = bench([BenchShape(N=8, I=2, J=8, R=2, S=3)], ita_samples=2, repeats=1, ctf_epochs=2)
    assert len(rows) == 1 and rows[0]["ita_ratio"] == 1.0 and rows[0]["ctf_epoch_s"] > 0
