import csv
import json

import numpy as np
import pytest

from otcluster.cli import main


def gen_args(out, m=6, n=8):
    return ["generate", "nc", "--m", str(m), "--n", str(n), "--d", "2",
            "--M", "2", "--Ki", "3", "--k", "2", "--seed", "7",
            "--out", str(out)]


def test_generate_writes_dataset_and_truth(tmp_path):
    out = tmp_path / "data.jsonl"
    assert main(gen_args(out)) == 0
    assert out.exists()
    truth = json.loads((tmp_path / "data.jsonl.truth.json").read_text())
    assert len(truth["locals"]) == 6
    assert len(truth["globals"]) == 2
    assert len(truth["z"]) == 6


def test_generate_is_deterministic(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    main(gen_args(a))
    main(gen_args(b))
    assert a.read_bytes() == b.read_bytes()


def test_generate_rejects_bad_params(tmp_path, capsys):
    rc = main(gen_args(tmp_path / "x.jsonl", m=0))
    assert rc == 2
    assert "error" in capsys.readouterr().err


def fit_args(data, model, extra=()):
    return ["fit", "mwm", "--data", str(data), "--out", str(model),
            "--k", "2", "--M", "2", "--K", "8", "--seed", "1",
            "--max-iter", "20"] + list(extra)


def test_fit_writes_model_with_trace(tmp_path):
    data = tmp_path / "data.jsonl"
    main(gen_args(data))
    model_path = tmp_path / "model.json"
    rc = main(fit_args(data, model_path))
    assert rc in (0, 3)
    model = json.loads(model_path.read_text())
    assert model["variant"] == "mwm"
    trace = model["objective_trace"]
    assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))
    assert model["wall_clock_s"] > 0
    assert len(model["iteration_seconds"]) == len(trace) - 1


def test_fit_non_convergence_exits_3_but_writes_model(tmp_path, capsys):
    data = tmp_path / "data.jsonl"
    main(gen_args(data))
    model_path = tmp_path / "model.json"
    rc = main(fit_args(data, model_path,
                       extra=["--max-iter", "1", "--tol", "1e-12"]))
    assert rc == 3
    assert "warning" in capsys.readouterr().err
    assert model_path.exists()


def test_fit_mwmc_without_contexts_exits_2(tmp_path, capsys):
    data = tmp_path / "data.jsonl"
    main(gen_args(data))
    rc = main(["fit", "mwmc", "--data", str(data),
               "--out", str(tmp_path / "m.json"), "--k", "2", "--M", "2"])
    assert rc == 2
    assert "error" in capsys.readouterr().err


def fitted(tmp_path):
    data = tmp_path / "data.jsonl"
    model = tmp_path / "model.json"
    main(gen_args(data))
    main(fit_args(data, model))
    return data, model


def test_eval_requires_truth_or_labels(tmp_path, capsys):
    data, model = fitted(tmp_path)
    rc = main(["eval", "--model", str(model), "--data", str(data)])
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_eval_emits_expected_csv(tmp_path):
    data, model = fitted(tmp_path)
    out = tmp_path / "scores.csv"
    rc = main(["eval", "--model", str(model), "--data", str(data),
               "--labels", "--truth", str(data) + ".truth.json",
               "--run-id", "r1", "--out", str(out)])
    assert rc == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 1
    row = rows[0]
    assert list(row) == ["run_id", "variant", "nmi", "ari", "ami",
                         "w_to_truth", "wall_clock_s"]
    assert row["run_id"] == "r1"
    assert row["variant"] == "mwm"
    for col in ("nmi", "ari", "ami", "w_to_truth", "wall_clock_s"):
        float(row[col])
    assert 0.0 <= float(row["nmi"]) <= 1.0


def test_bench_rows_cover_the_sweep(tmp_path):
    out = tmp_path / "bench.csv"
    rc = main(["bench", "--sweep-m", "4,6", "--variants", "mwm",
               "--workers-list", "1,2", "--n", "6", "--d", "2",
               "--M", "2", "--k", "2", "--K", "6", "--max-iter", "2",
               "--out", str(out)])
    assert rc == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 4
    assert {(r["m"], r["workers"]) for r in rows} == {
        ("4", "1"), ("4", "2"), ("6", "1"), ("6", "2")}
    for r in rows:
        assert float(r["seconds"]) > 0
        np.isfinite(float(r["final_objective"]))


def test_check_equivalence_passes(capsys):
    rc = main(["check-equivalence", "--instances", "4", "--max-m", "3",
               "--max-M", "2", "--seed", "0"])
    assert rc == 0
    assert "max value gap" in capsys.readouterr().out


def test_seed_env_var_sets_default(tmp_path, monkeypatch):
    monkeypatch.setenv("OTCLUSTER_SEED", "7")
    a = tmp_path / "env.jsonl"
    rc = main(["generate", "nc", "--m", "6", "--n", "8", "--d", "2",
               "--M", "2", "--Ki", "3", "--k", "2", "--out", str(a)])
    assert rc == 0
    b = tmp_path / "flag.jsonl"
    monkeypatch.delenv("OTCLUSTER_SEED")
    main(gen_args(b))
    assert a.read_bytes() == b.read_bytes()
