import json

import pandas as pd
import pytest

from main import main


TRAIN_FLAGS = ["--max-iters", "10", "--inducing", "6", "--batch-size", "20", "--no-convergence-check", "--workers", "1"]


@pytest.fixture
def dataset(tmp_path):
    path = tmp_path / "single.csv"
    assert main(["gen-single", "--grid", "4x3x5", "--noise-level", "low", "--seed", "1", "--out", str(path)]) == 0
    return path


@pytest.fixture
def artifact(tmp_path, dataset):
    out = tmp_path / "model.json"
    assert main(["train", "--data", str(dataset), "--out", str(out), "--model", "sv"] + TRAIN_FLAGS) == 0
    return out


def test_generate_writes_the_grid(dataset):
    frame = pd.read_csv(dataset)
    assert list(frame.columns) == ["x_1", "x_2", "t_1", "y_1"]
    assert len(frame) == 60
    assert set(frame["t_1"]) == {1, 2, 3, 4, 5}


def test_train_writes_artifact_and_trace(artifact, tmp_path):
    data = json.loads(artifact.read_text())
    assert data["family"] == "sv"
    trace = pd.read_csv(tmp_path / "model_trace.csv")
    assert list(trace.columns) == ["iteration", "elbo", "kl", "lt", "seconds"]
    assert len(trace) == 10


def test_artifact_bytes_ignore_thread_count_and_log_level(dataset, tmp_path, monkeypatch):
    flags = [f for f in TRAIN_FLAGS if f not in ("--workers", "1")]
    texts = []
    for threads, level in (("1", "INFO"), ("3", "DEBUG")):
        monkeypatch.setenv("MIXEDGP_THREADS", threads)
        out = tmp_path / f"model_{threads}.json"
        argv = ["--log-level", level, "train", "--data", str(dataset), "--out", str(out), "--model", "sv"]
        assert main(argv + flags) == 0
        texts.append(out.read_bytes())
    assert texts[0] == texts[1]
    assert "workers" not in json.loads(texts[0])["config"]


def test_predict_to_stdout(artifact, dataset, capsys):
    capsys.readouterr()
    assert main(["predict", "--model", str(artifact), "--queries", str(dataset)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "mean_1,var_1"
    assert len(lines) == 61


def test_predict_to_file_matches_stdout(artifact, dataset, tmp_path, capsys):
    out = tmp_path / "pred.csv"
    assert main(["predict", "--model", str(artifact), "--queries", str(dataset), "--out", str(out)]) == 0
    capsys.readouterr()
    main(["predict", "--model", str(artifact), "--queries", str(dataset)])
    assert out.read_text().strip() == capsys.readouterr().out.strip()


def test_roundtrip_passes(artifact, capsys):
    assert main(["roundtrip", "--model", str(artifact)]) == 0
    assert "PASS" in capsys.readouterr().out


def test_latent_and_trace_exports(artifact, tmp_path):
    latent = tmp_path / "latent.csv"
    assert main(["latent-export", "--model", str(artifact), "--out", str(latent)]) == 0
    assert len(pd.read_csv(latent)) == 5
    assert (tmp_path / "latent_collinearity.csv").exists()
    trace = tmp_path / "trace.csv"
    assert main(["trace-export", "--model", str(artifact), "--out", str(trace)]) == 0
    assert len(pd.read_csv(trace)) == 10


def test_cv_writes_report_and_summary(dataset, tmp_path, capsys):
    out = tmp_path / "cv.csv"
    code = main(["cv", "--data", str(dataset), "--folds", "3", "--out", str(out), "--model", "sv"] + TRAIN_FLAGS)
    assert code == 0
    assert len(pd.read_csv(out)) == 3
    assert (tmp_path / "cv_summary.csv").exists()
    assert "3-fold CV RMSE" in capsys.readouterr().out


def test_malformed_csv_exits_with_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x_1,t_1,y_1\n0.1,1,oops\n")
    code = main(["train", "--data", str(bad), "--out", str(tmp_path / "m.json")] + TRAIN_FLAGS)
    assert code == 3
    assert "ERROR MALFORMED_CSV" in capsys.readouterr().err


def test_missing_file_is_a_usage_error(tmp_path, capsys):
    code = main(["predict", "--model", str(tmp_path / "none.json"), "--queries", str(tmp_path / "q.csv")])
    assert code == 2
    assert "ERROR USAGE" in capsys.readouterr().err


def test_unknown_model_is_a_usage_error(dataset, tmp_path, capsys):
    code = main(["train", "--data", str(dataset), "--out", str(tmp_path / "m.json"), "--model", "kriging"])
    assert code == 2


def test_level_outside_the_model_schema(artifact, tmp_path, capsys):
    queries = tmp_path / "q.csv"
    queries.write_text("x_1,x_2,t_1\n0.5,0.5,6\n")
    assert main(["predict", "--model", str(artifact), "--queries", str(queries)]) == 3
    assert "LEVEL_OUT_OF_RANGE" in capsys.readouterr().err
