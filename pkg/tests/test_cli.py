import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

import dssl.parsers as parsers
from dssl.cli.evaluate import evaluate
from dssl.cli.generate import generate
from dssl.cli.metrics import metrics
from dssl.cli.sweep import sweep
from dssl.cli.train import train_command


def read_json(path):
    return json.loads(Path(path).read_text())


def read_jsonl(path):
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


SMALL_RUN = """\
# a short run on a small graph
K = 2
hidden_dim = 8
out_dim = 4
batch_size = 16
neighbors_per_node = 2
epochs = 2
"""


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL_RUN)
    return str(path)


@pytest.fixture
def synthetic_files(runner, tmp_path):
    outdir = tmp_path / "graph"
    result = runner.invoke(
        generate,
        [
            "--out", str(outdir), "--nodes", "40", "--classes", "2", "--degree", "4",
            "--features", "4", "--signal", "3", "--seed", "1", "--silent",
        ],
    )  # fmt: skip
    assert result.exit_code == 0, result.output
    return {
        "dir": outdir,
        "edges": str(outdir / "synthetic.edges"),
        "features": str(outdir / "synthetic.features.csv"),
        "labels": str(outdir / "synthetic.labels"),
    }


def graph_args(files):
    return ["--edges", files["edges"], "--features", files["features"]]


def test_generate_writes_graph_and_manifest(synthetic_files):
    manifest = read_json(str(synthetic_files["dir"] / "synthetic-manifest.json"))
    assert manifest["status"] == "success"
    assert manifest["exit_code"] == 0
    assert manifest["config"]["num_nodes"] == 40
    assert manifest["results"]["n_edges"] == 80
    assert set(manifest["outputs"]) == {"edges", "features", "labels"}
    assert len(parsers.labels.parse(synthetic_files["labels"])) == 40


def test_generate_is_deterministic(runner, tmp_path, synthetic_files):
    again = tmp_path / "again"
    args = ["--out", str(again), "--nodes", "40", "--classes", "2", "--degree", "4"]
    args += ["--features", "4", "--signal", "3", "--seed", "1", "--silent"]
    assert runner.invoke(generate, args).exit_code == 0
    for name in ("synthetic.edges", "synthetic.features.csv", "synthetic.labels"):
        assert (again / name).read_bytes() == (synthetic_files["dir"] / name).read_bytes()


def test_generate_needs_out(runner):
    result = runner.invoke(generate, ["--nodes", "10"])
    assert result.exit_code == 2


def test_generate_rejects_bad_spec(runner, tmp_path):
    result = runner.invoke(generate, ["--out", str(tmp_path / "bad"), "--homophily", "1.5"])
    assert result.exit_code == 2
    manifest = read_json(str(tmp_path / "bad" / "synthetic-manifest.json"))
    assert manifest["status"] == "failed"
    assert "homophily" in manifest["error"]


def test_metrics_reports_json(runner, tmp_path, synthetic_files):
    manifest_path = tmp_path / "metrics.json"
    result = runner.invoke(
        metrics,
        graph_args(synthetic_files)
        + ["--labels", synthetic_files["labels"], "--manifest", str(manifest_path), "--silent"],
    )
    assert result.exit_code == 0, result.output
    summary = json.loads(result.output[result.output.index("{") :])
    assert summary["n_nodes"] == 40
    assert summary["edge_homophily"] == pytest.approx(0.5)
    manifest = read_json(str(manifest_path))
    assert manifest["results"]["edge_homophily"] == summary["edge_homophily"]
    assert set(manifest["inputs"]) == {"edges", "features", "labels"}


def test_train_and_evaluate(runner, tmp_path, config_file, synthetic_files):
    out = tmp_path / "run"
    result = runner.invoke(
        train_command,
        graph_args(synthetic_files) + ["--out", str(out), "--config", config_file, "--silent"],
    )
    assert result.exit_code == 0, result.output
    log = read_jsonl(str(out / "dssl-dssl-log.jsonl"))
    assert [record["epoch"] for record in log] == [1, 2]
    manifest = read_json(str(out / "dssl-dssl-manifest.json"))
    assert manifest["status"] == "success"
    assert manifest["results"]["epochs"] == 2
    assert manifest["config"]["K"] == 2
    assert manifest["inputs"]["config"]["path"] == config_file

    posteriors = tmp_path / "posteriors.csv"
    reps = tmp_path / "reps.csv"
    result = runner.invoke(
        evaluate,
        graph_args(synthetic_files)
        + [
            "--labels", synthetic_files["labels"],
            "--checkpoint", str(out / "dssl-dssl.ckpt"),
            "--dump-posteriors", str(posteriors),
            "--dump-reps", str(reps),
            "--report", str(tmp_path / "report.json"),
            "--manifest", str(tmp_path / "eval-manifest.json"),
            "--silent",
        ],
    )  # fmt: skip
    assert result.exit_code == 0, result.output
    report = read_json(str(tmp_path / "report.json"))
    assert report["method"] == "dssl"
    assert 0.0 <= report["accuracy"] <= 1.0
    assert report["homophily"]["edge_homophily"] == pytest.approx(0.5)

    table = pd.read_csv(str(posteriors))
    assert list(table.columns) == ["node_id", "k_0", "k_1"]
    assert np.allclose(table[["k_0", "k_1"]].sum(axis=1), 1.0)
    ids, values = parsers.representations.parse(str(reps))
    assert values.shape == (40, 4)

    # the dumped representations score the same through the CSV path
    result = runner.invoke(
        evaluate,
        [
            "--labels", synthetic_files["labels"],
            "--reps", str(reps),
            "--manifest", str(tmp_path / "reps-manifest.json"),
            "--silent",
        ],
    )  # fmt: skip
    assert result.exit_code == 0, result.output
    external = read_json(str(tmp_path / "reps-manifest.json"))
    assert external["results"]["accuracy"] == report["accuracy"]


def test_train_gae(runner, tmp_path, config_file, synthetic_files):
    out = tmp_path / "gae"
    result = runner.invoke(
        train_command,
        graph_args(synthetic_files)
        + ["--out", str(out), "--config", config_file, "--method", "gae", "--epochs", "1"]
        + ["--silent"],
    )
    assert result.exit_code == 0, result.output
    log = read_jsonl(str(out / "dssl-gae-log.jsonl"))
    assert len(log) == 1
    assert log[0]["loss_local"] is None
    result = runner.invoke(
        evaluate,
        graph_args(synthetic_files)
        + [
            "--labels", synthetic_files["labels"],
            "--checkpoint", str(out / "dssl-gae.ckpt"),
            "--dump-posteriors", str(tmp_path / "p.csv"),
            "--manifest", str(tmp_path / "eval-manifest.json"),
            "--silent",
        ],
    )  # fmt: skip
    # an autoencoder checkpoint has no latent factors to report
    assert result.exit_code == 4
    assert read_json(str(tmp_path / "eval-manifest.json"))["status"] == "failed"


def test_failed_training_still_writes_manifest(runner, tmp_path, synthetic_files):
    bad = tmp_path / "bad.cfg"
    bad.write_text("tau = 2\n")
    out = tmp_path / "run"
    result = runner.invoke(
        train_command,
        graph_args(synthetic_files) + ["--out", str(out), "--config", str(bad), "--silent"],
    )
    assert result.exit_code == 2
    manifest = read_json(str(out / "dssl-dssl-manifest.json"))
    assert manifest["status"] == "failed"
    assert manifest["exit_code"] == 2
    assert manifest["error"].startswith("tau:")


def test_eval_needs_one_source(runner, tmp_path, synthetic_files):
    manifest_path = tmp_path / "eval.json"
    result = runner.invoke(
        evaluate, ["--labels", synthetic_files["labels"], "--manifest", str(manifest_path)]
    )
    assert result.exit_code == 2
    manifest = read_json(str(manifest_path))
    assert manifest["status"] == "failed"
    assert manifest["exit_code"] == 2
    assert "exactly one" in manifest["error"]


def test_eval_rejects_mismatched_reps(runner, tmp_path, synthetic_files):
    reps = tmp_path / "short.csv"
    parsers.representations.write(str(reps), np.ones((3, 2)))
    manifest_path = tmp_path / "eval.json"
    result = runner.invoke(
        evaluate,
        ["--labels", synthetic_files["labels"], "--reps", str(reps)]
        + ["--manifest", str(manifest_path), "--silent"],
    )
    assert result.exit_code == 2
    assert read_json(str(manifest_path))["status"] == "failed"


def sweep_args(tmp_path, config_file, *extra):
    return [
        "--out", str(tmp_path / "sweep.csv"), "--config", config_file, "--epochs", "1",
        "--nodes", "40", "--classes", "2", "--degree", "4", "--feature-dim", "4",
        "--signal", "3", "--silent", *extra,
    ]  # fmt: skip


def test_sweep_writes_rows_and_summary(runner, tmp_path, config_file):
    result = runner.invoke(
        sweep,
        sweep_args(tmp_path, config_file, "--axis", "tau", "--values", "0.5,0.9", "--seeds", "0,1"),
    )
    assert result.exit_code == 0, result.output
    table = pd.read_csv(str(tmp_path / "sweep.csv"))
    assert list(table.columns) == ["axis", "value", "seed", "accuracy", "nmi", "loss_final"]
    assert table["seed"].astype(str).tolist() == ["0", "1", "mean", "0", "1", "mean"]
    assert set(table["axis"]) == {"tau"}

    summary = pd.read_csv(str(tmp_path / "sweep-summary.csv"))
    assert summary["trials"].tolist() == [2, 2]
    assert "accuracy_std" in summary.columns
    manifest = read_json(str(tmp_path / "sweep-manifest.json"))
    assert manifest["status"] == "success"
    assert manifest["config"]["values"] == ["0.5", "0.9"]


def test_sweep_both_methods_over_ablations(runner, tmp_path, config_file):
    result = runner.invoke(
        sweep,
        sweep_args(
            tmp_path, config_file, "--axis", "ablation", "--values", "full,A2", "--seeds", "0"
        )
        + ["--method", "both"],
    )
    assert result.exit_code == 0, result.output
    table = pd.read_csv(str(tmp_path / "sweep.csv"))
    assert len(table) == 8
    assert set(table["axis"]) == {"dssl:ablation", "gae:ablation"}


@pytest.mark.parametrize(
    "extra",
    [
        ["--axis", "learning_rate", "--values", "0.1"],
        ["--axis", "ablation", "--values", "A9"],
        ["--axis", "homophily", "--values", "high"],
        ["--axis", "tau", "--values", "0.5", "--seeds", "zero"],
    ],
)
def test_sweep_usage_errors(runner, tmp_path, config_file, extra):
    result = runner.invoke(sweep, sweep_args(tmp_path, config_file, *extra))
    assert result.exit_code == 2
    assert not (tmp_path / "sweep.csv").exists()


def test_sweep_usage_errors_leave_a_manifest(runner, tmp_path, config_file):
    result = runner.invoke(
        sweep, sweep_args(tmp_path, config_file, "--axis", "ablation", "--values", "full,A9")
    )
    assert result.exit_code == 2
    manifest = read_json(str(tmp_path / "sweep-manifest.json"))
    assert manifest["status"] == "failed"
    assert manifest["exit_code"] == 2
    assert "A9" in manifest["error"]


def test_sweep_rejects_invalid_settings_before_training(runner, tmp_path, config_file):
    result = runner.invoke(
        sweep, sweep_args(tmp_path, config_file, "--axis", "tau", "--values", "0.5,3")
    )
    assert result.exit_code == 2
    manifest = read_json(str(tmp_path / "sweep-manifest.json"))
    assert manifest["status"] == "failed"
    assert not (tmp_path / "sweep.csv").exists()
