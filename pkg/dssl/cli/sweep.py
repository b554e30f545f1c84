import logging
import sys
from pathlib import Path
from typing import Tuple

import numpy as np
import pandas as pd
import rich
import rich.console
import rich.traceback
import rich_click as click

import dssl
from dssl.config import build_gae_config, build_train_config, flatten_config, parse_config
from dssl.errors import DsslError
from dssl.evaluate import SplitSpec, evaluate_representations
from dssl.gae import train_gae
from dssl.graph import load_graph
from dssl.manifest import RunManifest, track_run
from dssl.model import embed
from dssl.synthetic import SyntheticSpec, generate_synthetic
from dssl.trainer import train
from dssl.utils import exit_with_error, limit_threads, parallel_map, setup_logging

# Set up Rich
stderr = rich.console.Console(stderr=True)
rich.traceback.install(console=stderr, width=200, word_wrap=True, extra_lines=1)
click.rich_click.USE_RICH_MARKUP = True
click.rich_click.OPTION_GROUPS = {
    "dssl-sweep": [
        {"name": "Required Options", "options": ["--axis", "--values", "--out"]},
        {"name": "Training Options", "options": ["--config", "--method", "--seeds", "--epochs"]},
        {
            "name": "Graph Options",
            "options": [
                "--edges",
                "--features",
                "--labels",
                "--nodes",
                "--classes",
                "--homophily",
                "--degree",
                "--feature-dim",
                "--signal",
            ],
        },
        {
            "name": "Additional Options",
            "options": [
                "--cpus",
                "--verbose",
                "--silent",
                "--version",
                "--help",
            ],
        },
    ]
}
AXES = ("tau", "sigma1_sq", "sigma2_sq", "gamma", "K", "homophily", "beta", "ablation")
ABLATIONS = {
    "full": {},
    "A1": {"use_local": "false"},
    "A2": {"use_global": "false"},
    "A3": {"use_entropy": "false"},
    "A4": {"beta": "0"},
    "A5": {"uniform_posterior": "true"},
    "no_global_update": {"global_update": "false"},
}
CSV_COLUMNS = ["axis", "value", "seed", "accuracy", "nmi", "loss_final"]
SCORES = ["accuracy", "nmi", "loss_final"]


def trial_settings(axis: str, value: str) -> dict:
    """Configuration keys changed by one sweep value."""
    if axis == "ablation":
        return dict(ABLATIONS[value])
    if axis == "homophily":
        return {}
    return {axis: value}


def load_trial_graph(trial: dict):
    if trial["graph"].get("edges"):
        files = trial["graph"]
        return load_graph(files["edges"], files["features"], files["labels"])
    spec = dict(trial["graph"]["synthetic"], seed=trial["seed"])
    if trial["axis"] == "homophily":
        spec["homophily"] = float(trial["value"])
    return generate_synthetic(SyntheticSpec(**spec))


def run_trial(trial: dict) -> dict:
    """
    Train and evaluate one (method, axis value, seed) combination.

    Returns:
        dict: one CSV row
    """
    graph = load_trial_graph(trial)
    values = dict(trial["base"], **trial_settings(trial["axis"], trial["value"]))
    overrides = {"seed": trial["seed"], "epochs": trial["epochs"]}
    if trial["method"] == "dssl":
        result = train(graph, build_train_config(values, overrides))
        encoder = result.encoder
    else:
        result = train_gae(graph, build_gae_config(values, overrides))
        encoder = result.encoder

    report = evaluate_representations(
        embed(encoder, graph), graph.labels, SplitSpec(seed=trial["seed"]), method=trial["method"]
    )
    loss_final = result.log[-1]["loss_total"] if result.log else None
    logging.info(
        f"{trial['method']} {trial['axis']}={trial['value']} seed={trial['seed']}: "
        f"accuracy={report.accuracy:.4f} nmi={report.nmi:.4f}"
    )
    return {
        "axis": trial["axis_label"],
        "value": trial["value"],
        "seed": trial["seed"],
        "accuracy": report.accuracy,
        "nmi": report.nmi,
        "loss_final": np.nan if loss_final is None else loss_final,
    }


def aggregate(rows: pd.DataFrame) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Per-seed rows followed by one mean row per (axis, value), and a summary with
    mean and standard deviation of every score.
    """
    groups = rows.groupby(["axis", "value"], sort=False)[SCORES]
    means = groups.mean().reset_index()
    means["seed"] = "mean"
    summary = groups.agg(["mean", "std"])
    summary.columns = [f"{score}_{stat}" for score, stat in summary.columns]
    summary["trials"] = groups.size()
    ordered = []
    for key, block in rows.groupby(["axis", "value"], sort=False):
        ordered.append(block)
        ordered.append(means[(means["axis"] == key[0]) & (means["value"] == key[1])])
    table = pd.concat(ordered, ignore_index=True)[CSV_COLUMNS]
    return table, summary.reset_index()


def _split_list(text: str) -> list:
    return [item.strip() for item in text.split(",") if item.strip()]


def check_arguments(axis, values_text, seeds, edges, features, labels):
    """
    Validate the sweep grid before any trial runs.

    Raises:
        click.UsageError: the values, seeds or graph options do not fit the axis

    Returns:
        tuple: the axis values as strings and the integer seeds
    """
    values = _split_list(values_text)
    if not values:
        raise click.UsageError("--values needs at least one value")
    if axis == "ablation":
        unknown = [value for value in values if value not in ABLATIONS]
        if unknown:
            raise click.UsageError(f"Unknown ablation(s): {', '.join(unknown)}")
    if edges and not (features and labels):
        raise click.UsageError("--edges needs --features and --labels")
    if axis == "homophily" and edges:
        raise click.UsageError("A homophily sweep generates its graphs; drop --edges")
    if axis == "homophily":
        try:
            values = [str(float(value)) for value in values]
        except ValueError:
            raise click.UsageError(
                f"Homophily values must be numbers, got '{values_text}'"
            ) from None
    try:
        seed_list = [int(seed) for seed in _split_list(seeds)]
    except ValueError:
        raise click.UsageError(f"--seeds must be comma separated integers, got '{seeds}'") from None
    return values, seed_list


@click.command("sweep")
@click.version_option(dssl.__version__, "--version", "-V")
@click.option("--axis", "-a", required=True, type=click.Choice(AXES), help="Setting to vary")
@click.option(
    "--values",
    "-v",
    "values_text",
    required=True,
    help="Comma separated values of the axis (ablation: full,A1,A2,A3,A4,A5,no_global_update)",
)
@click.option(
    "--out",
    "-o",
    required=True,
    type=click.Path(dir_okay=False),
    help="CSV file for the per-seed and mean rows",
)
@click.option(
    "--config",
    "-c",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    help="Base 'key = value' configuration file",
)
@click.option(
    "--method",
    "-m",
    type=click.Choice(["dssl", "gae", "both"]),
    default="dssl",
    show_default=True,
    help="Which encoder(s) to train",
)
@click.option("--seeds", default="0,1,2", show_default=True, help="Comma separated seeds")
@click.option("--epochs", type=int, help="Number of epochs (overrides the config file)")
@click.option("--edges", "-e", type=click.Path(exists=True, dir_okay=False), help="Edge list")
@click.option("--features", "-f", type=click.Path(exists=True, dir_okay=False), help="Feature CSV")
@click.option("--labels", "-l", type=click.Path(exists=True, dir_okay=False), help="Class ids")
@click.option("--nodes", type=int, default=2000, show_default=True, help="Synthetic graph nodes")
@click.option("--classes", type=int, default=5, show_default=True, help="Synthetic graph classes")
@click.option(
    "--homophily", type=float, default=0.5, show_default=True, help="Synthetic graph homophily"
)
@click.option("--degree", type=float, default=12.0, show_default=True, help="Synthetic mean degree")
@click.option(
    "--feature-dim", type=int, default=32, show_default=True, help="Synthetic feature dimension"
)
@click.option("--signal", type=float, default=1.0, show_default=True, help="Synthetic class signal")
@click.option("--cpus", type=int, default=1, show_default=True, help="Trials to run in parallel")
@click.option("--verbose", is_flag=True, help="Increase the verbosity of output")
@click.option("--silent", is_flag=True, help="Only critical errors will be printed")
def sweep(
    axis,
    values_text,
    out,
    config_path,
    method,
    seeds,
    epochs,
    edges,
    features,
    labels,
    nodes,
    classes,
    homophily,
    degree,
    feature_dim,
    signal,
    cpus,
    verbose,
    silent,
):
    """Train and evaluate over a grid of one setting and write plot-ready CSV."""
    setup_logging(verbose, silent)
    out_path = Path(out)
    stem = out_path.with_suffix("") if out_path.suffix == ".csv" else out_path
    summary_path = f"{stem}-summary.csv"
    methods = ["dssl", "gae"] if method == "both" else [method]
    run = RunManifest(command=f"dssl-sweep --axis {axis} --method {method}")
    try:
        with track_run(run, f"{stem}-manifest.json"), limit_threads():
            values, seed_list = check_arguments(axis, values_text, seeds, edges, features, labels)
            base = parse_config(config_path) if config_path else {}
            graph = {"edges": edges, "features": features, "labels": labels}
            if not edges:
                graph["synthetic"] = {
                    "num_nodes": nodes,
                    "class_count": classes,
                    "feature_dim": feature_dim,
                    "homophily": homophily,
                    "mean_degree": degree,
                    "feature_signal": signal,
                }

            # every setting is validated before the first trial starts
            for value in values:
                settings = dict(base, **trial_settings(axis, value))
                build_train_config(settings, {"epochs": epochs})
                build_gae_config(settings, {"epochs": epochs})
                if axis == "homophily":
                    SyntheticSpec(**dict(graph["synthetic"], homophily=float(value)))
            run.config = flatten_config(build_train_config(base, {"epochs": epochs}))
            run.config.update({"axis": axis, "values": values, "seeds": seed_list})
            run.add_input("config", config_path)
            for label, path in (("edges", edges), ("features", features), ("labels", labels)):
                run.add_input(label, path)
            trials = [
                {
                    "method": name,
                    "axis": axis,
                    "axis_label": f"{name}:{axis}" if method == "both" else axis,
                    "value": value,
                    "seed": seed,
                    "epochs": epochs,
                    "base": base,
                    "graph": graph,
                }
                for name in methods
                for value in values
                for seed in seed_list
            ]
            logging.info(f"Running {len(trials)} trials on {cpus} process(es)")
            rows = pd.DataFrame(parallel_map(run_trial, trials, cpus, "Sweeping"))
            table, summary = aggregate(rows)
            table.to_csv(out_path, index=False, float_format="%.6g")
            summary.to_csv(summary_path, index=False, float_format="%.6g")
            run.add_output("csv", out_path)
            run.add_output("summary", summary_path)
            logging.info(f"Wrote {len(table)} rows to {out_path}")
    except (DsslError, OSError) as e:
        exit_with_error(e)


def main():
    if len(sys.argv) == 1:
        sweep.main(["--help"])
    else:
        sweep()


if __name__ == "__main__":
    main()
