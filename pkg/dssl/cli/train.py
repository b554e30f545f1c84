import json
import logging
import sys

import rich
import rich.console
import rich.traceback
import rich_click as click

import dssl
import dssl.checkpoint as ckpt
from dssl.config import (
    build_gae_config,
    build_train_config,
    config_hash,
    flatten_config,
    parse_config,
)
from dssl.errors import DsslError
from dssl.evaluate import SplitSpec, evaluate_representations
from dssl.gae import train_gae
from dssl.graph import load_graph
from dssl.manifest import RunManifest, track_run
from dssl.trainer import train
from dssl.utils import exit_with_error, limit_threads, mkdir, setup_logging

# Set up Rich
stderr = rich.console.Console(stderr=True)
rich.traceback.install(console=stderr, width=200, word_wrap=True, extra_lines=1)
click.rich_click.USE_RICH_MARKUP = True
click.rich_click.OPTION_GROUPS = {
    "dssl-train": [
        {"name": "Required Options", "options": ["--edges", "--features", "--out"]},
        {
            "name": "Training Options",
            "options": ["--config", "--method", "--labels", "--seed", "--epochs", "--directed"],
        },
        {
            "name": "Additional Options",
            "options": [
                "--prefix",
                "--verbose",
                "--silent",
                "--version",
                "--help",
            ],
        },
    ]
}
METHODS = ("dssl", "gae")


def output_paths(outdir, prefix: str, method: str) -> dict:
    base = f"{outdir}/{prefix}-{method}".replace("//", "/")
    return {
        "checkpoint": f"{base}.ckpt",
        "log": f"{base}-log.jsonl",
        "manifest": f"{base}-manifest.json",
    }


def _probe_during_training(labels, seed: int):
    def evaluator(representations):
        report = evaluate_representations(representations, labels, SplitSpec(seed=seed))
        return {"accuracy": report.accuracy, "nmi": report.nmi}

    return evaluator


@click.command("train")
@click.version_option(dssl.__version__, "--version", "-V")
@click.option(
    "--edges", "-e", required=True, type=click.Path(exists=True, dir_okay=False), help="Edge list"
)
@click.option(
    "--features",
    "-f",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="Headerless feature CSV, one row per node",
)
@click.option(
    "--out",
    "-o",
    required=True,
    type=click.Path(file_okay=False),
    help="Directory to write the checkpoint, log and manifest",
)
@click.option(
    "--config",
    "-c",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    help="A 'key = value' configuration file",
)
@click.option(
    "--method",
    "-m",
    type=click.Choice(METHODS),
    default="dssl",
    show_default=True,
    help="Train the self-supervised model or the autoencoder baseline",
)
@click.option(
    "--labels",
    "-l",
    type=click.Path(exists=True, dir_okay=False),
    help="Class ids, used only for periodic evaluation (eval_every)",
)
@click.option("--seed", type=int, help="Random seed (overrides the config file)")
@click.option("--epochs", type=int, help="Number of epochs (overrides the config file)")
@click.option("--directed", is_flag=True, help="Keep edges directed")
@click.option(
    "--prefix",
    "-p",
    type=str,
    default="dssl",
    show_default=True,
    help="Prefix to use for output files",
)
@click.option("--verbose", is_flag=True, help="Increase the verbosity of output")
@click.option("--silent", is_flag=True, help="Only critical errors will be printed")
def train_command(
    edges,
    features,
    out,
    config_path,
    method,
    labels,
    seed,
    epochs,
    directed,
    prefix,
    verbose,
    silent,
):
    """Train an encoder on a graph and save its checkpoint and per-epoch log."""
    setup_logging(verbose, silent)
    outdir = mkdir(out)
    paths = output_paths(outdir, prefix, method)
    run = RunManifest(command=f"dssl-train --method {method}")
    try:
        with track_run(run, paths["manifest"]), limit_threads():
            values = parse_config(config_path) if config_path else {}
            overrides = {"seed": seed, "epochs": epochs}
            if method == "dssl":
                config = build_train_config(values, overrides)
            else:
                config = build_gae_config(values, overrides)
            run.config = flatten_config(config)
            run.seed = config.seed
            run.add_input("config", config_path)
            for label, path in (("edges", edges), ("features", features), ("labels", labels)):
                run.add_input(label, path)

            graph = load_graph(edges, features, labels, directed=directed)
            digest = config_hash(config)
            with open(paths["log"], "wt") as log_fh:

                def write_record(record):
                    log_fh.write(json.dumps(record, sort_keys=True) + "\n")
                    log_fh.flush()

                if method == "dssl":
                    evaluator = None
                    if graph.has_labels and config.eval_every:
                        evaluator = _probe_during_training(graph.labels, config.seed)
                    result = train(
                        graph,
                        config,
                        on_epoch=write_record,
                        evaluator=evaluator,
                        show_progress=not silent,
                    )
                    checkpoint = ckpt.from_params(result.state.params, digest, config.mlp_hidden)
                else:
                    result = train_gae(
                        graph, config, on_epoch=write_record, show_progress=not silent
                    )
                    checkpoint = ckpt.from_encoder(result.encoder, "gae", digest)

            ckpt.save(paths["checkpoint"], checkpoint)
            for label in ("checkpoint", "log"):
                run.add_output(label, paths[label])
            run.results = {
                "epochs": len(result.log),
                "loss_final": result.log[-1]["loss_total"] if result.log else None,
                "config_hash": digest,
            }
            logging.info(f"Wrote checkpoint: {paths['checkpoint']}")
    except (DsslError, OSError) as e:
        exit_with_error(e)


def main():
    if len(sys.argv) == 1:
        train_command.main(["--help"])
    else:
        train_command()


if __name__ == "__main__":
    main()
