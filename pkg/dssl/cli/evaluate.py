import logging
import sys

import numpy as np
import rich
import rich.console
import rich.traceback
import rich_click as click

import dssl
import dssl.checkpoint as ckpt
import dssl.parsers as parsers
from dssl.errors import DsslError, GraphError, ShapeError
from dssl.evaluate import SplitSpec, evaluate_representations
from dssl.graph import load_graph
from dssl.loss import DsslHyper, node_posteriors
from dssl.manifest import RunManifest, track_run
from dssl.metrics import class_average_homophily, edge_homophily
from dssl.model import embed
from dssl.utils import exit_with_error, limit_threads, setup_logging

# Set up Rich
stderr = rich.console.Console(stderr=True)
rich.traceback.install(console=stderr, width=200, word_wrap=True, extra_lines=1)
click.rich_click.USE_RICH_MARKUP = True
click.rich_click.OPTION_GROUPS = {
    "dssl-eval": [
        {"name": "Required Options", "options": ["--labels"]},
        {
            "name": "Representation Source",
            "options": ["--checkpoint", "--reps", "--edges", "--features", "--directed"],
        },
        {
            "name": "Evaluation Options",
            "options": [
                "--train",
                "--val",
                "--test",
                "--split-seed",
                "--no-stratify",
                "--nmi-average",
            ],
        },
        {
            "name": "Additional Options",
            "options": [
                "--report",
                "--dump-reps",
                "--dump-posteriors",
                "--manifest",
                "--verbose",
                "--silent",
                "--version",
                "--help",
            ],
        },
    ]
}


def _homophily(graph) -> dict:
    try:
        return {
            "edge_homophily": edge_homophily(graph),
            "class_average_homophily": class_average_homophily(graph),
        }
    except GraphError as e:
        logging.debug(f"Skipping homophily in the report: {e}")
        return {}


def check_sources(checkpoint, reps, edges, features, dump_posteriors) -> None:
    """Exactly one representation source, with the graph files a checkpoint needs."""
    if bool(checkpoint) == bool(reps):
        raise click.UsageError("Provide exactly one of --checkpoint or --reps")
    if checkpoint and not (edges and features):
        raise click.UsageError("--checkpoint needs --edges and --features to encode the graph")
    if dump_posteriors and not checkpoint:
        raise click.UsageError("--dump-posteriors needs a --checkpoint")


@click.command("eval")
@click.version_option(dssl.__version__, "--version", "-V")
@click.option(
    "--labels",
    "-l",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="One class id per line (-1 for unlabeled)",
)
@click.option(
    "--checkpoint",
    "-k",
    type=click.Path(exists=True, dir_okay=False),
    help="A checkpoint written by dssl-train",
)
@click.option(
    "--reps",
    type=click.Path(exists=True, dir_okay=False),
    help="A representation CSV (node_id,dim_0,...) instead of a checkpoint",
)
@click.option("--edges", "-e", type=click.Path(exists=True, dir_okay=False), help="Edge list")
@click.option(
    "--features",
    "-f",
    type=click.Path(exists=True, dir_okay=False),
    help="Headerless feature CSV, one row per node",
)
@click.option("--directed", is_flag=True, help="Keep edges directed")
@click.option(
    "--train", "train_share", type=float, default=0.6, show_default=True, help="Train share"
)
@click.option(
    "--val", "val_share", type=float, default=0.2, show_default=True, help="Validation share"
)
@click.option("--test", "test_share", type=float, default=0.2, show_default=True, help="Test share")
@click.option(
    "--split-seed", type=int, default=0, show_default=True, help="Seed for splits and k-means"
)
@click.option("--no-stratify", is_flag=True, help="Split without preserving class proportions")
@click.option(
    "--nmi-average",
    type=click.Choice(["arithmetic", "geometric"]),
    default="arithmetic",
    show_default=True,
    help="Mean of the two entropies used to normalize mutual information",
)
@click.option(
    "--report",
    type=click.Path(dir_okay=False),
    help="Also write the report JSON to this file (it is always printed to stdout)",
)
@click.option(
    "--dump-reps", type=click.Path(dir_okay=False), help="Write the representations as CSV"
)
@click.option(
    "--dump-posteriors",
    type=click.Path(dir_okay=False),
    help="Write each node's latent-factor distribution as CSV",
)
@click.option(
    "--manifest",
    type=click.Path(dir_okay=False),
    default="dssl-eval-manifest.json",
    show_default=True,
    help="Where to write the run manifest",
)
@click.option("--verbose", is_flag=True, help="Increase the verbosity of output")
@click.option("--silent", is_flag=True, help="Only critical errors will be printed")
def evaluate(
    labels,
    checkpoint,
    reps,
    edges,
    features,
    directed,
    train_share,
    val_share,
    test_share,
    split_seed,
    no_stratify,
    nmi_average,
    report,
    dump_reps,
    dump_posteriors,
    manifest,
    verbose,
    silent,
):
    """Score frozen representations with a linear probe and k-means NMI."""
    setup_logging(verbose, silent)
    run = RunManifest(command="dssl-eval", seed=split_seed)
    try:
        with track_run(run, manifest), limit_threads():
            check_sources(checkpoint, reps, edges, features, dump_posteriors)
            split = SplitSpec(train_share, val_share, test_share, split_seed, not no_stratify)
            run.config = {
                "train": train_share,
                "val": val_share,
                "test": test_share,
                "split_seed": split_seed,
                "stratified": not no_stratify,
                "nmi_average": nmi_average,
            }
            for label, path in (
                ("labels", labels),
                ("checkpoint", checkpoint),
                ("reps", reps),
                ("edges", edges),
                ("features", features),
            ):
                run.add_input(label, path)

            homophily = {}
            if checkpoint:
                saved = ckpt.load(checkpoint)
                graph = load_graph(edges, features, labels, directed=directed)
                saved.check_feature_dim(graph.feature_dim)
                representations = embed(saved.encoder(), graph)
                node_labels = graph.labels
                method = saved.method
                homophily = _homophily(graph)
            else:
                node_ids, representations = parsers.representations.parse(reps)
                node_labels = parsers.labels.parse(labels)
                ordered = np.array_equal(node_ids, np.arange(len(node_ids)))
                if len(node_ids) != len(node_labels) or not ordered:
                    raise ShapeError(
                        f"representation rows ({len(node_ids)} node ids) do not match "
                        f"the {len(node_labels)} labels"
                    )
                method = "external"

            result = evaluate_representations(
                representations, node_labels, split, method=method, nmi_average=nmi_average
            )
            result.homophily = homophily
            text = result.to_json()
            click.echo(text)
            run.results = {"accuracy": result.accuracy, "nmi": result.nmi}

            if report:
                with open(report, "wt") as fh:
                    fh.write(text + "\n")
                run.add_output("report", report)
            if dump_reps:
                parsers.representations.write(dump_reps, representations, prefix="dim")
                run.add_output("representations", dump_reps)
            if dump_posteriors:
                posterior = node_posteriors(saved.model_params(), graph, DsslHyper(K=saved.K))
                parsers.representations.write(dump_posteriors, posterior, prefix="k")
                run.add_output("posteriors", dump_posteriors)
    except (DsslError, OSError) as e:
        exit_with_error(e)


def main():
    if len(sys.argv) == 1:
        evaluate.main(["--help"])
    else:
        evaluate()


if __name__ == "__main__":
    main()
