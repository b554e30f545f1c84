import json
import sys

import rich
import rich.console
import rich.traceback
import rich_click as click

import dssl
from dssl.errors import DsslError
from dssl.graph import load_graph
from dssl.manifest import RunManifest, track_run
from dssl.metrics import summarize
from dssl.utils import exit_with_error, setup_logging

# Set up Rich
stderr = rich.console.Console(stderr=True)
rich.traceback.install(console=stderr, width=200, word_wrap=True, extra_lines=1)
click.rich_click.USE_RICH_MARKUP = True
click.rich_click.OPTION_GROUPS = {
    "dssl-metrics": [
        {"name": "Required Options", "options": ["--edges", "--features", "--labels"]},
        {
            "name": "Additional Options",
            "options": [
                "--directed",
                "--manifest",
                "--verbose",
                "--silent",
                "--version",
                "--help",
            ],
        },
    ]
}


@click.command()
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
    "--labels",
    "-l",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="One class id per line (-1 for unlabeled)",
)
@click.option("--directed", is_flag=True, help="Keep edges directed")
@click.option(
    "--manifest",
    type=click.Path(dir_okay=False),
    default="dssl-metrics-manifest.json",
    show_default=True,
    help="Where to write the run manifest",
)
@click.option("--verbose", is_flag=True, help="Increase the verbosity of output")
@click.option("--silent", is_flag=True, help="Only critical errors will be printed")
def metrics(edges, features, labels, directed, manifest, verbose, silent):
    """Report homophily and cross-class neighborhood similarity of a labeled graph as JSON."""
    setup_logging(verbose, silent)
    run = RunManifest(command="dssl-metrics", config={"directed": directed})
    try:
        with track_run(run, manifest):
            for label, path in (("edges", edges), ("features", features), ("labels", labels)):
                run.add_input(label, path)
            graph = load_graph(edges, features, labels, directed=directed)
            summary = summarize(graph)
            run.results = {
                "edge_homophily": summary["edge_homophily"],
                "class_average_homophily": summary["class_average_homophily"],
            }
            click.echo(json.dumps(summary, indent=2))
    except (DsslError, OSError) as e:
        exit_with_error(e)


def main():
    if len(sys.argv) == 1:
        metrics.main(["--help"])
    else:
        metrics()


if __name__ == "__main__":
    main()
