"""Command-line surface.

Subcommands: synth (generate a city), build (generate tasks), run (execute a
suite), report / plot-data (aggregate a finished run), replay (recompute
metrics from a log), serve (session service).

Exit codes: 0 success, 1 usage error, 2 invalid input, 3 run finished with
partial episode failures.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .bench import (
    generate_task,
    load_mapping_catalog,
    load_tasks,
    save_tasks,
    validate_task,
)
from .geo import CoordinateError
from .graph import GraphError, load_graph, save_graph
from .metrics import metrics_row
from .policies import PolicyConfig
from .runner import (
    ReplayError,
    RunSpec,
    load_metric_rows,
    replay,
    run_suite,
    write_plot_files,
    write_report_files,
)
from .synthcity import CitySpec, generate_city

INVALID_INPUT_ERRORS = (
    GraphError,
    CoordinateError,
    ReplayError,
    ValueError,
    KeyError,
    OSError,
    json.JSONDecodeError,
)


@click.group()
def cli() -> None:
    """Urban-navigation benchmark toolkit."""


@cli.command()
@click.option("--layout", type=click.Choice(["grid", "irregular"]), default="grid")
@click.option("--rows", type=int, default=10, show_default=True)
@click.option("--cols", type=int, default=10, show_default=True)
@click.option("--node-count", type=int, default=0)
@click.option("--jitter", type=float, default=0.0)
@click.option("--spacing-m", type=float, default=20.0, show_default=True)
@click.option("--poi-density", type=float, default=0.3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-graph", type=click.Path(), required=True)
@click.option("--out-observations", type=click.Path(), required=True)
def synth(
    layout: str,
    rows: int,
    cols: int,
    node_count: int,
    jitter: float,
    spacing_m: float,
    poi_density: float,
    seed: int,
    out_graph: str,
    out_observations: str,
) -> None:
    """Generate a seeded synthetic city: graph and observation files."""
    spec = CitySpec(
        layout=layout,
        rows=rows,
        cols=cols,
        node_count=node_count,
        jitter=jitter,
        spacing_m=spacing_m,
        poi_density=poi_density,
        seed=seed,
    )
    g, observations = generate_city(spec)
    save_graph(g, out_graph)
    observations.save(out_observations)
    click.echo(
        f"wrote {len(g.nodes)} nodes, {len(g.pois)} POIs -> {out_graph}, {out_observations}"
    )


@cli.command()
@click.option("--graph", "graph_file", type=click.Path(exists=True), required=True)
@click.option("--mappings", "mapping_file", type=click.Path(exists=True), default=None)
@click.option("--count", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--city", default="synthetic", show_default=True)
@click.option("--min-radius-m", type=float, default=100.0, show_default=True)
@click.option("--out", "out_file", type=click.Path(), required=True)
def build(
    graph_file: str,
    mapping_file: str | None,
    count: int,
    seed: int,
    city: str,
    min_radius_m: float,
    out_file: str,
) -> None:
    """Generate validated tasks by cycling the need-mapping catalog."""
    g = load_graph(graph_file)
    catalog = load_mapping_catalog(mapping_file)
    tasks = []
    seen = set()
    attempt = 0
    # Cycle the catalog with fresh seeds until enough tasks validate.
    while len(tasks) < count and attempt < count * 40:
        mapping = catalog[attempt % len(catalog)]
        task = generate_task(
            g, mapping, seed=seed + attempt, city=city, min_radius_m=min_radius_m
        )
        attempt += 1
        if task is None or task.id in seen:
            continue
        if not validate_task(g, task).passed:
            continue
        seen.add(task.id)
        tasks.append(task)
    if len(tasks) < count:
        raise click.ClickException(
            f"only generated {len(tasks)}/{count} feasible tasks for this graph"
        )
    save_tasks(tasks, out_file)
    click.echo(f"wrote {len(tasks)} tasks -> {out_file}")


def _spec_from_config(config_file: str | None, overrides: dict) -> RunSpec:
    doc = {}
    if config_file:
        doc = json.loads(Path(config_file).read_text())
    policy_doc = dict(doc.get("policy", {}))
    for key in ("kind", "noise_p", "endpoint", "model", "timeout_s", "temperature"):
        value = overrides.pop(f"policy_{key}", None)
        if value is not None:
            policy_doc[key] = value
    for key, value in overrides.items():
        if value is not None:
            doc[key] = value
    doc["policy"] = policy_doc
    return RunSpec.from_dict(doc)


@cli.command()
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
@click.option("--graph-file", type=click.Path(), default=None)
@click.option("--task-file", type=click.Path(), default=None)
@click.option("--observations-file", type=click.Path(), default=None)
@click.option("--policy-kind", default=None)
@click.option("--policy-noise-p", "policy_noise_p", type=float, default=None)
@click.option("--policy-endpoint", default=None)
@click.option("--policy-model", default=None)
@click.option("--strategies", default=None, help="Comma-separated, e.g. B3,R3")
@click.option("--rounds", type=int, default=None)
@click.option("--parallelism", type=int, default=None)
@click.option("--output-dir", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--max-steps", type=int, default=None)
def run(config_file: str | None, strategies: str | None, **overrides) -> None:
    """Execute a task suite and write logs, metrics, and a manifest."""
    if strategies is not None:
        overrides["strategies"] = [s for s in strategies.split(",") if s]
    spec = _spec_from_config(config_file, overrides)
    artifact = run_suite(spec)
    click.echo(
        f"run {artifact.run_id}: {artifact.manifest['episodes']} episodes, "
        f"{artifact.manifest['errors']} errors -> {artifact.output_dir}"
    )
    if artifact.manifest["errors"]:
        sys.exit(3)


@cli.command("report")
@click.option("--run-dir", type=click.Path(exists=True), required=True)
@click.option(
    "--group-by",
    type=click.Choice(["overall", "category", "city"]),
    default="overall",
    show_default=True,
)
def report_cmd(run_dir: str, group_by: str) -> None:
    """Aggregate a finished run into grouped mean tables."""
    rows = load_metric_rows(run_dir)
    paths = write_report_files(Path(run_dir), rows, group_by)
    for path in paths:
        click.echo(f"wrote {path}")


@cli.command("plot-data")
@click.option("--run-dir", type=click.Path(exists=True), required=True)
def plot_data_cmd(run_dir: str) -> None:
    """Emit plain-CSV plot inputs (steps/nDTW scatter, per-category TCP)."""
    rows = load_metric_rows(run_dir)
    paths = write_plot_files(Path(run_dir), rows)
    for path in paths:
        click.echo(f"wrote {path}")


@cli.command("replay")
@click.option("--log", "log_file", type=click.Path(exists=True), required=True)
@click.option("--graph", "graph_file", type=click.Path(exists=True), required=True)
@click.option("--tasks", "task_file", type=click.Path(exists=True), required=True)
@click.option("--task-id", default=None, help="Defaults to the log header's task id.")
def replay_cmd(log_file: str, graph_file: str, task_file: str, task_id: str | None) -> None:
    """Recompute metrics from a stored trajectory log."""
    g = load_graph(graph_file)
    tasks = {t.id: t for t in load_tasks(task_file)}
    if task_id is None:
        header = json.loads(Path(log_file).read_text().splitlines()[0])
        task_id = header.get("task_id", "")
    task = tasks.get(task_id)
    if task is None:
        raise click.ClickException(f"task {task_id!r} not found in {task_file}")
    metrics = replay(log_file, g, task)
    click.echo(json.dumps(metrics_row(metrics), indent=1, sort_keys=True))


@cli.command()
@click.option("--graph", "graph_file", type=click.Path(exists=True), required=True)
@click.option("--tasks", "task_file", type=click.Path(exists=True), required=True)
@click.option("--observations", "observations_file", type=click.Path(exists=True), required=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--snapshot-dir", type=click.Path(), default=None)
def serve(
    graph_file: str,
    task_file: str,
    observations_file: str,
    host: str,
    port: int,
    snapshot_dir: str | None,
) -> None:
    """Serve live sessions over HTTP for the browser console."""
    import uvicorn

    from .service import create_app_from_files

    app = create_app_from_files(graph_file, task_file, observations_file, snapshot_dir)
    uvicorn.run(app, host=host, port=port)


def main() -> int:
    try:
        cli.main(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 2
    except click.exceptions.Abort:
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)
    except INVALID_INPUT_ERRORS as exc:
        click.echo(f"invalid input: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
