"""Batch orchestration: run task suites under a (policy, strategy stack)
configuration, persist JSON-lines trajectory logs, aggregate metrics, and
emit plot data. Deterministic for scripted policies."""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .bench import Task, load_tasks
from .episode import EpisodeConfig, StepRecord, Trajectory
from .graph import NavGraph, load_graph
from .metrics import (
    METRIC_COLUMNS,
    EpisodeMetrics,
    MetricReport,
    compute_episode_metrics,
    metrics_row,
    render_report_value,
)
from .policies import PolicyConfig, make_policy
from .strategies import StackConfig, run_rounds
from .synthcity import ObservationTable

TCP_THRESHOLDS = (40.0, 50.0, 60.0)


class ReplayError(ValueError):
    """Trajectory log is structurally invalid."""


@dataclass(frozen=True)
class RunSpec:
    graph_file: str
    task_file: str
    observations_file: str
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    strategies: tuple = ()
    rounds: int = 1
    parallelism: int = 1
    output_dir: str = "runs/out"
    seed: int = 0
    max_steps: int = 35

    def __post_init__(self) -> None:
        if self.parallelism < 1:
            raise ValueError("parallelism must be at least 1")
        if self.rounds < 1:
            raise ValueError("rounds must be at least 1")

    def to_dict(self) -> dict:
        doc = {
            "graph_file": self.graph_file,
            "task_file": self.task_file,
            "observations_file": self.observations_file,
            "policy": vars(self.policy),
            "strategies": list(self.strategies),
            "rounds": self.rounds,
            "parallelism": self.parallelism,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "max_steps": self.max_steps,
        }
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RunSpec":
        policy = PolicyConfig(**doc.get("policy", {}))
        return cls(
            graph_file=doc["graph_file"],
            task_file=doc["task_file"],
            observations_file=doc["observations_file"],
            policy=policy,
            strategies=tuple(
                tuple(sorted(s.items())) if isinstance(s, dict) else s
                for s in doc.get("strategies", ())
            ),
            rounds=int(doc.get("rounds", 1)),
            parallelism=int(doc.get("parallelism", 1)),
            output_dir=doc.get("output_dir", "runs/out"),
            seed=int(doc.get("seed", 0)),
            max_steps=int(doc.get("max_steps", 35)),
        )


@dataclass
class EpisodeResult:
    task: Task
    trajectories: list[Trajectory]
    metrics: EpisodeMetrics | None
    error: str = ""


@dataclass
class RunArtifact:
    run_id: str
    output_dir: Path
    results: list[EpisodeResult]
    manifest: dict

    @property
    def failures(self) -> list[EpisodeResult]:
        return [r for r in self.results if r.error or (r.trajectories and r.trajectories[-1].termination == "error")]


def derive_seed(base: int, *parts) -> int:
    digest = hashlib.sha256(("|".join([str(base), *map(str, parts)])).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _strategy_config(spec: RunSpec) -> StackConfig:
    normalized = []
    for s in spec.strategies:
        if isinstance(s, tuple) and s and isinstance(s[0], tuple):
            normalized.append(dict(s))
        else:
            normalized.append(s)
    return StackConfig.parse(normalized)


def _run_one(
    g: NavGraph,
    observations: ObservationTable,
    task: Task,
    spec: RunSpec,
    stack_config: StackConfig,
) -> EpisodeResult:
    cfg = EpisodeConfig(
        max_steps=spec.max_steps,
        tcp_thresholds=TCP_THRESHOLDS,
        seed=derive_seed(spec.seed, task.id),
    )

    def policy_factory(round_index: int):
        pc = PolicyConfig(
            **{**vars(spec.policy), "seed": derive_seed(spec.seed, task.id, round_index)}
        )
        return make_policy(pc, graph=g, task=task)

    try:
        n_rounds = spec.rounds if stack_config.uses_cross_round_memory else max(1, spec.rounds)
        trajectories = run_rounds(
            g,
            task,
            policy_factory,
            stack_config,
            cfg,
            observations,
            n_rounds=n_rounds,
        )
        final = trajectories[-1]
        metrics = compute_episode_metrics(g, final, task, TCP_THRESHOLDS)
        error = final.error if final.termination == "error" else ""
        return EpisodeResult(task=task, trajectories=trajectories, metrics=metrics, error=error)
    except Exception as exc:  # episode isolation: one failure never kills the suite
        return EpisodeResult(task=task, trajectories=[], metrics=None, error=str(exc))


def write_trajectory_log(path: Path, task: Task, traj: Trajectory) -> None:
    with path.open("w") as fh:
        header = {
            "type": "header",
            "task_id": task.id,
            "round_index": traj.config.round_index,
            "rounds_total": traj.config.rounds_total,
            "max_steps": traj.config.max_steps,
            "seed": traj.config.seed,
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for record in traj.steps:
            fh.write(json.dumps({"type": "step", **record.to_dict()}, sort_keys=True) + "\n")
        footer = {
            "type": "footer",
            "terminal_node": traj.terminal_node,
            "termination": traj.termination,
            "error": traj.error,
        }
        fh.write(json.dumps(footer, sort_keys=True) + "\n")


def read_trajectory_log(path: Path) -> Trajectory:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ReplayError(f"{path}: empty log")
    records: list[StepRecord] = []
    header = footer = None
    for lineno, line in enumerate(lines, start=1):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ReplayError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        kind = rec.get("type")
        if kind == "header":
            header = rec
        elif kind == "step":
            records.append(StepRecord.from_dict(rec))
        elif kind == "footer":
            footer = rec
        else:
            raise ReplayError(f"{path}:{lineno}: unknown record type {kind!r}")
    if header is None:
        raise ReplayError(f"{path}:1: missing header record")
    if footer is None:
        raise ReplayError(f"{path}:{len(lines)}: truncated log, missing footer record")
    cfg = EpisodeConfig(
        max_steps=int(header["max_steps"]),
        round_index=int(header["round_index"]),
        rounds_total=int(header["rounds_total"]),
        seed=int(header["seed"]),
    )
    return Trajectory(
        task_id=header["task_id"],
        steps=records,
        terminal_node=footer["terminal_node"],
        termination=footer["termination"],
        config=cfg,
        error=footer.get("error", ""),
    )


def replay(log_path: str | Path, g: NavGraph, task: Task) -> EpisodeMetrics:
    """Recompute metrics from the log alone; structural errors raise."""
    traj = read_trajectory_log(Path(log_path))
    if traj.task_id != task.id:
        raise ReplayError(f"log is for task {traj.task_id!r}, expected {task.id!r}")
    seq = traj.node_sequence()
    flagged = {i for i, s in enumerate(traj.steps) if s.backtrack}
    for i, (a, b) in enumerate(zip(seq, seq[1:])):
        adjacent = any(e.to == b for e, _ in g.neighbors(a))
        if not adjacent and i not in flagged:
            raise ReplayError(f"non-adjacent transition {a!r} -> {b!r} not flagged as backtrack")
    return compute_episode_metrics(g, traj, task, TCP_THRESHOLDS)


def run_suite(spec: RunSpec) -> RunArtifact:
    """Execute every task; failures are isolated per episode."""
    t0 = time.perf_counter()
    g = load_graph(spec.graph_file)
    observations = ObservationTable.load(spec.observations_file)
    tasks = load_tasks(spec.task_file)
    stack_config = _strategy_config(spec)

    out = Path(spec.output_dir)
    (out / "trajectories").mkdir(parents=True, exist_ok=True)

    if spec.parallelism == 1:
        results = [_run_one(g, observations, t, spec, stack_config) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=spec.parallelism) as pool:
            results = list(
                pool.map(lambda t: _run_one(g, observations, t, spec, stack_config), tasks)
            )
    results.sort(key=lambda r: r.task.id)

    for result in results:
        for traj in result.trajectories:
            name = f"{result.task.id}_r{traj.config.round_index}.jsonl"
            write_trajectory_log(out / "trajectories" / name, result.task, traj)

    _write_metrics_table(out, results)
    config_hash = hashlib.sha256(
        json.dumps(spec.to_dict(), sort_keys=True).encode()
    ).hexdigest()
    manifest = {
        "run_id": config_hash[:16],
        "config": spec.to_dict(),
        "config_hash": config_hash,
        "python": platform.python_version(),
        "episodes": len(results),
        "errors": sum(1 for r in results if r.error),
        "wall_time_s": round(time.perf_counter() - t0, 3),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return RunArtifact(
        run_id=manifest["run_id"], output_dir=out, results=results, manifest=manifest
    )


def _result_rows(results: list[EpisodeResult]) -> list[dict]:
    rows = []
    for r in results:
        if r.metrics is None:
            continue
        row = {"task_id": r.task.id, "category": r.task.category, "city": r.task.city}
        row.update({k: metrics_row(r.metrics)[k] for k in METRIC_COLUMNS})
        rows.append(row)
    return rows


def _write_metrics_table(out: Path, results: list[EpisodeResult]) -> None:
    rows = _result_rows(results)
    with (out / "metrics.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["task_id", "category", "city", *METRIC_COLUMNS])
        writer.writeheader()
        writer.writerows(rows)
    (out / "metrics.json").write_text(json.dumps(rows, indent=1, sort_keys=True))


def load_metric_rows(run_dir: str | Path) -> list[dict]:
    path = Path(run_dir) / "metrics.json"
    if not path.exists():
        raise FileNotFoundError(f"{path}: no metrics table; run the suite first")
    return json.loads(path.read_text())


def _grouped_means(rows: list[dict], group_by: str) -> list:
    if group_by not in ("overall", "category", "city"):
        raise ValueError(f"unknown grouping {group_by!r}")
    groups: dict[str, list[dict]] = {}
    for row in rows:
        groups.setdefault("overall", []).append(row)
        if group_by != "overall":
            groups.setdefault(row[group_by], []).append(row)
    reports = []
    for name in ["overall"] + sorted(k for k in groups if k != "overall"):
        members = groups.get(name)
        if not members:
            continue
        means = {c: sum(r[c] for r in members) / len(members) for c in METRIC_COLUMNS}
        reports.append(MetricReport(group=name, episode_count=len(members), means=means))
    return reports


def write_report_files(out: Path, rows: list[dict], group_by: str) -> list[Path]:
    reports = _grouped_means(rows, group_by)
    csv_path = out / f"report_{group_by}.csv"
    json_path = out / f"report_{group_by}.json"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "episodes", *METRIC_COLUMNS])
        for rep in reports:
            writer.writerow(
                [rep.group, rep.episode_count]
                + [render_report_value(c, rep.means[c]) for c in METRIC_COLUMNS]
            )
    json_path.write_text(
        json.dumps(
            [
                {"group": r.group, "episodes": r.episode_count, "means": r.means}
                for r in reports
            ],
            indent=1,
            sort_keys=True,
        )
    )
    return [csv_path, json_path]


def report(artifact: RunArtifact, group_by: str = "overall") -> list[Path]:
    """Write grouped mean tables as CSV and JSON; returns the file paths."""
    return write_report_files(artifact.output_dir, _result_rows(artifact.results), group_by)


def write_plot_files(out: Path, rows: list[dict]) -> list[Path]:
    scatter = out / "plot_steps_ndtw.csv"
    with scatter.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task_id", "steps", "ndtw"])
        for row in rows:
            writer.writerow([row["task_id"], int(row["AS"]), f"{row['nDTW']:.6f}"])
    tcp_path = out / "plot_tcp_by_category.csv"
    reports = _grouped_means(rows, "category")
    with tcp_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "TCP-40m", "TCP-50m", "TCP-60m"])
        for rep in reports:
            writer.writerow(
                [rep.group]
                + [render_report_value(c, rep.means[c]) for c in ("TCP-40m", "TCP-50m", "TCP-60m")]
            )
    return [scatter, tcp_path]


def emit_plot_data(artifact: RunArtifact) -> list[Path]:
    """Scatter (steps vs nDTW) and per-group TCP tables as plain CSV."""
    return write_plot_files(artifact.output_dir, _result_rows(artifact.results))
