"""Episode metric suite: TCE, TCP at multiple thresholds, TCC, SPL, SPD,
nDTW, AS, and grouped aggregation.

Success metrics (TCE/TCP/TCC) require an explicit stop decision; running
into the step cap never counts as success. nDTW here is the DTW alignment
cost in meters divided by the reference path length in nodes; lower is
better and an exact match scores 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .bench import Task, query_satisfying_nodes
from .episode import Trajectory
from .geo import LatLon, geodesic_m
from .graph import NavGraph

METRIC_COLUMNS = ("TCE", "TCP-40m", "TCP-50m", "TCP-60m", "TCC", "SPL", "SPD", "nDTW", "AS")
TCP_DEFAULT_THRESHOLD_M = 50.0


@dataclass(frozen=True)
class EpisodeMetrics:
    tce: bool
    tcp: dict[float, bool]
    tcc: bool
    spl: float
    spd: float
    ndtw: float
    steps: int


@dataclass
class MetricReport:
    group: str
    episode_count: int
    means: dict[str, float] = field(default_factory=dict)


def tce(traj: Trajectory, task: Task) -> bool:
    return traj.termination == "stopped" and traj.terminal_node == task.goal


def _terminal_distance(g: NavGraph, traj: Trajectory, task: Task) -> float:
    return geodesic_m(g.nodes[traj.terminal_node].pos, g.nodes[task.goal].pos)


def tcp(g: NavGraph, traj: Trajectory, task: Task, threshold_m: float) -> bool:
    if traj.termination != "stopped":
        return False
    return _terminal_distance(g, traj, task) <= threshold_m


def tcc(g: NavGraph, traj: Trajectory, task: Task) -> bool:
    if traj.termination != "stopped":
        return False
    return any(task.mapping.satisfied_by(p) for p in g.visible_pois(traj.terminal_node))


def _path_length_m(g: NavGraph, nodes: list[str]) -> float:
    total = 0.0
    for a, b in zip(nodes, nodes[1:]):
        total += geodesic_m(g.nodes[a].pos, g.nodes[b].pos)
    return total


def spl(g: NavGraph, traj: Trajectory, task: Task) -> float:
    """Success (TCP at 50 m) weighted by shortest-over-traversed length."""
    success = tcp(g, traj, task, TCP_DEFAULT_THRESHOLD_M)
    if not success:
        return 0.0
    ref = _path_length_m(g, list(task.gt_path))
    traversed = _path_length_m(g, traj.node_sequence())
    denom = max(ref, traversed)
    if denom == 0.0:
        return 1.0  # start == goal and the agent stopped in place
    return ref / denom


def spd(g: NavGraph, traj: Trajectory, task: Task) -> float:
    return _terminal_distance(g, traj, task)


def dtw_cost(seq_a: list[LatLon], seq_b: list[LatLon]) -> float:
    """Standard DTW with geodesic local cost."""
    if not seq_a or not seq_b:
        raise ValueError("DTW requires non-empty sequences")
    m, r = len(seq_a), len(seq_b)
    inf = float("inf")
    prev = [inf] * (r + 1)
    prev[0] = 0.0
    for i in range(1, m + 1):
        cur = [inf] * (r + 1)
        for j in range(1, r + 1):
            cost = geodesic_m(seq_a[i - 1], seq_b[j - 1])
            cur[j] = cost + min(prev[j], cur[j - 1], prev[j - 1])
        prev = cur
    return prev[r]


def ndtw(g: NavGraph, traj: Trajectory, task: Task) -> float:
    """DTW alignment cost divided by the reference node count."""
    agent = [g.nodes[n].pos for n in traj.node_sequence()]
    reference = [g.nodes[n].pos for n in task.gt_path]
    return dtw_cost(agent, reference) / len(reference)


def compute_episode_metrics(
    g: NavGraph,
    traj: Trajectory,
    task: Task,
    thresholds: tuple[float, ...] = (40.0, 50.0, 60.0),
) -> EpisodeMetrics:
    return EpisodeMetrics(
        tce=tce(traj, task),
        tcp={d: tcp(g, traj, task, d) for d in thresholds},
        tcc=tcc(g, traj, task),
        spl=spl(g, traj, task),
        spd=spd(g, traj, task),
        ndtw=ndtw(g, traj, task),
        steps=traj.moves,
    )


def metrics_row(m: EpisodeMetrics) -> dict[str, float]:
    row = {
        "TCE": float(m.tce),
        "TCC": float(m.tcc),
        "SPL": m.spl,
        "SPD": m.spd,
        "nDTW": m.ndtw,
        "AS": float(m.steps),
    }
    for d, ok in m.tcp.items():
        row[f"TCP-{d:.0f}m"] = float(ok)
    return row


def aggregate(
    episodes: list[tuple[Task, EpisodeMetrics]],
    group_by: str = "overall",
) -> list[MetricReport]:
    """Arithmetic means per group; the overall report always comes first."""
    if group_by not in ("overall", "category", "city"):
        raise ValueError(f"unknown grouping {group_by!r}")

    def key(task: Task) -> str:
        if group_by == "category":
            return task.category
        if group_by == "city":
            return task.city
        return "overall"

    groups: dict[str, list[dict[str, float]]] = {}
    for task, m in episodes:
        row = metrics_row(m)
        groups.setdefault("overall", []).append(row)
        if group_by != "overall":
            groups.setdefault(key(task), []).append(row)

    reports = []
    names = ["overall"] + sorted(k for k in groups if k != "overall")
    for name in names:
        rows = groups.get(name)
        if not rows:
            continue
        means = {
            col: sum(r[col] for r in rows) / len(rows)
            for col in rows[0]
        }
        reports.append(MetricReport(group=name, episode_count=len(rows), means=means))
    return reports


def render_report_value(column: str, mean: float) -> str:
    """Rate columns as percentages at one decimal; others at two decimals."""
    if column.startswith(("TCE", "TCP", "TCC")):
        return f"{100.0 * mean:.1f}"
    return f"{mean:.2f}"
