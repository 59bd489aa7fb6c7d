"""Demand-driven benchmark construction.

Maps implicit-need instructions onto satisfying POI sets, picks constrained
start nodes, generates shortest-path ground-truth routes, and validates the
resulting tasks.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .geo import geodesic_m
from .graph import NavGraph, Poi

INSTRUCTION_CATEGORIES = (
    "Basic POI",
    "Brand-Specific",
    "Transit Hub",
    "Latent POI",
    "Abstract Demand",
    "Inclusive Infrastructure",
    "Semantic Preference",
)

DEFAULT_HOP_BOUNDS = (5, 25)
DEFAULT_MIN_RADIUS_M = 100.0


@dataclass(frozen=True)
class NeedMapping:
    category: str
    instruction: str
    categories: frozenset[str] = frozenset()
    keywords: frozenset[str] = frozenset()
    descriptors: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.category not in INSTRUCTION_CATEGORIES:
            raise ValueError(f"unknown instruction category {self.category!r}")
        if not (self.categories or self.keywords or self.descriptors):
            raise ValueError("a need mapping must list at least one category, keyword, or descriptor")

    def satisfied_by(self, poi: Poi) -> bool:
        """True when the POI fulfils the need (category OR keyword OR descriptor)."""
        cat = poi.category.lower()
        for wanted in self.categories:
            w = wanted.lower()
            if w in cat or cat in w:
                return True
        name = poi.name.lower()
        if any(kw.lower() in name for kw in self.keywords):
            return True
        return any(d in poi.descriptors for d in self.descriptors)


def load_mapping_catalog(path: str | Path | None = None) -> list[NeedMapping]:
    """Need-mapping records; the bundled catalog is used when path is None."""
    if path is None:
        raw = resources.files("urbannav.data").joinpath("need_mappings.json").read_text()
    else:
        raw = Path(path).read_text()
    return [
        NeedMapping(
            category=rec["category"],
            instruction=rec["instruction"],
            categories=frozenset(rec.get("categories", ())),
            keywords=frozenset(rec.get("keywords", ())),
            descriptors=frozenset(rec.get("descriptors", ())),
        )
        for rec in json.loads(raw)
    ]


@dataclass(frozen=True)
class Task:
    id: str
    city: str
    instruction: str
    category: str
    mapping: NeedMapping
    start: str
    goal: str
    satisfying_nodes: frozenset[str]
    gt_path: tuple[str, ...]
    min_radius_m: float = DEFAULT_MIN_RADIUS_M


@dataclass
class ValidationReport:
    task_id: str
    checks: list[tuple[str, bool, str]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)


def query_satisfying_nodes(g: NavGraph, mapping: NeedMapping) -> set[str]:
    """Nodes with at least one visible POI satisfying the mapping."""
    return {
        node_id
        for node_id in g.nodes
        if any(mapping.satisfied_by(p) for p in g.visible_pois(node_id))
    }


def _radius_ok(
    g: NavGraph,
    start: str,
    satisfying: set[str],
    hops_from_start: dict[str, int],
    min_radius_m: float,
    hop_min: int,
) -> bool:
    """No satisfying node inside min_radius_m unless it is at least hop_min hops away."""
    if min_radius_m <= 0:
        return True
    start_pos = g.nodes[start].pos
    for cand in g.nodes_within_radius(start_pos, min_radius_m):
        if cand.id in satisfying and hops_from_start.get(cand.id, 10 ** 9) < hop_min:
            return False
    return True


def select_start(
    g: NavGraph,
    goal: str,
    mapping: NeedMapping,
    min_radius_m: float = DEFAULT_MIN_RADIUS_M,
    hop_bounds: tuple[int, int] = DEFAULT_HOP_BOUNDS,
    seed: int = 0,
) -> str | None:
    """A seeded start node at a valid hop distance from goal, or None."""
    satisfying = query_satisfying_nodes(g, mapping)
    if goal not in satisfying:
        raise ValueError(f"goal {goal!r} does not satisfy the mapping")
    hop_min, hop_max = hop_bounds
    dist_to_goal = g.hop_distances_from(goal)  # symmetric graph: equals distance to goal
    candidates = sorted(
        nid for nid, d in dist_to_goal.items() if hop_min <= d <= hop_max
    )
    rng = random.Random(seed)
    rng.shuffle(candidates)
    for start in candidates:
        hops_from_start = g.hop_distances_from(start)
        if _radius_ok(g, start, satisfying, hops_from_start, min_radius_m, hop_min):
            return start
    return None


def generate_task(
    g: NavGraph,
    mapping: NeedMapping,
    instruction: str | None = None,
    seed: int = 0,
    city: str = "synthetic",
    min_radius_m: float = DEFAULT_MIN_RADIUS_M,
    hop_bounds: tuple[int, int] = DEFAULT_HOP_BOUNDS,
) -> Task | None:
    """A fully validated task, or None when the geometry is infeasible.

    The goal is always the satisfying node nearest the start by hops (ties
    by node id), and no interior node of the ground-truth path satisfies
    the mapping.
    """
    satisfying = query_satisfying_nodes(g, mapping)
    if not satisfying:
        return None
    hop_min, hop_max = hop_bounds
    rng = random.Random(seed)
    starts = sorted(g.nodes)
    rng.shuffle(starts)
    for start in starts:
        hops_from_start = g.hop_distances_from(start)
        reachable = [(hops_from_start[n], n) for n in satisfying if n in hops_from_start]
        if not reachable:
            continue
        goal_hops, goal = min(reachable)
        if not hop_min <= goal_hops <= hop_max:
            continue
        if not _radius_ok(g, start, satisfying, hops_from_start, min_radius_m, hop_min):
            continue
        path = g.shortest_path(start, goal, weight="hops")
        assert path is not None
        if any(n in satisfying for n in path[1:-1]):
            # The deterministic shortest path crosses another satisfying node;
            # since goal is the hop-nearest satisfying node, interior nodes are
            # strictly closer than goal, so any alternative shortest path would
            # too. Skip this start.
            continue
        digest = hashlib.sha256(
            f"{city}|{instruction or mapping.instruction}|{seed}".encode()
        ).hexdigest()[:12]
        return Task(
            id=f"{city}-{mapping.category.replace(' ', '_')}-{digest}",
            city=city,
            instruction=instruction or mapping.instruction,
            category=mapping.category,
            mapping=mapping,
            start=start,
            goal=goal,
            satisfying_nodes=frozenset(satisfying),
            gt_path=tuple(path),
            min_radius_m=min_radius_m,
        )
    return None


def validate_task(g: NavGraph, task: Task) -> ValidationReport:
    """Mechanized route validation mirroring task generation's constraints."""
    report = ValidationReport(task.id)
    hops = g.topo_distance(task.start, task.goal)
    connected = hops != float("inf")
    report.checks.append(
        ("endpoints-connected", connected, f"hop distance {hops}")
    )
    path_ok = (
        len(task.gt_path) >= 1
        and task.gt_path[0] == task.start
        and task.gt_path[-1] == task.goal
        and all(
            any(e.to == b for e, _ in g.neighbors(a))
            for a, b in zip(task.gt_path, task.gt_path[1:])
        )
        and connected
        and len(task.gt_path) - 1 == hops
    )
    report.checks.append(
        ("path-is-shortest", path_ok, f"path hops {len(task.gt_path) - 1}, shortest {hops}")
    )
    n_steps = len(task.gt_path) - 1
    report.checks.append(
        ("length-in-[5,25]", 5 <= n_steps <= 25, f"{n_steps} steps")
    )
    satisfying = query_satisfying_nodes(g, task.mapping)
    report.checks.append(
        ("goal-satisfies", task.goal in satisfying, f"goal {task.goal}")
    )
    interior_clean = not any(n in satisfying for n in task.gt_path[1:-1])
    report.checks.append(("interior-clean", interior_clean, "no interior satisfying node"))
    return report


# -- serialization --------------------------------------------------------


def task_to_dict(task: Task) -> dict:
    return {
        "id": task.id,
        "city": task.city,
        "instruction": task.instruction,
        "category": task.category,
        "mapping": {
            "categories": sorted(task.mapping.categories),
            "keywords": sorted(task.mapping.keywords),
            "descriptors": sorted(task.mapping.descriptors),
        },
        "start": task.start,
        "goal": task.goal,
        "satisfying_nodes": sorted(task.satisfying_nodes),
        "gt_path": list(task.gt_path),
        "min_radius_m": task.min_radius_m,
    }


def task_from_dict(rec: dict) -> Task:
    mapping = NeedMapping(
        category=rec["category"],
        instruction=rec["instruction"],
        categories=frozenset(rec["mapping"].get("categories", ())),
        keywords=frozenset(rec["mapping"].get("keywords", ())),
        descriptors=frozenset(rec["mapping"].get("descriptors", ())),
    )
    return Task(
        id=rec["id"],
        city=rec["city"],
        instruction=rec["instruction"],
        category=rec["category"],
        mapping=mapping,
        start=rec["start"],
        goal=rec["goal"],
        satisfying_nodes=frozenset(rec["satisfying_nodes"]),
        gt_path=tuple(rec["gt_path"]),
        min_radius_m=float(rec.get("min_radius_m", DEFAULT_MIN_RADIUS_M)),
    )


def save_tasks(tasks: list[Task], path: str | Path) -> None:
    doc = {"tasks": [task_to_dict(t) for t in tasks]}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_tasks(path: str | Path) -> list[Task]:
    doc = json.loads(Path(path).read_text())
    return [task_from_dict(rec) for rec in doc["tasks"]]
