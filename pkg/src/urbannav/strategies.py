"""Backtracking (B1/B2/B3), spatial-cognition context (C1/C2), and memory
retrieval (R1/R2/R3) strategies, plus the per-task memory store and the
multi-round protocol.

B-strategies revert the agent along visited nodes when confidence drops or
goal distance grows; C-strategies render prior-round trajectories as text
context; R-strategies inject topological, spatial, or recent-history
snapshots from the store.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .bench import Task
from .episode import (
    BACK,
    EpisodeConfig,
    EpisodeContext,
    StepRecord,
    Trajectory,
    perspectives,
    run_episode,
)
from .geo import bearing_deg, geodesic_m, signed_delta_deg
from .graph import NavGraph

CONFIDENCE_THRESHOLD = 0.75
WINDOW_STEPS = 3
R1_HOPS_DEFAULT = 1
R2_RADIUS_M_DEFAULT = 50.0
R3_WINDOW_DEFAULT = 3
ROUNDS_DEFAULT = 3


# -- trigger windows -------------------------------------------------------


@dataclass
class ConfidenceWindow:
    k: int = WINDOW_STEPS
    theta: float = CONFIDENCE_THRESHOLD
    values: deque = field(default_factory=deque)

    def __post_init__(self) -> None:
        self.values = deque(self.values, maxlen=self.k)

    def push(self, confidence: float) -> None:
        if not 0.0 <= confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        self.values.append(confidence)

    def clear(self) -> None:
        self.values.clear()


@dataclass
class DistanceWindow:
    k: int = WINDOW_STEPS
    values: deque = field(default_factory=deque)

    def __post_init__(self) -> None:
        self.values = deque(self.values, maxlen=self.k + 1)

    def push(self, distance: float) -> None:
        if distance < 0:
            raise ValueError("distance must be non-negative")
        self.values.append(distance)

    def clear(self) -> None:
        self.values.clear()


def b1_should_backtrack(window: ConfidenceWindow) -> bool:
    """Mean confidence over a full window strictly below the threshold."""
    if len(window.values) < window.k:
        return False
    return sum(window.values) / window.k < window.theta


def b2_should_backtrack(window: DistanceWindow) -> bool:
    """Goal distance strictly increased over k consecutive steps."""
    vals = list(window.values)
    if len(vals) < window.k + 1:
        return False
    return all(older < newer for older, newer in zip(vals, vals[1:]))


def backtrack_target(
    visited: list[str],
    recent_confidences: list[tuple[str, float]],
    mode: str,
    k: int = WINDOW_STEPS,
    theta: float = CONFIDENCE_THRESHOLD,
) -> str:
    """Node to revert to, never earlier than the episode start.

    B1/B3: the position reached by the most recent of the last k decisions
    whose confidence met the threshold, else exactly k steps back. B2: the
    node k steps back, before the monotone distance increase began.
    """
    if mode in ("B1", "B3"):
        for node, confidence in reversed(recent_confidences[-k:]):
            if confidence >= theta:
                return node
    idx = max(0, len(visited) - 1 - k)
    return visited[idx]


def b3_hint(g: NavGraph, node: str, goal: str, heading: float) -> int:
    """Perspective index minimizing next-hop goal distance, heading-aligned.

    Among distance-minimizing actions, prefers the one whose azimuth belongs
    to a shortest path's first edge and lies closest (by cosine) to the
    reference shortest path's first-edge azimuth; residual ties pick the
    lowest index.
    """
    dist = g.hop_distances_from(goal)
    if node not in dist:
        raise ValueError(f"goal {goal!r} unreachable from {node!r}")
    persp = perspectives(g, node, heading)
    d_here = dist[node]
    next_dists = [dist.get(p.edge.to, math.inf) for p in persp]
    d_min = min(next_dists)
    optimal_azimuths = {
        p.edge.azimuth for p, d in zip(persp, next_dists) if d == d_here - 1
    }
    ref_path = g.shortest_path(node, goal, weight="hops")
    theta_path = None
    if ref_path and len(ref_path) > 1:
        for p in persp:
            if p.edge.to == ref_path[1]:
                theta_path = p.edge.azimuth
                break
    best_idx = None
    best_phi = -math.inf
    for p, d in zip(persp, next_dists):
        if d != d_min:
            continue
        if theta_path is not None and p.edge.azimuth in optimal_azimuths:
            phi = math.cos(math.radians(p.edge.azimuth - theta_path))
        else:
            phi = 0.0
        if phi > best_phi + 1e-12:
            best_phi = phi
            best_idx = p.index
    assert best_idx is not None
    return best_idx


# -- memory store ------------------------------------------------------------


@dataclass
class NodeRoundEntry:
    round: int
    thoughts: str
    prev_action: Optional[int]
    next_action: int
    direction: str
    confidence: float


@dataclass
class EdgeOutcome:
    round: int
    outcome: str  # success | failure
    direction: str


class MemoryStore:
    """Per-task cross-round memory plus the intra-episode R3 buffer."""

    def __init__(self, task_id: str):
        self.task_id = task_id
        self.visit_counts: dict[str, int] = {}
        self.node_entries: dict[str, list[NodeRoundEntry]] = {}
        self.edge_outcomes: dict[tuple[str, str], list[EdgeOutcome]] = {}
        # (round, from node, heading at node, action index, to node)
        self.transitions: list[tuple[int, str, float, int, str]] = []
        self.first_visit_order: list[str] = []
        self.rounds_completed = 0
        self.r3_buffer: list[StepRecord] = []

    def _touch(self, node: str) -> None:
        if node not in self.visit_counts:
            self.visit_counts[node] = 0
            self.first_visit_order.append(node)
        self.visit_counts[node] += 1

    def ingest_round(self, round_index: int, traj: Trajectory, dist_to_goal: dict[str, int]) -> None:
        """Fold a finished round's trajectory into the cross-round records."""
        for node in traj.node_sequence():
            self._touch(node)
        prev_action: Optional[int] = None
        for record in traj.steps:
            if record.choice is None or record.edge is None:
                continue
            entry = NodeRoundEntry(
                round=round_index,
                thoughts=record.choice.rationale,
                prev_action=prev_action,
                next_action=record.choice.action,
                direction=record.direction_label,
                confidence=record.choice.confidence,
            )
            self.node_entries.setdefault(record.node, []).append(entry)
            frm, to = record.edge
            d_from = dist_to_goal.get(frm, math.inf)
            d_to = dist_to_goal.get(to, math.inf)
            outcome = "success" if d_to < d_from else "failure"
            self.edge_outcomes.setdefault((frm, to), []).append(
                EdgeOutcome(round=round_index, outcome=outcome, direction=record.direction_label)
            )
            self.transitions.append(
                (round_index, record.node, record.heading, record.choice.action, to)
            )
            prev_action = record.choice.action
        self.rounds_completed = max(self.rounds_completed, round_index)
        self.purge_r3()

    def purge_r3(self) -> None:
        self.r3_buffer.clear()

    # -- persistence --

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "visit_counts": self.visit_counts,
            "first_visit_order": self.first_visit_order,
            "rounds_completed": self.rounds_completed,
            "node_entries": {
                node: [vars(e) for e in entries] for node, entries in self.node_entries.items()
            },
            "edge_outcomes": [
                {"from": u, "to": v, "outcomes": [vars(o) for o in outs]}
                for (u, v), outs in sorted(self.edge_outcomes.items())
            ],
            "transitions": [list(t) for t in self.transitions],
            "r3_buffer": [r.to_dict() for r in self.r3_buffer],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def from_dict(cls, doc: dict) -> "MemoryStore":
        store = cls(doc["task_id"])
        store.visit_counts = {k: int(v) for k, v in doc["visit_counts"].items()}
        store.first_visit_order = list(doc["first_visit_order"])
        store.rounds_completed = int(doc["rounds_completed"])
        store.node_entries = {
            node: [NodeRoundEntry(**e) for e in entries]
            for node, entries in doc["node_entries"].items()
        }
        store.edge_outcomes = {
            (rec["from"], rec["to"]): [EdgeOutcome(**o) for o in rec["outcomes"]]
            for rec in doc["edge_outcomes"]
        }
        store.transitions = [tuple(t) for t in doc["transitions"]]  # type: ignore[misc]
        store.r3_buffer = [StepRecord.from_dict(r) for r in doc["r3_buffer"]]
        return store

    @classmethod
    def load(cls, path: str | Path) -> "MemoryStore":
        return cls.from_dict(json.loads(Path(path).read_text()))


# -- context renderers -------------------------------------------------------


def render_c1(store: MemoryStore, task: Task) -> str:
    """Connectivity-graph text of prior-round transitions, first-visit order."""
    if not store.transitions:
        return ""
    by_node: dict[str, list[tuple[int, str]]] = {}
    seen: set[tuple[str, int, str]] = set()
    for round_index, node, _, action, to in store.transitions:
        key = (node, action, to)
        if key in seen:
            continue
        seen.add(key)
        by_node.setdefault(node, []).append((action, to))
    lines = []
    for node in store.first_visit_order:
        if node not in by_node:
            continue
        lines.append(f"### Node: {node}")
        lines.append("**Relationships:**")
        for action, to in by_node[node]:
            lines.append(f"- '{node}' -> **action {action}** -> '{to}'")
        lines.append("")
    return "\n".join(lines).strip()


def _direction_bucket(delta: float) -> str:
    mag = abs(delta)
    side = "right" if delta >= 0 else "left"
    if mag <= 22.5:
        return "front"
    if mag > 157.5:
        return "back"
    if mag <= 67.5:
        return f"slightly {side}"
    return side


def _distance_band(distance_m: float) -> str:
    lo = int(distance_m // 10) * 10
    return f"{lo}-{lo + 10} meters"


def render_c2(g: NavGraph, store: MemoryStore, task: Task) -> str:
    """Relative-position text (direction buckets and 10 m distance bands)."""
    if not store.transitions:
        return ""
    lines = []
    for _, node, heading, _, to in store.transitions:
        if node == to:
            continue
        a = g.nodes[node].pos
        b = g.nodes[to].pos
        dist = geodesic_m(a, b)
        if dist == 0:
            continue
        delta = signed_delta_deg(heading, bearing_deg(a, b))
        bucket = _direction_bucket(delta)
        lines.append(f"### {node} -> {to}")
        lines.append(f"- **Direction**: {bucket.capitalize()}")
        lines.append(f"- **Relative Position**: Distance: {_distance_band(dist)}")
        lines.append("")
    return "\n".join(lines).strip()


def _node_metadata_lines(store: MemoryStore, node: str) -> list[str]:
    lines = [f"- Node {node}: visits {store.visit_counts.get(node, 0)}"]
    for e in store.node_entries.get(node, ()):
        lines.append(
            f"  - round {e.round}: action {e.next_action} ({e.direction}), "
            f"confidence {e.confidence:.2f}, thoughts: {e.thoughts}"
        )
    return lines


def _edge_outcome_lines(store: MemoryStore, nodes: set[str]) -> list[str]:
    lines = []
    for (u, v), outs in sorted(store.edge_outcomes.items()):
        if u in nodes and v in nodes:
            detail = "; ".join(f"round {o.round}: {o.outcome} ({o.direction})" for o in outs)
            lines.append(f"- Edge {u} -> {v}: {detail}")
    return lines


def r1_nodes(store: MemoryStore, g: NavGraph, node: str, hops: int = R1_HOPS_DEFAULT) -> set[str]:
    """Visited nodes within the h-hop neighborhood of node, plus node itself."""
    ring = {nid for nid, d in g.hop_distances_from(node).items() if d <= hops}
    visited = set(store.visit_counts)
    return (ring & visited) | {node}


def r1_retrieve(store: MemoryStore, g: NavGraph, node: str, hops: int = R1_HOPS_DEFAULT) -> str:
    nodes = r1_nodes(store, g, node, hops)
    lines = [f"Local memory within {hops} hop(s) of {node}:"]
    for nid in sorted(nodes):
        lines.extend(_node_metadata_lines(store, nid))
    lines.extend(_edge_outcome_lines(store, nodes))
    return "\n".join(lines)


def r2_nodes(
    store: MemoryStore, g: NavGraph, node: str, radius_m: float = R2_RADIUS_M_DEFAULT
) -> set[str]:
    """Visited nodes within geodesic radius of node's position, plus node."""
    center = g.nodes[node].pos
    nearby = {n.id for n in g.nodes_within_radius(center, radius_m)}
    visited = set(store.visit_counts)
    return (nearby & visited) | {node}


def r2_retrieve(
    store: MemoryStore, g: NavGraph, node: str, radius_m: float = R2_RADIUS_M_DEFAULT
) -> str:
    nodes = r2_nodes(store, g, node, radius_m)
    lines = [f"Local memory within {radius_m:.0f} m of {node}:"]
    for nid in sorted(nodes):
        lines.extend(_node_metadata_lines(store, nid))
    lines.extend(_edge_outcome_lines(store, nodes))
    return "\n".join(lines)


def r3_window(g: NavGraph, records: list[StepRecord], n: int = R3_WINDOW_DEFAULT) -> str:
    """Text of the last n step records: where, facing, chose, how confident."""
    lines = []
    for record in records[-n:]:
        pos = g.nodes[record.node].pos
        confidence = record.choice.confidence if record.choice else 0.0
        rationale = record.choice.rationale if record.choice else ""
        lines.append(
            f"- step {record.index}: at {record.node} ({pos.lat:.6f}, {pos.lon:.6f}), "
            f"facing {record.heading:.1f} deg, moved {record.direction_label or 'n/a'}, "
            f"confidence {confidence:.2f}, thoughts: {rationale}"
        )
    return "\n".join(lines)


# -- strategy mechanisms ------------------------------------------------------


@dataclass(frozen=True)
class MechanismConfig:
    kind: str  # B1 | B2 | B3 | C1 | C2 | R1 | R2 | R3
    k: int = WINDOW_STEPS
    theta: float = CONFIDENCE_THRESHOLD
    hops: int = R1_HOPS_DEFAULT
    radius_m: float = R2_RADIUS_M_DEFAULT
    window: int = R3_WINDOW_DEFAULT


@dataclass(frozen=True)
class StackConfig:
    mechanisms: tuple[MechanismConfig, ...] = ()

    def __post_init__(self) -> None:
        kinds = [m.kind for m in self.mechanisms]
        unknown = set(kinds) - {"B1", "B2", "B3", "C1", "C2", "R1", "R2", "R3"}
        if unknown:
            raise ValueError(f"unknown mechanisms: {sorted(unknown)}")
        if len(kinds) != len(set(kinds)):
            raise ValueError("duplicate mechanisms in stack")
        if "C1" in kinds and "C2" in kinds:
            raise ValueError("C1 and C2 occupy the same prompt slot; enable at most one")

    @property
    def uses_cross_round_memory(self) -> bool:
        return any(m.kind in ("C1", "C2", "R1", "R2") for m in self.mechanisms)

    @classmethod
    def parse(cls, spec: list) -> "StackConfig":
        mechanisms = []
        for item in spec:
            if isinstance(item, str):
                mechanisms.append(MechanismConfig(kind=item))
            else:
                mechanisms.append(MechanismConfig(**item))
        return cls(tuple(mechanisms))


class _Backtracker:
    """Shared machinery for B1/B2/B3; cooldown prevents trigger livelock."""

    def __init__(self, cfg: MechanismConfig):
        self.cfg = cfg
        self.conf_window = ConfidenceWindow(k=cfg.k, theta=cfg.theta)
        self.dist_window = DistanceWindow(k=cfg.k)
        self.cooldown = 0
        self.hint_pending = False
        self.recent_confidences: list[tuple[str, float]] = []

    def on_episode_start(self, ctx: EpisodeContext) -> None:
        self.dist_window.push(ctx.distance(ctx.current))

    def pre_stop(self, ctx: EpisodeContext) -> None:
        pass

    def pre_choice(self, ctx: EpisodeContext) -> None:
        if self.hint_pending and self.cfg.kind == "B3":
            ctx.slots.backtrack_hint = b3_hint(
                ctx.graph, ctx.current, ctx.task.goal, ctx.heading
            )
            ctx.slots.backtrack_text = "You have just backtracked."
        self.hint_pending = False

    def post_step(self, ctx: EpisodeContext, record: StepRecord) -> Optional[str]:
        if record.backtrack or record.choice is None:
            return None
        # Keyed by the node the decision led to: reverting to the last
        # confident decision's outcome exactly undoes the doubtful move.
        reached = record.edge[1] if record.edge else record.node
        self.recent_confidences.append((reached, record.choice.confidence))
        self.conf_window.push(record.choice.confidence)
        self.dist_window.push(ctx.distance(ctx.current))
        if self.cooldown > 0:
            self.cooldown -= 1
            return None
        if self.cfg.kind in ("B1", "B3"):
            triggered = b1_should_backtrack(self.conf_window)
        else:
            triggered = b2_should_backtrack(self.dist_window)
        if not triggered:
            return None
        target = backtrack_target(
            ctx.visited, self.recent_confidences, self.cfg.kind, self.cfg.k, self.cfg.theta
        )
        self.cooldown = self.cfg.k
        self.conf_window.clear()
        self.dist_window.clear()
        self.hint_pending = self.cfg.kind == "B3"
        return target

    def on_episode_end(self, ctx: EpisodeContext, traj: Trajectory) -> None:
        pass


class _Cognition:
    """C1/C2: inject prior-round spatial context into the initial input."""

    def __init__(self, cfg: MechanismConfig, store: MemoryStore):
        self.cfg = cfg
        self.store = store

    def on_episode_start(self, ctx: EpisodeContext) -> None:
        if self.cfg.kind == "C1":
            ctx.slots.cognition_text = render_c1(self.store, ctx.task)
        else:
            ctx.slots.cognition_text = render_c2(ctx.graph, self.store, ctx.task)

    def pre_stop(self, ctx: EpisodeContext) -> None:
        pass

    def pre_choice(self, ctx: EpisodeContext) -> None:
        pass

    def post_step(self, ctx: EpisodeContext, record: StepRecord) -> Optional[str]:
        return None

    def on_episode_end(self, ctx: EpisodeContext, traj: Trajectory) -> None:
        pass


class _Retrieval:
    """R1/R2 cross-round retrieval (final round only) and the R3 window."""

    def __init__(self, cfg: MechanismConfig, store: MemoryStore, enabled: bool):
        self.cfg = cfg
        self.store = store
        self.enabled = enabled  # R1/R2 fire only in the designated round

    def _inject(self, ctx: EpisodeContext) -> None:
        if self.cfg.kind == "R3":
            self.store.r3_buffer = list(ctx.records)
            ctx.slots.history_text = r3_window(ctx.graph, ctx.records, self.cfg.window)
            moved = [r for r in ctx.records if r.edge is not None]
            ctx.slots.history_nodes = tuple(r.node for r in moved[-self.cfg.window :])
            return
        if not self.enabled:
            return
        if self.cfg.kind == "R1":
            ctx.slots.surrounding_text = r1_retrieve(self.store, ctx.graph, ctx.current, self.cfg.hops)
        else:
            ctx.slots.surrounding_text = r2_retrieve(
                self.store, ctx.graph, ctx.current, self.cfg.radius_m
            )

    def on_episode_start(self, ctx: EpisodeContext) -> None:
        pass

    def pre_stop(self, ctx: EpisodeContext) -> None:
        self._inject(ctx)

    def pre_choice(self, ctx: EpisodeContext) -> None:
        self._inject(ctx)

    def post_step(self, ctx: EpisodeContext, record: StepRecord) -> Optional[str]:
        return None

    def on_episode_end(self, ctx: EpisodeContext, traj: Trajectory) -> None:
        if self.cfg.kind == "R3":
            self.store.purge_r3()


class StrategyStack:
    """Ordered mechanisms applied around a base policy during one episode."""

    def __init__(self, config: StackConfig, store: MemoryStore, retrieval_enabled: bool = True):
        self.config = config
        self.store = store
        self.mechanisms: list = []
        for m in config.mechanisms:
            if m.kind in ("B1", "B2", "B3"):
                self.mechanisms.append(_Backtracker(m))
            elif m.kind in ("C1", "C2"):
                self.mechanisms.append(_Cognition(m, store))
            else:
                self.mechanisms.append(_Retrieval(m, store, enabled=retrieval_enabled))

    def on_episode_start(self, ctx: EpisodeContext) -> None:
        for m in self.mechanisms:
            m.on_episode_start(ctx)

    def pre_stop(self, ctx: EpisodeContext) -> None:
        for m in self.mechanisms:
            m.pre_stop(ctx)

    def pre_choice(self, ctx: EpisodeContext) -> None:
        for m in self.mechanisms:
            m.pre_choice(ctx)

    def post_step(self, ctx: EpisodeContext, record: StepRecord) -> Optional[str]:
        for m in self.mechanisms:
            target = m.post_step(ctx, record)
            if target is not None:
                return target
        return None

    def on_episode_end(self, ctx: EpisodeContext, traj: Trajectory) -> None:
        for m in self.mechanisms:
            m.on_episode_end(ctx, traj)


# -- multi-round protocol -----------------------------------------------------


def run_rounds(
    g: NavGraph,
    task: Task,
    policy_factory: Callable[[int], object],
    stack_config: StackConfig,
    cfg: EpisodeConfig,
    observations,
    n_rounds: int = ROUNDS_DEFAULT,
    store: MemoryStore | None = None,
) -> list[Trajectory]:
    """Rounds 1..n-1 explore and record; round n enables R1/R2 retrieval.

    All rounds share one task-scoped memory store; the policy factory gets
    the 1-based round index so scripted policies can reseed per round.
    """
    if n_rounds < 1:
        raise ValueError("n_rounds must be at least 1")
    store = store or MemoryStore(task.id)
    dist_map = g.hop_distances_from(task.goal)
    trajectories = []
    for round_index in range(1, n_rounds + 1):
        retrieval_enabled = round_index == n_rounds
        stack = StrategyStack(stack_config, store, retrieval_enabled=retrieval_enabled)
        policy = policy_factory(round_index)
        round_cfg = EpisodeConfig(
            max_steps=cfg.max_steps,
            tcp_thresholds=cfg.tcp_thresholds,
            round_index=round_index,
            rounds_total=n_rounds,
            seed=cfg.seed,
        )
        traj = run_episode(g, task, policy, stack, round_cfg, observations)
        store.ingest_round(round_index, traj, dist_map)
        trajectories.append(traj)
    return trajectories
