"""Single-episode execution protocol.

At each node the agent first answers the stop phase (continue / terminate),
then the choice phase (pick a perspective). Strategy hooks run around both
phases and may request backtracking after a move. Episodes end on a stop
decision or at the step cap.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Protocol

from .bench import Task
from .geo import signed_delta_deg
from .graph import NavEdge, NavGraph

MAX_STEPS_DEFAULT = 35
TCP_THRESHOLDS_DEFAULT = (40.0, 50.0, 60.0)

FORWARD = "FORWARD"
RIGHT = "RIGHT"
BACK = "BACK"
LEFT = "LEFT"


class PolicyTransportError(RuntimeError):
    """Remote decision could not be obtained after retries."""


@dataclass(frozen=True)
class EpisodeConfig:
    max_steps: int = MAX_STEPS_DEFAULT
    tcp_thresholds: tuple[float, ...] = TCP_THRESHOLDS_DEFAULT
    round_index: int = 1
    rounds_total: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


@dataclass(frozen=True)
class Decision:
    phase: str  # stop | choice
    observation_digest: str
    rationale: str
    action: int  # stop: 0 continue, -1 stop; choice: perspective index
    confidence: float
    fallback_used: bool = False


@dataclass(frozen=True)
class Perspective:
    index: int
    heading: float
    label: str
    edge: NavEdge
    text: str


@dataclass
class StrategySlots:
    """Prompt-slot payloads injected by strategies; empty by default."""

    backtrack_hint: Optional[int] = None
    backtrack_text: str = ""
    cognition_text: str = ""  # C1/C2 slot
    surrounding_text: str = ""  # R1/R2 slot
    history_text: str = ""  # R3 slot
    history_nodes: tuple[str, ...] = ()

    def clear_transient(self) -> None:
        self.backtrack_hint = None
        self.backtrack_text = ""
        self.surrounding_text = ""
        self.history_text = ""
        self.history_nodes = ()


@dataclass(frozen=True)
class PolicyState:
    instruction: str
    node: str
    heading: float
    step: int
    phase: str
    panorama_text: str
    perspectives: tuple[Perspective, ...]
    slots: StrategySlots


@dataclass
class StepRecord:
    index: int
    node: str
    heading: float
    distance_to_goal_hops: float
    stop: Optional[Decision] = None
    choice: Optional[Decision] = None
    edge: Optional[tuple[str, str]] = None
    direction_label: str = ""
    backtrack: bool = False
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        def dec(d: Optional[Decision]) -> Optional[dict]:
            if d is None:
                return None
            return {
                "phase": d.phase,
                "observation_digest": d.observation_digest,
                "rationale": d.rationale,
                "action": d.action,
                "confidence": d.confidence,
                "fallback_used": d.fallback_used,
            }

        return {
            "index": self.index,
            "node": self.node,
            "heading": self.heading,
            "distance_to_goal_hops": self.distance_to_goal_hops,
            "stop": dec(self.stop),
            "choice": dec(self.choice),
            "edge": list(self.edge) if self.edge else None,
            "direction_label": self.direction_label,
            "backtrack": self.backtrack,
            "wall_time_s": self.wall_time_s,
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "StepRecord":
        def dec(d: Optional[dict]) -> Optional[Decision]:
            if d is None:
                return None
            return Decision(
                phase=d["phase"],
                observation_digest=d["observation_digest"],
                rationale=d["rationale"],
                action=int(d["action"]),
                confidence=float(d["confidence"]),
                fallback_used=bool(d["fallback_used"]),
            )

        return cls(
            index=int(rec["index"]),
            node=rec["node"],
            heading=float(rec["heading"]),
            distance_to_goal_hops=float(rec["distance_to_goal_hops"]),
            stop=dec(rec.get("stop")),
            choice=dec(rec.get("choice")),
            edge=tuple(rec["edge"]) if rec.get("edge") else None,
            direction_label=rec.get("direction_label", ""),
            backtrack=bool(rec.get("backtrack", False)),
            wall_time_s=float(rec.get("wall_time_s", 0.0)),
        )


@dataclass
class Trajectory:
    task_id: str
    steps: list[StepRecord]
    terminal_node: str
    termination: str  # stopped | step_cap | error
    config: EpisodeConfig
    error: str = ""

    @property
    def moves(self) -> int:
        """Number of edge traversals, backtrack hops included."""
        return sum(1 for s in self.steps if s.edge is not None)

    def node_sequence(self) -> list[str]:
        seq = [s.node for s in self.steps]
        if not seq or seq[-1] != self.terminal_node:
            seq.append(self.terminal_node)
        return seq


class Policy(Protocol):
    def decide_stop(self, state: PolicyState) -> Decision: ...

    def decide_choice(self, state: PolicyState) -> Decision: ...


# -- decision parsing ------------------------------------------------------


def _first_json_object(raw: str) -> Optional[dict]:
    """First balanced {...} block that parses as a JSON object."""
    depth = 0
    start = -1
    in_str = False
    escape = False
    for i, ch in enumerate(raw):
        if in_str:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"':
            in_str = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}":
            if depth > 0:
                depth -= 1
                if depth == 0:
                    try:
                        obj = json.loads(raw[start : i + 1])
                    except json.JSONDecodeError:
                        return None
                    return obj if isinstance(obj, dict) else None
    return None


def _fallback(phase: str) -> Decision:
    return Decision(
        phase=phase,
        observation_digest="",
        rationale="",
        action=0,
        confidence=0.0,
        fallback_used=True,
    )


def parse_decision(raw: str, phase: str, n_perspectives: int = 0) -> Decision:
    """Total parser: any unusable response falls back to action 0."""
    if phase not in ("stop", "choice"):
        raise ValueError(f"unknown phase {phase!r}")
    obj = _first_json_object(raw if isinstance(raw, str) else "")
    if obj is None:
        return _fallback(phase)

    action = obj.get("action")
    if phase == "stop":
        if isinstance(action, bool) or not isinstance(action, int) or action not in (0, -1):
            return _fallback(phase)
        index = action
        digest_field = obj.get("overall observation", "")
    else:
        if isinstance(action, str) and len(action) == 1 and action.isalpha():
            index = ord(action.upper()) - ord("A")
        elif isinstance(action, int) and not isinstance(action, bool):
            index = action
        else:
            return _fallback(phase)
        if not 0 <= index < n_perspectives:
            return _fallback(phase)
        digest_field = obj.get("perspective observation", "")

    score = obj.get("score", obj.get("confidence", 0.5))
    if isinstance(score, bool) or not isinstance(score, (int, float)):
        return _fallback(phase)
    confidence = min(1.0, max(0.0, float(score)))

    digest = digest_field if isinstance(digest_field, str) else json.dumps(digest_field, sort_keys=True)
    rationale = obj.get("thoughts", "")
    if not isinstance(rationale, str):
        rationale = json.dumps(rationale, sort_keys=True)
    return Decision(
        phase=phase,
        observation_digest=digest,
        rationale=rationale,
        action=index,
        confidence=confidence,
        fallback_used=False,
    )


# -- perspectives ----------------------------------------------------------


def direction_label(delta: float) -> str:
    if abs(delta) <= 45.0:
        return FORWARD
    if 45.0 < delta <= 135.0:
        return RIGHT
    if -135.0 <= delta < -45.0:
        return LEFT
    return BACK


def perspectives(g: NavGraph, node_id: str, current_heading: float) -> list[Perspective]:
    """Choice-phase options, FORWARD first then clockwise; text filled later."""
    entries = []
    for edge, _ in g.neighbors(node_id):
        delta = signed_delta_deg(current_heading, edge.azimuth)
        label = direction_label(delta)
        clockwise = (edge.azimuth - current_heading) % 360.0
        entries.append((label != FORWARD, clockwise, edge.to, edge, label))
    entries.sort(key=lambda e: e[:3])
    return [
        Perspective(index=i, heading=e.azimuth, label=label, edge=e, text="")
        for i, (_, _, _, e, label) in enumerate(entries)
    ]


# -- strategy hooks ----------------------------------------------------------


@dataclass
class EpisodeContext:
    """Mutable view the strategy stack sees; not exposed to the policy."""

    graph: NavGraph
    task: Task
    config: EpisodeConfig
    slots: StrategySlots
    records: list[StepRecord] = field(default_factory=list)
    visited: list[str] = field(default_factory=list)
    current: str = ""
    heading: float = 0.0
    steps_taken: int = 0
    dist_to_goal: dict[str, int] = field(default_factory=dict)

    def distance(self, node_id: str) -> float:
        return float(self.dist_to_goal.get(node_id, float("inf")))


class StrategyHooks(Protocol):
    def on_episode_start(self, ctx: EpisodeContext) -> None: ...

    def pre_stop(self, ctx: EpisodeContext) -> None: ...

    def pre_choice(self, ctx: EpisodeContext) -> None: ...

    def post_step(self, ctx: EpisodeContext, record: StepRecord) -> Optional[str]: ...

    def on_episode_end(self, ctx: EpisodeContext, traj: Trajectory) -> None: ...


class NullStrategy:
    """No-op stack: the memoryless baseline condition."""

    def on_episode_start(self, ctx: EpisodeContext) -> None:
        pass

    def pre_stop(self, ctx: EpisodeContext) -> None:
        pass

    def pre_choice(self, ctx: EpisodeContext) -> None:
        pass

    def post_step(self, ctx: EpisodeContext, record: StepRecord) -> Optional[str]:
        return None

    def on_episode_end(self, ctx: EpisodeContext, traj: Trajectory) -> None:
        pass


# -- engine ----------------------------------------------------------------


class ObservationLookup(Protocol):
    def lookup(self, node: str, heading: float): ...


def initial_heading(g: NavGraph, node_id: str) -> float:
    """Heading of the lowest-azimuth edge; deterministic and answer-free."""
    node = g.nodes[node_id]
    if not node.headings:
        return 0.0
    return node.headings[0]


def _panorama_text(g: NavGraph, observations: ObservationLookup, node_id: str) -> str:
    parts = []
    for heading in g.nodes[node_id].headings:
        parts.append(observations.lookup(node_id, heading).text)
    return "\n".join(parts)


def run_episode(
    g: NavGraph,
    task: Task,
    policy: Policy,
    stack: StrategyHooks | None,
    cfg: EpisodeConfig,
    observations: ObservationLookup,
) -> Trajectory:
    """Execute one episode under the stop/choice protocol."""
    stack = stack or NullStrategy()
    slots = StrategySlots()
    dist_map = g.hop_distances_from(task.goal)
    ctx = EpisodeContext(
        graph=g,
        task=task,
        config=cfg,
        slots=slots,
        current=task.start,
        heading=initial_heading(g, task.start),
        dist_to_goal=dist_map,
    )
    ctx.visited.append(task.start)
    stack.on_episode_start(ctx)

    termination = "step_cap"
    error_msg = ""
    t_index = 0
    try:
        while True:
            t0 = time.perf_counter()
            record = StepRecord(
                index=t_index,
                node=ctx.current,
                heading=ctx.heading,
                distance_to_goal_hops=ctx.distance(ctx.current),
            )
            stack.pre_stop(ctx)
            pano = _panorama_text(g, observations, ctx.current)
            stop_state = PolicyState(
                instruction=task.instruction,
                node=ctx.current,
                heading=ctx.heading,
                step=ctx.steps_taken,
                phase="stop",
                panorama_text=pano,
                perspectives=(),
                slots=slots,
            )
            record.stop = policy.decide_stop(stop_state)
            if record.stop.action == -1:
                record.wall_time_s = time.perf_counter() - t0
                ctx.records.append(record)
                termination = "stopped"
                break
            if ctx.steps_taken >= cfg.max_steps:
                record.wall_time_s = time.perf_counter() - t0
                ctx.records.append(record)
                termination = "step_cap"
                break

            stack.pre_choice(ctx)
            persp = perspectives(g, ctx.current, ctx.heading)
            persp = [
                replace(p, text=observations.lookup(ctx.current, p.heading).text)
                for p in persp
            ]
            choice_state = PolicyState(
                instruction=task.instruction,
                node=ctx.current,
                heading=ctx.heading,
                step=ctx.steps_taken,
                phase="choice",
                panorama_text=pano,
                perspectives=tuple(persp),
                slots=slots,
            )
            record.choice = policy.decide_choice(choice_state)
            chosen = persp[record.choice.action]
            record.edge = (chosen.edge.frm, chosen.edge.to)
            record.direction_label = chosen.label
            record.wall_time_s = time.perf_counter() - t0

            ctx.current = chosen.edge.to
            ctx.heading = chosen.edge.azimuth
            ctx.steps_taken += 1
            ctx.visited.append(ctx.current)
            ctx.records.append(record)
            slots.clear_transient()
            t_index += 1

            target = stack.post_step(ctx, record)
            if target is not None:
                t_index = _backtrack(ctx, target, t_index)
    except PolicyTransportError as exc:
        termination = "error"
        error_msg = str(exc)

    traj = Trajectory(
        task_id=task.id,
        steps=ctx.records,
        terminal_node=ctx.current,
        termination=termination,
        config=cfg,
        error=error_msg,
    )
    stack.on_episode_end(ctx, traj)
    return traj


def _backtrack(ctx: EpisodeContext, target: str, t_index: int) -> int:
    """Retrace visited nodes back to target; each hop consumes one step."""
    if target == ctx.current:
        return t_index
    try:
        pos = len(ctx.visited) - 1 - ctx.visited[::-1].index(target)
    except ValueError:
        raise ValueError(f"backtrack target {target!r} was never visited") from None
    trail = ctx.visited[pos : len(ctx.visited) - 1]
    for prev in reversed(trail):
        if ctx.steps_taken >= ctx.config.max_steps:
            break
        edges = {e.to: e for e, _ in ctx.graph.neighbors(ctx.current)}
        edge = edges.get(prev)
        assert edge is not None, "retrace requires two-way streets"
        record = StepRecord(
            index=t_index,
            node=ctx.current,
            heading=ctx.heading,
            distance_to_goal_hops=ctx.distance(ctx.current),
            edge=(edge.frm, edge.to),
            direction_label=BACK,
            backtrack=True,
        )
        ctx.records.append(record)
        ctx.current = prev
        ctx.heading = edge.azimuth
        ctx.steps_taken += 1
        ctx.visited.append(prev)
        t_index += 1
        if prev == target:
            break
    return t_index
