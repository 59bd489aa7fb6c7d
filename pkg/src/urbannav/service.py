"""HTTP session service: live episodes with a human (or scripted client) as
the decision-maker.

State views expose the instruction, remaining step budget, and the ordered
perspective list only — never the goal node, the reference path, or any
distance-to-goal signal. Sessions are in-memory with JSON snapshots; idle
sessions expire after an hour.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .bench import Task, load_tasks
from .episode import (
    Decision,
    EpisodeConfig,
    StepRecord,
    Trajectory,
    initial_heading,
    perspectives,
)
from .graph import NavGraph, load_graph
from .metrics import compute_episode_metrics, metrics_row
from .synthcity import ObservationTable

MAX_SESSION_STEPS = 35
IDLE_EXPIRY_S = 3600.0


class CreateSessionBody(BaseModel):
    task_id: str


class ActionBody(BaseModel):
    action: int


@dataclass
class Session:
    id: str
    task: Task
    node: str
    heading: float
    steps: int = 0
    status: str = "active"  # active | stopped | capped
    records: list[StepRecord] = field(default_factory=list)
    created_at: float = field(default_factory=time.time)
    updated_at: float = field(default_factory=time.time)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def touch(self) -> None:
        self.updated_at = time.time()

    def trajectory(self, max_steps: int = MAX_SESSION_STEPS) -> Trajectory:
        termination = {"stopped": "stopped", "capped": "step_cap"}.get(self.status, "step_cap")
        return Trajectory(
            task_id=self.task.id,
            steps=list(self.records),
            terminal_node=self.node,
            termination=termination,
            config=EpisodeConfig(max_steps=max_steps),
        )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "task_id": self.task.id,
            "node": self.node,
            "heading": self.heading,
            "steps": self.steps,
            "status": self.status,
            "records": [r.to_dict() for r in self.records],
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }


class SessionHub:
    """Session registry: per-session locking, expiry, and snapshotting."""

    def __init__(
        self,
        graph: NavGraph,
        tasks: list[Task],
        observations: ObservationTable,
        snapshot_dir: Optional[Path] = None,
        idle_expiry_s: float = IDLE_EXPIRY_S,
    ):
        self.graph = graph
        self.tasks = {t.id: t for t in tasks}
        self.observations = observations
        self.snapshot_dir = snapshot_dir
        self.idle_expiry_s = idle_expiry_s
        self.sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()
        if snapshot_dir is not None:
            snapshot_dir.mkdir(parents=True, exist_ok=True)
            self._restore()

    # -- snapshots --

    def _snapshot_path(self) -> Optional[Path]:
        return self.snapshot_dir / "sessions.json" if self.snapshot_dir else None

    def snapshot(self) -> None:
        path = self._snapshot_path()
        if path is None:
            return
        doc = {"sessions": [s.to_dict() for s in self.sessions.values()]}
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, indent=1, sort_keys=True))
        tmp.replace(path)

    def _restore(self) -> None:
        path = self._snapshot_path()
        if path is None or not path.exists():
            return
        doc = json.loads(path.read_text())
        for rec in doc.get("sessions", []):
            task = self.tasks.get(rec["task_id"])
            if task is None:
                continue
            session = Session(
                id=rec["id"],
                task=task,
                node=rec["node"],
                heading=float(rec["heading"]),
                steps=int(rec["steps"]),
                status=rec["status"],
                records=[StepRecord.from_dict(r) for r in rec["records"]],
                created_at=float(rec["created_at"]),
                updated_at=float(rec["updated_at"]),
            )
            self.sessions[session.id] = session

    # -- lifecycle --

    def expire_idle(self) -> None:
        cutoff = time.time() - self.idle_expiry_s
        with self._registry_lock:
            stale = [sid for sid, s in self.sessions.items() if s.updated_at < cutoff]
            for sid in stale:
                del self.sessions[sid]

    def create(self, task_id: str) -> Session:
        task = self.tasks.get(task_id)
        if task is None:
            raise HTTPException(status_code=404, detail=f"unknown task {task_id!r}")
        session = Session(
            id=uuid.uuid4().hex,
            task=task,
            node=task.start,
            heading=initial_heading(self.graph, task.start),
        )
        with self._registry_lock:
            self.sessions[session.id] = session
        self.snapshot()
        return session

    def get(self, session_id: str) -> Session:
        self.expire_idle()
        session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return session

    # -- views --

    def _perspective_views(self, session: Session) -> list[dict]:
        persp = perspectives(self.graph, session.node, session.heading)
        views = []
        for p in persp:
            text = self.observations.lookup(session.node, p.heading).text
            views.append(
                {
                    "index": p.index,
                    "label": p.label,
                    "heading": p.heading,
                    "text": text,
                    "image": None,
                }
            )
        return views

    def state_view(self, session: Session) -> dict:
        base = {
            "session_id": session.id,
            "task_id": session.task.id,
            "status": session.status,
            "instruction": session.task.instruction,
            "steps": session.steps,
            "steps_remaining": max(0, MAX_SESSION_STEPS - session.steps),
            "node": session.node,
            "heading": session.heading,
        }
        if session.status != "active":
            return base
        base["perspectives"] = self._perspective_views(session)
        return base

    # -- transitions --

    def apply_action(self, session_id: str, action: int) -> dict:
        session = self.get(session_id)
        with session.lock:
            if session.status != "active":
                raise HTTPException(
                    status_code=409, detail=f"session is {session.status}, not active"
                )
            persp = perspectives(self.graph, session.node, session.heading)
            if not 0 <= action < len(persp):
                raise HTTPException(
                    status_code=422,
                    detail=f"action {action} out of range [0, {len(persp) - 1}]",
                )
            chosen = persp[action]
            record = StepRecord(
                index=len(session.records),
                node=session.node,
                heading=session.heading,
                distance_to_goal_hops=-1.0,  # never computed for live sessions
                choice=Decision(
                    phase="choice",
                    observation_digest="",
                    rationale="operator choice",
                    action=action,
                    confidence=1.0,
                ),
                edge=(chosen.edge.frm, chosen.edge.to),
                direction_label=chosen.label,
            )
            session.records.append(record)
            session.node = chosen.edge.to
            session.heading = chosen.edge.azimuth
            session.steps += 1
            if session.steps >= MAX_SESSION_STEPS:
                session.status = "capped"
            session.touch()
        self.snapshot()
        return self.state_view(session)

    def stop(self, session_id: str) -> dict:
        session = self.get(session_id)
        with session.lock:
            if session.status != "active":
                raise HTTPException(
                    status_code=409, detail=f"session is {session.status}, not active"
                )
            record = StepRecord(
                index=len(session.records),
                node=session.node,
                heading=session.heading,
                distance_to_goal_hops=-1.0,
                stop=Decision(
                    phase="stop",
                    observation_digest="",
                    rationale="operator stop",
                    action=-1,
                    confidence=1.0,
                ),
            )
            session.records.append(record)
            session.status = "stopped"
            session.touch()
        self.snapshot()
        return self.state_view(session)

    def report(self, session_id: str) -> dict:
        session = self.get(session_id)
        with session.lock:
            if session.status == "active":
                raise HTTPException(status_code=409, detail="session is still active")
            traj = session.trajectory()
            metrics = compute_episode_metrics(self.graph, traj, session.task)
            if self.snapshot_dir is not None:
                from .runner import write_trajectory_log

                log = self.snapshot_dir / f"session_{session.id}.jsonl"
                write_trajectory_log(log, session.task, traj)
            return {
                "session_id": session.id,
                "task_id": session.task.id,
                "status": session.status,
                "metrics": metrics_row(metrics),
                "trajectory": [r.to_dict() for r in traj.steps],
                "terminal_node": traj.terminal_node,
            }


def create_app(
    graph: NavGraph,
    tasks: list[Task],
    observations: ObservationTable,
    snapshot_dir: str | Path | None = None,
    idle_expiry_s: float = IDLE_EXPIRY_S,
) -> FastAPI:
    hub = SessionHub(
        graph,
        tasks,
        observations,
        snapshot_dir=Path(snapshot_dir) if snapshot_dir else None,
        idle_expiry_s=idle_expiry_s,
    )
    app = FastAPI(title="urbannav session service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.hub = hub

    @app.get("/tasks")
    def list_tasks() -> list[dict]:
        return [
            {"id": t.id, "instruction": t.instruction, "category": t.category}
            for t in sorted(hub.tasks.values(), key=lambda t: t.id)
        ]

    @app.post("/sessions")
    def create_session(body: CreateSessionBody) -> dict:
        session = hub.create(body.task_id)
        return hub.state_view(session)

    @app.get("/sessions/{session_id}/state")
    def get_state(session_id: str) -> dict:
        return hub.state_view(hub.get(session_id))

    @app.post("/sessions/{session_id}/action")
    def post_action(session_id: str, body: ActionBody) -> dict:
        return hub.apply_action(session_id, body.action)

    @app.post("/sessions/{session_id}/stop")
    def post_stop(session_id: str) -> dict:
        return hub.stop(session_id)

    @app.get("/sessions/{session_id}/report")
    def get_report(session_id: str) -> dict:
        return hub.report(session_id)

    return app


def create_app_from_files(
    graph_file: str | Path,
    task_file: str | Path,
    observations_file: str | Path,
    snapshot_dir: str | Path | None = None,
) -> FastAPI:
    return create_app(
        load_graph(graph_file),
        load_tasks(task_file),
        ObservationTable.load(observations_file),
        snapshot_dir=snapshot_dir,
    )
