"""Base decision-makers: scripted reference baselines, oracle policies for
strategy testing, and the remote chat-model adapter.

Scripted policies are pure functions of (state, seed); instantiate one per
episode for reproducible runs.
"""

from __future__ import annotations

import logging
import os
import random
import time
from dataclasses import dataclass

import httpx

from .bench import Task
from .episode import (
    FORWARD,
    Decision,
    PolicyState,
    PolicyTransportError,
    parse_decision,
)
from .geo import signed_delta_deg
from .graph import NavGraph
from .prompts import render_choice_messages, render_stop_messages

log = logging.getLogger(__name__)

# Fixed scripted-baseline confidence: below the 0.75 backtracking threshold,
# so confidence-triggered strategies fire deterministically under them.
BASELINE_CONFIDENCE = 0.5


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = "random"  # random | forward | oracle | noisy_oracle | remote
    noise_p: float = 0.0
    seed: int = 0
    endpoint: str = ""
    model: str = ""
    auth_env: str = "URBANNAV_API_TOKEN"
    timeout_s: float = 30.0
    temperature: float = 0.0
    retries: int = 2
    backoff_s: float = 0.5
    verbose: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.noise_p <= 1.0:
            raise ValueError("noise_p must lie in [0, 1]")


def _never_stop(state: PolicyState) -> Decision:
    return Decision(
        phase="stop",
        observation_digest=state.panorama_text[:80],
        rationale="scripted baseline: continue",
        action=0,
        confidence=BASELINE_CONFIDENCE,
    )


class RandomPolicy:
    """Uniform choice over perspectives; never stops before the cap."""

    def __init__(self, seed: int = 0):
        self._rng = random.Random(seed)

    def decide_stop(self, state: PolicyState) -> Decision:
        return _never_stop(state)

    def decide_choice(self, state: PolicyState) -> Decision:
        idx = self._rng.randrange(len(state.perspectives))
        return Decision(
            phase="choice",
            observation_digest="",
            rationale="random direction",
            action=idx,
            confidence=BASELINE_CONFIDENCE,
        )


class ForwardPolicy:
    """Always moves FORWARD; falls back to the smallest turn, clockwise-first."""

    def decide_stop(self, state: PolicyState) -> Decision:
        return _never_stop(state)

    def decide_choice(self, state: PolicyState) -> Decision:
        best = None
        for p in state.perspectives:
            if p.label == FORWARD:
                best = p
                break
        if best is None:
            # Minimal |delta| from the current heading; positive (clockwise)
            # delta wins ties.
            def key(p):
                d = signed_delta_deg(state.heading, p.heading)
                return (abs(d), 0 if d >= 0 else 1)

            best = min(state.perspectives, key=key)
        return Decision(
            phase="choice",
            observation_digest="",
            rationale="forward heuristic",
            action=best.index,
            confidence=BASELINE_CONFIDENCE,
        )


class OraclePolicy:
    """Follows a shortest path to the goal and stops there; test-only."""

    def __init__(self, graph: NavGraph, task: Task):
        self._task = task
        self._dist = graph.hop_distances_from(task.goal)

    def _oracle_index(self, state: PolicyState) -> int:
        best = None
        for p in state.perspectives:
            d = self._dist.get(p.edge.to)
            if d is None:
                continue
            key = (d, p.edge.to)
            if best is None or key < best[0]:
                best = (key, p.index)
        if best is None:
            raise ValueError(f"goal unreachable from {state.node!r}")
        return best[1]

    def decide_stop(self, state: PolicyState) -> Decision:
        at_goal = state.node == self._task.goal
        return Decision(
            phase="stop",
            observation_digest=state.panorama_text[:80],
            rationale="at goal" if at_goal else "not at goal yet",
            action=-1 if at_goal else 0,
            confidence=1.0,
        )

    def decide_choice(self, state: PolicyState) -> Decision:
        return Decision(
            phase="choice",
            observation_digest="",
            rationale="shortest-path move",
            action=self._oracle_index(state),
            confidence=1.0,
        )


class NoisyOraclePolicy(OraclePolicy):
    """Oracle with seeded error injection; exercises the B/C/R strategies.

    With probability p the move is replaced by a random non-oracle
    perspective at low confidence. Strategy context is honored: a backtrack
    hint is followed verbatim, and noise never moves into a node present in
    the injected recent-history window.
    """

    def __init__(self, graph: NavGraph, task: Task, p: float, seed: int = 0):
        super().__init__(graph, task)
        self._p = p
        self._rng = random.Random(seed)

    def decide_choice(self, state: PolicyState) -> Decision:
        if state.slots.backtrack_hint is not None and 0 <= state.slots.backtrack_hint < len(
            state.perspectives
        ):
            return Decision(
                phase="choice",
                observation_digest="",
                rationale="following backtrack hint",
                action=state.slots.backtrack_hint,
                confidence=self._rng.uniform(0.8, 1.0),
            )
        oracle_idx = self._oracle_index(state)
        recent = set(state.slots.history_nodes)
        if state.node in recent:
            # Recent-history context shows this ground was just covered:
            # reorient and take the clean move.
            return Decision(
                phase="choice",
                observation_digest="",
                rationale="revisited node in recent history; reorienting",
                action=oracle_idx,
                confidence=self._rng.uniform(0.8, 1.0),
            )
        alternates = [
            p.index
            for p in state.perspectives
            if p.index != oracle_idx and p.edge.to not in recent
        ]
        if alternates and self._rng.random() < self._p:
            return Decision(
                phase="choice",
                observation_digest="",
                rationale="injected error",
                action=self._rng.choice(alternates),
                confidence=self._rng.uniform(0.2, 0.6),
            )
        return Decision(
            phase="choice",
            observation_digest="",
            rationale="shortest-path move",
            action=oracle_idx,
            confidence=self._rng.uniform(0.8, 1.0),
        )


class RemotePolicy:
    """Chat-completion adapter speaking the stop/choice prompt contract."""

    def __init__(self, config: PolicyConfig, transport: httpx.BaseTransport | None = None):
        self._config = config
        token = os.environ.get(config.auth_env, "")
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = httpx.Client(
            timeout=config.timeout_s, transport=transport, headers=headers
        )

    def close(self) -> None:
        self._client.close()

    def _complete(self, messages: list[dict]) -> str:
        body = {
            "model": self._config.model,
            "messages": messages,
            "temperature": self._config.temperature,
        }
        if self._config.verbose:
            log.info("remote request: %s", {**body, "auth": "<redacted>"})
        last_error: Exception | None = None
        for attempt in range(self._config.retries + 1):
            try:
                resp = self._client.post(self._config.endpoint, json=body)
                resp.raise_for_status()
            except httpx.HTTPError as exc:
                last_error = exc
                if attempt < self._config.retries:
                    time.sleep(self._config.backoff_s * (2 ** attempt))
                continue
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                # Well-formed transport, malformed payload: let the parser
                # fall back to action 0.
                return resp.text
            if self._config.verbose:
                log.info("remote response: %s", content)
            return content if isinstance(content, str) else ""
        raise PolicyTransportError(
            f"remote decision failed after {self._config.retries + 1} attempts: {last_error}"
        )

    def decide_stop(self, state: PolicyState) -> Decision:
        raw = self._complete(render_stop_messages(state))
        return parse_decision(raw, "stop")

    def decide_choice(self, state: PolicyState) -> Decision:
        raw = self._complete(render_choice_messages(state))
        return parse_decision(raw, "choice", len(state.perspectives))


def make_policy(
    config: PolicyConfig,
    graph: NavGraph | None = None,
    task: Task | None = None,
    transport: httpx.BaseTransport | None = None,
):
    """Instantiate the configured policy; oracle kinds need graph and task."""
    kind = config.kind
    if kind == "random":
        return RandomPolicy(seed=config.seed)
    if kind == "forward":
        return ForwardPolicy()
    if kind in ("oracle", "noisy_oracle"):
        if graph is None or task is None:
            raise ValueError(f"{kind} policy requires graph and task")
        if kind == "oracle":
            return OraclePolicy(graph, task)
        return NoisyOraclePolicy(graph, task, p=config.noise_p, seed=config.seed)
    if kind == "remote":
        return RemotePolicy(config, transport=transport)
    raise ValueError(f"unknown policy kind {kind!r}")
