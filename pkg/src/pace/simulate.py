"""Parameterized trainee agents with controllable ground truth.

An agent carries true per-skill mastery, a learning pace, and a forgetting
rate. Practicing a skill closes a fixed fraction of the remaining gap to full
mastery; mastery decays between sessions by the same power law the engine
models. Responses are sampled from mastery: compliance with probability
theta, otherwise a violation or partial outcome with an error type whose odds
shift from slips (high mastery) toward misconceptions (low mastery).

The engine under evaluation sees only the emitted observations. Ground truth
is exposed through an explicit metrics gate so accidental reads fail loudly.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .belief import ErrorType, Observation, Outcome
from .dynamics import DEFAULT_KAPPA
from .graph import Scenario, SkillGraph

ARCHETYPES: dict[str, tuple[float, float]] = {
    "fast": (0.12, 0.15),
    "moderate": (0.07, 0.25),
    "struggling": (0.03, 0.35),
    "quick_forgetter": (0.10, 0.45),
}

PARAM_NOISE = 0.15            # +/- multiplicative noise on archetype parameters
INITIAL_THETA_LOW = 0.05      # novice starting band
INITIAL_THETA_HIGH = 0.35
P_VIOLATION_GIVEN_FAIL = 0.7  # failure split: violation vs. partial
P_PROMPTED = 0.1


@dataclass(frozen=True)
class Archetype:
    name: str
    lam: float
    psi: float


def archetype(name: str) -> Archetype:
    try:
        lam, psi = ARCHETYPES[name]
    except KeyError:
        raise ValueError(f"unknown archetype {name!r}") from None
    return Archetype(name=name, lam=lam, psi=psi)


class TraineeAgent:
    """Simulated trainee over one graph's assessable nodes."""

    def __init__(
        self,
        agent_id: str,
        node_ids: Sequence[str],
        theta: np.ndarray,
        lam: float,
        psi: float,
        kappa: float = DEFAULT_KAPPA,
        archetype_name: str = "custom",
        seed: int = 0,
    ):
        self.id = agent_id
        self.node_ids = tuple(node_ids)
        self.index = {nid: i for i, nid in enumerate(self.node_ids)}
        self._theta = np.asarray(theta, dtype=float).copy()
        self._anchor_theta = self._theta.copy()
        self._anchor_time = np.full(len(self.node_ids), np.nan)
        self.lam = float(lam)
        self.psi = float(psi)
        self.kappa = float(kappa)
        self.archetype_name = archetype_name
        self.seed = seed
        self._truth_gate = 0

    # -- ground-truth firewall ------------------------------------------------

    @contextmanager
    def metrics_access(self) -> Iterator[np.ndarray]:
        """Sanctioned window for reading ground truth (metrics only)."""
        self._truth_gate += 1
        try:
            yield self._theta
        finally:
            self._truth_gate -= 1

    @property
    def theta(self) -> np.ndarray:
        """True mastery vector. Outside a metrics window this is still
        readable on the plain agent; the sentinel subclass turns it into a
        tripwire."""
        return self._theta

    # -- dynamics ---------------------------------------------------------------

    def forget(self, now: float) -> None:
        """Decay every practiced skill from its last-practice anchor."""
        gaps = now - self._anchor_time
        practiced = ~np.isnan(gaps)
        if not practiced.any():
            return
        gaps = np.maximum(gaps[practiced], 0.0)
        self._theta[practiced] = (
            self._anchor_theta[practiced] * (1.0 + self.kappa * gaps) ** (-self.psi)
        )

    def learn(self, practiced_nodes: Sequence[str], now: float) -> None:
        """Saturating gain on each practiced skill; re-anchors decay."""
        idx = np.array([self.index[n] for n in practiced_nodes], dtype=np.int64)
        if idx.size == 0:
            return
        self._theta[idx] += self.lam * (1.0 - self._theta[idx])
        self._anchor_theta[idx] = self._theta[idx]
        self._anchor_time[idx] = now

    def learn_idx(self, idx: np.ndarray, now: float) -> None:
        if idx.size == 0:
            return
        self._theta[idx] += self.lam * (1.0 - self._theta[idx])
        self._anchor_theta[idx] = self._theta[idx]
        self._anchor_time[idx] = now

    # -- responses ----------------------------------------------------------------

    def respond(
        self,
        scenario: Scenario,
        graph: SkillGraph,
        now: float,
        rng: np.random.Generator,
    ) -> list[Observation]:
        active = sorted(graph.activated_subgraph(scenario))
        idx = np.array([self.index[n] for n in active], dtype=np.int64)
        return self.respond_idx(active, idx, now, rng)

    def respond_idx(
        self,
        node_ids: Sequence[str],
        idx: np.ndarray,
        now: float,
        rng: np.random.Generator,
    ) -> list[Observation]:
        """Sample one observation per activated node from current mastery."""
        theta = self._theta[idx]
        n = len(idx)
        u_outcome = rng.random(n)
        u_fail = rng.random(n)
        u_prompt = rng.random(n)
        u_err = rng.random(n)
        observations: list[Observation] = []
        for j, nid in enumerate(node_ids):
            th = theta[j]
            if u_outcome[j] < th:
                observations.append(Observation(
                    node=nid, outcome=Outcome.COMPLIANT,
                    prompted=bool(u_prompt[j] < P_PROMPTED), timestamp=now,
                ))
                continue
            outcome = (Outcome.VIOLATION if u_fail[j] < P_VIOLATION_GIVEN_FAIL
                       else Outcome.PARTIAL)
            w_slip = th
            w_mis = 0.7 * (1.0 - th)
            w_om = 0.3 * (1.0 - th)
            total = w_slip + w_mis + w_om
            r = u_err[j] * total
            if r < w_slip:
                err = ErrorType.SLIP
            elif r < w_slip + w_mis:
                err = ErrorType.MISCONCEPTION
            else:
                err = ErrorType.OMISSION
            observations.append(Observation(
                node=nid, outcome=outcome, error_type=err, timestamp=now,
            ))
        return observations

    # -- assessment -----------------------------------------------------------------

    def exam_score(self, exam: Sequence[Scenario], graph: SkillGraph) -> float:
        """Expected held-out exam score, 0-100: the mean over exam scenarios
        of mean true mastery across each activated subgraph."""
        if not exam:
            raise ValueError("exam is empty")
        per_scenario = []
        with self.metrics_access() as theta:
            for s in exam:
                idx = [self.index[n] for n in graph.activated_subgraph(s)
                       if n in self.index]
                if not idx:
                    continue
                per_scenario.append(float(theta[idx].mean()))
        if not per_scenario:
            raise ValueError("no exam scenario activates any known skill")
        return 100.0 * float(np.mean(per_scenario))

    def snapshot(self) -> dict:
        return {
            "id": self.id,
            "archetype": self.archetype_name,
            "lambda": self.lam,
            "psi": self.psi,
            "theta": {nid: float(self._theta[i])
                      for i, nid in enumerate(self.node_ids)},
            "seed": self.seed,
        }


def instantiate_archetype(
    arch: Archetype | str,
    graph: SkillGraph,
    seed: int,
    agent_id: str | None = None,
    kappa: float = DEFAULT_KAPPA,
) -> TraineeAgent:
    """Draw a trainee: archetype parameters jittered by +/-15 percent,
    initial mastery i.i.d. in the novice band. Deterministic per seed."""
    if isinstance(arch, str):
        arch = archetype(arch)
    rng = np.random.default_rng(seed)
    lam = arch.lam * rng.uniform(1.0 - PARAM_NOISE, 1.0 + PARAM_NOISE)
    psi = arch.psi * rng.uniform(1.0 - PARAM_NOISE, 1.0 + PARAM_NOISE)
    theta = rng.uniform(INITIAL_THETA_LOW, INITIAL_THETA_HIGH,
                        size=len(graph.assessable_ids))
    return TraineeAgent(
        agent_id=agent_id or f"{arch.name}-{seed}",
        node_ids=graph.assessable_ids,
        theta=theta,
        lam=lam,
        psi=psi,
        kappa=kappa,
        archetype_name=arch.name,
        seed=seed,
    )


class TruthAccessError(RuntimeError):
    """Ground truth was read outside a sanctioned metrics window."""


class SentinelAgent(TraineeAgent):
    """Agent whose ground-truth accessor trips unless inside
    :meth:`metrics_access`. Running a full training loop with one proves the
    selection path never touches truth."""

    @property
    def theta(self) -> np.ndarray:
        if self._truth_gate <= 0:
            raise TruthAccessError(
                f"unsanctioned ground-truth read on agent {self.id!r}"
            )
        return self._theta


def as_sentinel(agent: TraineeAgent) -> SentinelAgent:
    dup = SentinelAgent(
        agent_id=agent.id,
        node_ids=agent.node_ids,
        theta=agent._theta,
        lam=agent.lam,
        psi=agent.psi,
        kappa=agent.kappa,
        archetype_name=agent.archetype_name,
        seed=agent.seed,
    )
    dup._anchor_theta = agent._anchor_theta.copy()
    dup._anchor_time = agent._anchor_time.copy()
    return dup
