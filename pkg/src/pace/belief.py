"""Per-skill Beta posteriors over mastery, updated from structured debrief
observations and propagated one hop to similar skills.

Observation outcomes: ``compliant``, ``violation``, ``partial`` and
``not_applicable``. Evidence strength is weighted: prompted successes count
half, misconceptions count 1.5x on the failure side, slips count half, and
omissions carry base weight. Partial compliance adds evidence on both sides.

Propagation blends a cached neighbor's mean with ``phi * mean(observed)``
while preserving the neighbor's total pseudo-count, so indirect evidence
shifts the estimate without manufacturing confidence.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .graph import SkillGraph
from .similarity import IndexArrays


class Outcome(str, Enum):
    COMPLIANT = "compliant"        # ⊤
    VIOLATION = "violation"        # ⊥
    PARTIAL = "partial"            # ∼
    NOT_APPLICABLE = "not_applicable"  # ⊘


class ErrorType(str, Enum):
    SLIP = "slip"
    MISCONCEPTION = "misconception"
    OMISSION = "omission"


class BeliefError(ValueError):
    pass


@dataclass(frozen=True)
class Observation:
    """One debrief outcome for one skill node.

    Timestamps are wall-clock hours (see :func:`parse_timestamp` for the
    ISO-8601 boundary conversion).
    """

    node: str
    outcome: Outcome
    error_type: ErrorType | None = None
    prompted: bool = False
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        if self.outcome in (Outcome.COMPLIANT, Outcome.NOT_APPLICABLE):
            if self.error_type is not None:
                raise BeliefError(
                    f"error_type must be absent for outcome {self.outcome.value}"
                )


def parse_timestamp(iso: str) -> float:
    """ISO-8601 instant -> hours since the Unix epoch."""
    dt = datetime.fromisoformat(iso.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp() / 3600.0


def format_timestamp(hours: float) -> str:
    return datetime.fromtimestamp(hours * 3600.0, tz=timezone.utc).isoformat()


def evidence_weights(
    outcome: Outcome,
    error_type: ErrorType | None,
    prompted: bool,
) -> tuple[float, float]:
    """(success weight, failure weight) for one observation.

    Base weight is 1.0 on both sides; prompted successes are attenuated to
    0.5, misconceptions amplified to 1.5, slips attenuated to 0.5.
    """
    w_plus = 0.5 if prompted else 1.0
    if error_type is ErrorType.MISCONCEPTION:
        w_minus = 1.5
    elif error_type is ErrorType.SLIP:
        w_minus = 0.5
    else:
        w_minus = 1.0
    return w_plus, w_minus


@dataclass
class NodeBelief:
    alpha: float
    beta: float
    last_practiced: float | None = None

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    @property
    def variance(self) -> float:
        n = self.alpha + self.beta
        return self.alpha * self.beta / (n * n * (n + 1.0))


@dataclass
class BeliefSummary:
    means: np.ndarray
    mean_variance: float       # average epistemic uncertainty
    coverage: float            # fraction of skills at or above mastery
    weak_mean: float           # average mastery of below-threshold skills


class BeliefState:
    """Beta posteriors for every assessable node, plus the observation log.

    Array-backed: ``alpha``, ``beta`` and ``last_practiced`` are aligned with
    ``node_ids``. A single writer mutates a state; concurrent readers should
    work from :meth:`copy` snapshots.
    """

    def __init__(
        self,
        node_ids: Sequence[str],
        prior_alpha: float = 1.0,
        prior_beta: float = 1.0,
        keep_log: bool = True,
    ):
        if prior_alpha <= 0 or prior_beta <= 0:
            raise BeliefError("priors must be positive")
        if not node_ids:
            raise BeliefError("graph has no assessable nodes")
        self.node_ids: tuple[str, ...] = tuple(node_ids)
        self.index: dict[str, int] = {nid: i for i, nid in enumerate(self.node_ids)}
        n = len(self.node_ids)
        self.alpha = np.full(n, float(prior_alpha))
        self.beta = np.full(n, float(prior_beta))
        self.last_practiced = np.full(n, np.nan)
        self.prior_alpha = float(prior_alpha)
        self.prior_beta = float(prior_beta)
        self.log: list[Observation] | None = [] if keep_log else None

    # -- views ---------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.node_ids)

    def get(self, node_id: str) -> NodeBelief:
        i = self._idx(node_id)
        lp = self.last_practiced[i]
        return NodeBelief(
            alpha=float(self.alpha[i]),
            beta=float(self.beta[i]),
            last_practiced=None if math.isnan(lp) else float(lp),
        )

    def means(self) -> np.ndarray:
        return self.alpha / (self.alpha + self.beta)

    def variances(self) -> np.ndarray:
        n = self.alpha + self.beta
        return self.alpha * self.beta / (n * n * (n + 1.0))

    def copy(self) -> "BeliefState":
        dup = BeliefState(self.node_ids, self.prior_alpha, self.prior_beta,
                          keep_log=self.log is not None)
        dup.alpha = self.alpha.copy()
        dup.beta = self.beta.copy()
        dup.last_practiced = self.last_practiced.copy()
        if self.log is not None:
            dup.log = list(self.log)
        return dup

    def _idx(self, node_id: str) -> int:
        i = self.index.get(node_id)
        if i is None:
            raise BeliefError(f"unknown node {node_id!r}")
        return i

    # -- updates ---------------------------------------------------------------

    def update(self, obs: Observation) -> None:
        """Apply one observation's weighted pseudo-counts."""
        i = self._idx(obs.node)
        if obs.outcome is not Outcome.NOT_APPLICABLE:
            w_plus, w_minus = evidence_weights(obs.outcome, obs.error_type,
                                               obs.prompted)
            if obs.outcome in (Outcome.COMPLIANT, Outcome.PARTIAL):
                self.alpha[i] += w_plus
            if obs.outcome in (Outcome.VIOLATION, Outcome.PARTIAL):
                self.beta[i] += w_minus
            self.last_practiced[i] = obs.timestamp
        if self.log is not None:
            self.log.append(obs)

    def propagate(self, arrays: IndexArrays, node_id: str,
                  upward_only: bool = False,
                  target_max_count: float | None = None) -> None:
        """Blend a just-observed node's mean into its cached neighbors.

        One hop only. Each neighbor's mean moves to the midpoint of its
        current mean and ``phi * mean(observed)``; total pseudo-count stays
        fixed so variance is untouched by indirect evidence.

        ``upward_only`` skips blends that would lower a neighbor.
        ``target_max_count`` restricts targets to neighbors whose total
        pseudo-count does not exceed it; passing the prior total confines
        inference to never-assessed skills. Unrestricted blending lets two
        frequently co-practiced similar skills grind each other down (each
        blend pulls the pair toward ``phi`` times itself) and leaks one
        scenario's evidence into another's observed skills.
        """
        i = self._idx(node_id)
        nbr = arrays.nbr_idx[i]
        phi = arrays.nbr_phi[i]
        if target_max_count is not None and nbr.size:
            keep = (self.alpha[nbr] + self.beta[nbr]) <= target_max_count
            nbr = nbr[keep]
            phi = phi[keep]
        if nbr.size == 0:
            return
        mu_v = self.alpha[i] / (self.alpha[i] + self.beta[i])
        totals = self.alpha[nbr] + self.beta[nbr]
        current = self.alpha[nbr] / totals
        target = 0.5 * (current + phi * mu_v)
        if upward_only:
            target = np.maximum(target, current)
        self.alpha[nbr] = target * totals
        self.beta[nbr] = totals - self.alpha[nbr]

    def summary(self, mastery_threshold: float = 0.85,
                weak_threshold: float = 0.85) -> BeliefSummary:
        means = self.means()
        weak = means[means < weak_threshold]
        return BeliefSummary(
            means=means,
            mean_variance=float(self.variances().mean()),
            coverage=float((means >= mastery_threshold).mean()),
            weak_mean=float(weak.mean()) if weak.size else 0.0,
        )

    # -- persistence -------------------------------------------------------------

    def export_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["node", "alpha", "beta", "mean", "variance",
                             "last_practiced"])
            means = self.means()
            variances = self.variances()
            for i, nid in enumerate(self.node_ids):
                lp = self.last_practiced[i]
                writer.writerow([
                    nid,
                    f"{self.alpha[i]:.6f}",
                    f"{self.beta[i]:.6f}",
                    f"{means[i]:.6f}",
                    f"{variances[i]:.6f}",
                    "" if math.isnan(lp) else format_timestamp(float(lp)),
                ])


def init_beliefs(graph: SkillGraph, prior_alpha: float = 1.0,
                 prior_beta: float = 1.0, keep_log: bool = True) -> BeliefState:
    return BeliefState(graph.assessable_ids, prior_alpha, prior_beta,
                       keep_log=keep_log)


def update_belief(state: BeliefState, obs: Observation) -> BeliefState:
    state.update(obs)
    return state


def propagate(state: BeliefState, arrays: IndexArrays, node_id: str,
              upward_only: bool = False,
              target_max_count: float | None = None) -> BeliefState:
    state.propagate(arrays, node_id, upward_only=upward_only,
                    target_max_count=target_max_count)
    return state


def belief_summary(state: BeliefState, mastery_threshold: float = 0.85,
                   weak_threshold: float = 0.85) -> BeliefSummary:
    return state.summary(mastery_threshold, weak_threshold)


# -- observation-log boundary formats -----------------------------------------


def observation_to_json(obs: Observation) -> str:
    rec = {
        "node": obs.node,
        "outcome": obs.outcome.value,
        "error_type": obs.error_type.value if obs.error_type else None,
        "prompted": obs.prompted,
        "timestamp": format_timestamp(obs.timestamp),
    }
    return json.dumps(rec, sort_keys=True)


def observation_from_dict(rec: dict) -> Observation:
    ts = rec.get("timestamp", 0.0)
    return Observation(
        node=rec["node"],
        outcome=Outcome(rec["outcome"]),
        error_type=ErrorType(rec["error_type"]) if rec.get("error_type") else None,
        prompted=bool(rec.get("prompted", False)),
        timestamp=parse_timestamp(ts) if isinstance(ts, str) else float(ts),
    )


def read_observation_log(path: str | Path) -> list[Observation]:
    """JSON-lines observation file -> observations, one per line."""
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            out.append(observation_from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise BeliefError(f"{path}:{lineno}: bad observation: {exc}") from exc
    return out


def replay_log(
    node_ids: Sequence[str],
    observations: Iterable[Observation],
    prior_alpha: float = 1.0,
    prior_beta: float = 1.0,
    arrays: IndexArrays | None = None,
    upward_only: bool = False,
    target_max_count: float | None = None,
) -> BeliefState:
    """Fold an observation log over fresh priors, re-applying propagation when
    an index is supplied. Replaying a state's own log reproduces it exactly."""
    state = BeliefState(node_ids, prior_alpha, prior_beta, keep_log=True)
    for obs in observations:
        state.update(obs)
        if arrays is not None and obs.outcome is not Outcome.NOT_APPLICABLE:
            state.propagate(arrays, obs.node, upward_only=upward_only,
                            target_max_count=target_max_count)
    return state
