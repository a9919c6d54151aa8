"""Scenario selection: Thompson sampling over per-scenario Bayesian linear
reward models, plus the two deterministic baseline policies.

Each candidate scenario keeps an independent Gaussian posterior over a
7-dimensional linear reward coefficient vector. A batch is picked
sequentially: sample coefficients for every feasible scenario, take the
argmax of sampled-score-times-context, then refresh the context as if the
pick's skills were already covered before the next draw.

Context layout (fixed order):
``[mean belief variance, coverage, learning pace, forgetting rate,
weak-skill mean, decay-risk fraction, progress]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .belief import BeliefState, BeliefSummary
from .dynamics import DynamicsEstimate
from .graph import ScenarioCatalog, SkillGraph

CONTEXT_DIM = 7
#: Prior scale for arm coefficients. Sized so that prior score draws stay on
#: the order of one observed reward: with hundreds of candidate scenarios and
#: only a few picks per session, a wider prior makes the max of the untried
#: arms' samples dominate every draw and the policy never exploits.
DEFAULT_PRIOR_SIGMA = 0.2
#: Observation-noise variance for the reward model; sized so a couple of
#: observed rewards move an arm decisively at the scale rewards take here.
DEFAULT_NOISE_VAR = 0.05
DEFAULT_PREREQ_FLOOR = 0.25
DEFAULT_BATCH_K = 5


class BanditError(ValueError):
    pass


@dataclass(frozen=True)
class ContextVector:
    sigma_bar_sq: float
    coverage: float
    lambda_hat: float
    psi_hat: float
    weak_mean: float
    decay_risk: float     # count normalized by assessable-node count
    progress: float       # t / N

    def as_array(self) -> np.ndarray:
        return np.array([
            self.sigma_bar_sq, self.coverage, self.lambda_hat, self.psi_hat,
            self.weak_mean, self.decay_risk, self.progress,
        ])


def build_context(
    summary: BeliefSummary,
    dyn: DynamicsEstimate,
    decay_risk: int,
    t: int,
    n_sessions: int,
    n_assessable: int,
) -> ContextVector:
    if n_sessions <= 0:
        raise BanditError("n_sessions must be positive")
    if not 0 <= t <= n_sessions:
        raise BanditError("session index out of range")
    return ContextVector(
        sigma_bar_sq=summary.mean_variance,
        coverage=summary.coverage,
        lambda_hat=dyn.lambda_hat,
        psi_hat=dyn.psi_hat,
        weak_mean=summary.weak_mean,
        decay_risk=decay_risk / max(n_assessable, 1),
        progress=t / n_sessions,
    )


# ---------------------------------------------------------------------------
# Arm posteriors
# ---------------------------------------------------------------------------


@dataclass
class ArmPosterior:
    """Gaussian posterior over one scenario's linear reward coefficients."""

    scenario: str
    mean: np.ndarray = field(default_factory=lambda: np.zeros(CONTEXT_DIM))
    covariance: np.ndarray = field(
        default_factory=lambda: np.eye(CONTEXT_DIM) * DEFAULT_PRIOR_SIGMA**2
    )
    n_pulls: int = 0
    degraded: bool = False  # a numerical repair (jitter) was applied

    def cholesky(self) -> np.ndarray:
        return np.linalg.cholesky(self.covariance)


def update_arm(
    arm: ArmPosterior,
    x: ContextVector | np.ndarray,
    reward: float,
    noise_var: float = DEFAULT_NOISE_VAR,
) -> ArmPosterior:
    """Conjugate Bayesian linear-regression update for one (context, reward)."""
    xv = x.as_array() if isinstance(x, ContextVector) else np.asarray(x, dtype=float)
    precision = np.linalg.inv(arm.covariance)
    new_precision = precision + np.outer(xv, xv) / noise_var
    new_cov = np.linalg.inv(new_precision)
    new_cov = 0.5 * (new_cov + new_cov.T)
    new_mean = new_cov @ (precision @ arm.mean + xv * reward / noise_var)
    arm.mean = new_mean
    arm.covariance = new_cov
    try:
        np.linalg.cholesky(new_cov)
    except np.linalg.LinAlgError:
        arm.covariance = new_cov + np.eye(len(xv)) * 1e-9
        arm.degraded = True
    arm.n_pulls += 1
    return arm


def argmax_by_score(scores: np.ndarray, ids: Sequence[str]) -> int:
    """Index of the best score; ties resolved by scenario id ascending."""
    best = float(np.max(scores))
    tied = [i for i in range(len(ids)) if scores[i] == best]
    if len(tied) == 1:
        return tied[0]
    return min(tied, key=lambda i: ids[i])


def thompson_select(
    arms: Sequence[ArmPosterior],
    x: ContextVector | np.ndarray,
    rng: np.random.Generator,
) -> tuple[str, bool]:
    """Sample coefficients per feasible arm and pick the best sampled score.

    Returns (scenario id, explore flag); the flag is set when sampling
    disagrees with the posterior-mean ranking.
    """
    if not arms:
        raise BanditError("no feasible arms")
    ids = [a.scenario for a in arms]
    xv = x.as_array() if isinstance(x, ContextVector) else np.asarray(x, dtype=float)
    sampled = np.empty(len(arms))
    mean_scores = np.empty(len(arms))
    for i, arm in enumerate(arms):
        z = rng.standard_normal(len(xv))
        draw = arm.mean + arm.cholesky() @ z
        sampled[i] = float(draw @ xv)
        mean_scores[i] = float(arm.mean @ xv)
    pick = argmax_by_score(sampled, ids)
    exploit = argmax_by_score(mean_scores, ids)
    return ids[pick], pick != exploit


class ArmSet:
    """All arms of one trainee as stacked arrays, for fast batched sampling.

    Same posteriors as :class:`ArmPosterior`, kept contiguous so one session's
    five picks cost a handful of vectorized operations instead of hundreds of
    per-arm draws.
    """

    def __init__(self, scenario_ids: Sequence[str],
                 prior_sigma: float = DEFAULT_PRIOR_SIGMA,
                 noise_var: float = DEFAULT_NOISE_VAR):
        self.ids = list(scenario_ids)
        m = len(self.ids)
        self.means = np.zeros((m, CONTEXT_DIM))
        self.chols = np.tile(np.eye(CONTEXT_DIM) * prior_sigma, (m, 1, 1))
        self.covs = np.tile(np.eye(CONTEXT_DIM) * prior_sigma**2, (m, 1, 1))
        self.n_pulls = np.zeros(m, dtype=np.int64)
        self.noise_var = noise_var

    def sampled_and_mean_scores(
        self, x: np.ndarray, rng: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray]:
        mean_scores = self.means @ x
        u = np.einsum("aji,j->ai", self.chols, x)  # L^T x per arm
        z = rng.standard_normal(u.shape)
        return mean_scores + np.einsum("ai,ai->a", z, u), mean_scores

    def update(self, idx: int, x: np.ndarray, reward: float) -> None:
        precision = np.linalg.inv(self.covs[idx])
        new_precision = precision + np.outer(x, x) / self.noise_var
        cov = np.linalg.inv(new_precision)
        cov = 0.5 * (cov + cov.T)
        self.means[idx] = cov @ (precision @ self.means[idx] + x * reward / self.noise_var)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            cov = cov + np.eye(CONTEXT_DIM) * 1e-9
            chol = np.linalg.cholesky(cov)
        self.covs[idx] = cov
        self.chols[idx] = chol
        self.n_pulls[idx] += 1

    def arm(self, idx: int) -> ArmPosterior:
        return ArmPosterior(
            scenario=self.ids[idx],
            mean=self.means[idx].copy(),
            covariance=self.covs[idx].copy(),
            n_pulls=int(self.n_pulls[idx]),
        )


# ---------------------------------------------------------------------------
# Feasibility filtering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeasibilityFilters:
    prereq_floor: float | None = DEFAULT_PREREQ_FLOOR
    min_subgraph: int | None = None
    max_subgraph: int | None = None


@dataclass
class FeasibleSet:
    ids: list[str]
    fallback: bool = False  # filters emptied the set; validity-only was used


def feasible_actions(
    catalog: ScenarioCatalog,
    state: BeliefState,
    graph: SkillGraph,
    filters: FeasibilityFilters = FeasibilityFilters(),
    means: np.ndarray | None = None,
) -> FeasibleSet:
    """Scenarios passing prerequisite, validity and complexity constraints.

    Prerequisite: mean belief over the activated subgraph's external
    sequential predecessors must reach the floor (vacuous without
    predecessors). Validity: the activation walk succeeds and is non-empty.
    Complexity: subgraph size within the configured band. If everything is
    filtered out, validity-only filtering is used instead and flagged.
    """
    mu = state.means() if means is None else means
    valid: list[str] = []
    passing: list[str] = []
    for scenario in catalog:
        try:
            active = graph.activated_subgraph(scenario)
        except Exception:
            continue
        if not active:
            continue
        valid.append(scenario.id)
        size = len(active)
        if filters.min_subgraph is not None and size < filters.min_subgraph:
            continue
        if filters.max_subgraph is not None and size > filters.max_subgraph:
            continue
        if filters.prereq_floor is not None:
            preds = {
                p
                for w in active
                for p in graph.sequential_predecessors(w)
                if p not in active and p in state.index
            }
            if preds:
                pred_mean = float(np.mean([mu[state.index[p]] for p in preds]))
                if pred_mean < filters.prereq_floor:
                    continue
        passing.append(scenario.id)
    if passing:
        return FeasibleSet(ids=passing)
    return FeasibleSet(ids=valid, fallback=True)


# ---------------------------------------------------------------------------
# Batch selection
# ---------------------------------------------------------------------------


@dataclass
class BatchSelection:
    session: int
    picks: list[tuple[str, float, bool]]        # (scenario, sampled score, explore)
    context_snapshots: list[np.ndarray]
    mean_scores: list[float] = field(default_factory=list)
    short_batch: bool = False


def select_batch(
    arms: ArmSet,
    feasible_ids: Sequence[str],
    context_fn: Callable[[np.ndarray | None], np.ndarray],
    nodes_fn: Callable[[str], np.ndarray],
    k: int,
    rng: np.random.Generator,
    session: int = 0,
) -> BatchSelection:
    """Pick up to ``k`` distinct scenarios sequentially.

    ``context_fn(projected_nodes)`` returns the context with the given node
    indices treated as provisionally covered (None for no projection);
    ``nodes_fn`` maps a scenario to its activated node indices. Underlying
    beliefs are never mutated here.
    """
    id_to_idx = {sid: i for i, sid in enumerate(arms.ids)}
    available = [sid for sid in feasible_ids if sid in id_to_idx]
    picks: list[tuple[str, float, bool]] = []
    snapshots: list[np.ndarray] = []
    pick_means: list[float] = []
    projected: np.ndarray | None = None
    for _ in range(k):
        if not available:
            break
        x = context_fn(projected)
        snapshots.append(x.copy())
        arm_idx = np.array([id_to_idx[sid] for sid in available])
        sampled_all, mean_all = arms.sampled_and_mean_scores(x, rng)
        sampled = sampled_all[arm_idx]
        mean_scores = mean_all[arm_idx]
        pick_i = argmax_by_score(sampled, available)
        exploit_i = argmax_by_score(mean_scores, available)
        sid = available[pick_i]
        picks.append((sid, float(sampled[pick_i]), pick_i != exploit_i))
        pick_means.append(float(mean_scores[pick_i]))
        covered = nodes_fn(sid)
        projected = covered if projected is None else np.union1d(projected, covered)
        available.remove(sid)
    return BatchSelection(
        session=session,
        picks=picks,
        context_snapshots=snapshots,
        mean_scores=pick_means,
        short_batch=len(picks) < k,
    )


def compute_reward(decayed_before: np.ndarray, after: np.ndarray,
                   activated_idx: np.ndarray) -> float:
    """Observed learning gain over the activated skills, against the decayed
    baseline. May be negative."""
    if decayed_before.shape != after.shape:
        raise BanditError("before/after vectors must have equal length")
    if len(activated_idx) == 0:
        return 0.0
    return float(np.sum(after[activated_idx] - decayed_before[activated_idx]))


# ---------------------------------------------------------------------------
# Baseline policies
# ---------------------------------------------------------------------------


def round_robin_policy(catalog: ScenarioCatalog, t: int,
                       k: int = DEFAULT_BATCH_K) -> list[str]:
    """Deterministic cycle over incident types; within a type, catalog order.

    Session ``t`` (1-based) continues exactly where session ``t - 1`` ended.
    """
    if len(catalog) == 0:
        raise BanditError("catalog is empty")
    types = catalog.incident_types()
    by_type: dict[str, list[str]] = {it: [] for it in types}
    for s in catalog:
        by_type[s.incident_type].append(s.id)
    start = (t - 1) * k
    out = []
    for j in range(k):
        p = start + j
        it = types[p % len(types)]
        scens = by_type[it]
        out.append(scens[(p // len(types)) % len(scens)])
    return out


def deficit_driven_policy(
    catalog: ScenarioCatalog,
    state: BeliefState,
    k: int,
    graph: SkillGraph,
    mastery_threshold: float = 0.85,
    means: np.ndarray | None = None,
) -> list[str]:
    """Greedily target the scenario with the lowest mean belief, recomputing
    with projected coverage after each pick. Ties go to the lower scenario id."""
    mu = (state.means() if means is None else means).copy()
    subgraphs: dict[str, np.ndarray] = {}
    for s in catalog:
        idx = np.array(
            sorted(state.index[nid] for nid in graph.activated_subgraph(s)
                   if nid in state.index),
            dtype=np.int64,
        )
        if idx.size:
            subgraphs[s.id] = idx
    picks: list[str] = []
    for _ in range(min(k, len(subgraphs))):
        best_id, best_score = None, None
        for sid in sorted(subgraphs):
            if sid in picks:
                continue
            score = float(mu[subgraphs[sid]].mean())
            if best_score is None or score < best_score:
                best_id, best_score = sid, score
        if best_id is None:
            break
        picks.append(best_id)
        idx = subgraphs[best_id]
        mu[idx] = np.maximum(mu[idx], mastery_threshold)
    return picks
