"""Per-trainee engine: beliefs + dynamics + arm posteriors, fed exclusively
by structured observations.

The engine never sees simulator ground truth. Each session it forecasts
decayed belief means, filters and selects scenarios, ingests the debrief
observations (updating beliefs, harvesting retention pairs, propagating
evidence), and finally credits each pick's arm with the observed gain over
the decayed baseline.

Belief granularity is pluggable: the policy-visible view can pool node
posteriors by incident type or department while the ingestion machinery stays
node-level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import bandit
from .bandit import ArmSet, BatchSelection, FeasibilityFilters
from .belief import BeliefState, Observation, Outcome
from .dynamics import (
    DEFAULT_HORIZON_HOURS,
    DEFAULT_KAPPA,
    DynamicsEstimate,
    DynamicsTracker,
    decay_means,
)
from .graph import ScenarioCatalog, SkillGraph
from .similarity import IndexArrays

RETENTION_MIN_GAP_HOURS = 24.0

GRANULARITIES = ("fine", "medium", "coarse")


class GranularityView:
    """Maps node-level posteriors to the policy-visible belief granularity."""

    def __init__(self, graph: SkillGraph, level: str = "fine"):
        if level not in GRANULARITIES:
            raise ValueError(f"unknown granularity {level!r}")
        self.level = level
        self.n_nodes = len(graph.assessable_ids)
        if level == "fine":
            self.group_of = np.arange(self.n_nodes, dtype=np.int64)
            self.group_ids = list(graph.assessable_ids)
        else:
            departments = graph.departments()
            keys = []
            for nid in graph.assessable_ids:
                primary = sorted(graph.nodes[nid].incident_types)[0]
                keys.append(primary if level == "medium" else departments[primary])
            self.group_ids = sorted(set(keys))
            lookup = {g: i for i, g in enumerate(self.group_ids)}
            self.group_of = np.array([lookup[k] for k in keys], dtype=np.int64)
        self.n_groups = len(self.group_ids)

    def pooled_counts(self, alpha: np.ndarray, beta: np.ndarray
                      ) -> tuple[np.ndarray, np.ndarray]:
        if self.level == "fine":
            return alpha, beta
        ga = np.bincount(self.group_of, weights=alpha, minlength=self.n_groups)
        gb = np.bincount(self.group_of, weights=beta, minlength=self.n_groups)
        return ga, gb

    def node_means(self, alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
        if self.level == "fine":
            return alpha / (alpha + beta)
        ga, gb = self.pooled_counts(alpha, beta)
        return (ga / (ga + gb))[self.group_of]

    def node_variances(self, alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
        ga, gb = self.pooled_counts(alpha, beta)
        n = ga + gb
        var = ga * gb / (n * n * (n + 1.0))
        return var if self.level == "fine" else var[self.group_of]

    def node_anchors(self, last_practiced: np.ndarray) -> np.ndarray:
        """Recency at the tracked granularity: a pooled group counts as
        practiced whenever any member skill was."""
        if self.level == "fine":
            return last_practiced
        latest = np.full(self.n_groups, np.nan)
        np.fmax.at(latest, self.group_of, last_practiced)
        return latest[self.group_of]


class CatalogRuntime:
    """Precomputed activation index arrays for one (graph, catalog) pair."""

    def __init__(self, graph: SkillGraph, catalog: ScenarioCatalog):
        self.graph = graph
        self.catalog = catalog
        self.ids: list[str] = [s.id for s in catalog]
        self.id_to_pos = {sid: i for i, sid in enumerate(self.ids)}
        self.v_idx: list[np.ndarray] = []
        self.pred_idx: list[np.ndarray] = []
        self.sizes = np.zeros(len(self.ids), dtype=np.int64)
        for pos, scenario in enumerate(catalog):
            active = graph.activated_subgraph(scenario)
            idx = np.array(
                sorted(graph.node_index[n] for n in active if n in graph.node_index),
                dtype=np.int64,
            )
            preds = {
                p
                for w in active
                for p in graph.sequential_predecessors(w)
                if p not in active and p in graph.node_index
            }
            self.v_idx.append(idx)
            self.pred_idx.append(
                np.array(sorted(graph.node_index[p] for p in preds), dtype=np.int64)
            )
            self.sizes[pos] = idx.size
        self.node_ids_by_pos = [
            [graph.assessable_ids[i] for i in idx] for idx in self.v_idx
        ]

    def nodes_for(self, scenario_id: str) -> np.ndarray:
        return self.v_idx[self.id_to_pos[scenario_id]]


@dataclass
class EngineParams:
    prior_alpha: float = 1.0
    prior_beta: float = 1.0
    kappa: float = DEFAULT_KAPPA
    mastery_threshold: float = 0.85
    weak_threshold: float = 0.85
    decay_horizon_hours: float = DEFAULT_HORIZON_HOURS
    retention_floor: float = 0.8          # only reassessments of skills held
    retention_min_count: float = 16.0     # pseudo-count needed to trust "held"
    retention_partial_rate: float = 0.15  # expected half-credit mass on a failure
    filters: FeasibilityFilters = field(default_factory=FeasibilityFilters)
    prior_sigma: float = bandit.DEFAULT_PRIOR_SIGMA
    noise_var: float = bandit.DEFAULT_NOISE_VAR
    n_sessions: int = 50
    batch_k: int = 5
    propagate: bool = True
    upward_only_propagation: bool = False
    unassessed_targets_only: bool = True  # propagate only into never-observed skills
    adaptive_dynamics: bool = True     # population constants when False
    granularity: str = "fine"
    keep_observation_log: bool = False


class TraineeEngine:
    """Single-writer per trainee; see module docstring for the session cycle."""

    def __init__(
        self,
        graph: SkillGraph,
        runtime: CatalogRuntime,
        params: EngineParams,
        index_arrays: IndexArrays | None = None,
        training_ids: list[str] | None = None,
        rng: np.random.Generator | None = None,
        arms: ArmSet | None = None,
    ):
        self.graph = graph
        self.runtime = runtime
        self.params = params
        self.index_arrays = index_arrays
        self.rng = rng or np.random.default_rng(0)
        self.view = GranularityView(graph, params.granularity)
        self.state = BeliefState(
            graph.assessable_ids, params.prior_alpha, params.prior_beta,
            keep_log=params.keep_observation_log,
        )
        self.tracker = DynamicsTracker(
            kappa=params.kappa, frozen=not params.adaptive_dynamics,
        )
        ids = sorted(training_ids if training_ids is not None else runtime.ids)
        self.training_ids = ids
        # Arms default to per-trainee posteriors; pass a shared ArmSet for a
        # population-level reward model.
        self.arms = arms if arms is not None else ArmSet(
            ids, prior_sigma=params.prior_sigma, noise_var=params.noise_var)
        self._arm_pos = {sid: i for i, sid in enumerate(self.arms.ids)}
        # Mean at the node's most recent direct observation; the harvest gate
        # uses it rather than a mean later nudged by propagation.
        self._mean_at_practice = self.state.means()
        # Debiased debrief score at the most recent practice: an unbiased
        # instrument for mastery at that moment, free of the posterior's
        # lifetime-average lag, so retention ratios do not fold in belief
        # calibration error.
        self._score_at_practice = np.full(len(self.state.node_ids), np.nan)
        self.session = 0
        self.now = 0.0
        self._baseline_raw: np.ndarray | None = None
        self._baseline_view: np.ndarray | None = None
        self._practiced: set[int] = set()
        # With propagation confined to never-assessed skills, a node whose
        # cached neighbors have all been observed can never propagate again;
        # tracking that saves the dominant share of ingest work late in a run.
        self._never_observed = np.ones(len(self.state.node_ids), dtype=bool)
        if index_arrays is not None:
            self._live_targets = np.array(
                [arr.size for arr in index_arrays.nbr_idx], dtype=np.int64)
        else:
            self._live_targets = np.zeros(len(self.state.node_ids),
                                          dtype=np.int64)

    # -- belief views ---------------------------------------------------------

    def view_means(self) -> np.ndarray:
        return self.view.node_means(self.state.alpha, self.state.beta)

    def view_variances(self) -> np.ndarray:
        return self.view.node_variances(self.state.alpha, self.state.beta)

    def view_anchors(self) -> np.ndarray:
        return self.view.node_anchors(self.state.last_practiced)

    def decayed_view_means(self, now: float | None = None) -> np.ndarray:
        return decay_means(
            self.view_means(), self.view_anchors(),
            self.now if now is None else now,
            self.tracker.psi_hat, self.params.kappa,
        )

    def dynamics(self) -> DynamicsEstimate:
        return self.tracker.estimate()

    # -- context ----------------------------------------------------------------

    def context_vector(self, projected_idx: np.ndarray | None = None) -> np.ndarray:
        """Seven-component selection context from the decayed belief view.

        Projected nodes are treated as provisionally covered: their means are
        clamped to the mastery threshold and their decay anchor moved to now.
        """
        p = self.params
        means = self.decayed_view_means()
        anchors = self.view_anchors()
        if projected_idx is not None and projected_idx.size:
            means = means.copy()
            means[projected_idx] = np.maximum(means[projected_idx],
                                              p.mastery_threshold)
            anchors = anchors.copy()
            anchors[projected_idx] = self.now
        later = decay_means(means, anchors, self.now + p.decay_horizon_hours,
                            self.tracker.psi_hat, p.kappa)
        d = int(np.sum((means >= p.mastery_threshold) & (later < p.mastery_threshold)))
        weak = means[means < p.weak_threshold]
        return np.array([
            float(self.view_variances().mean()),
            float((means >= p.mastery_threshold).mean()),
            self.tracker.lambda_hat,
            self.tracker.psi_hat,
            float(weak.mean()) if weak.size else 0.0,
            d / max(self.view.n_nodes, 1),
            self.session / max(p.n_sessions, 1),
        ])

    # -- session lifecycle ----------------------------------------------------------

    def begin_session(self, session: int, now: float) -> None:
        self.session = session
        self.now = now
        raw = self.state.means()
        self._baseline_raw = decay_means(
            raw, self.state.last_practiced, now,
            self.tracker.psi_hat, self.params.kappa,
        )
        self._baseline_view = decay_means(
            self.view_means(), self.view_anchors(), now,
            self.tracker.psi_hat, self.params.kappa,
        )
        self._practiced = set()

    def feasible_training_ids(self) -> tuple[list[str], bool]:
        """Training scenarios passing the filters on the decayed view."""
        p = self.params
        means = self.decayed_view_means()
        passing: list[str] = []
        valid: list[str] = []
        for sid in self.training_ids:
            pos = self.runtime.id_to_pos[sid]
            size = int(self.runtime.sizes[pos])
            if size == 0:
                continue
            valid.append(sid)
            if p.filters.min_subgraph is not None and size < p.filters.min_subgraph:
                continue
            if p.filters.max_subgraph is not None and size > p.filters.max_subgraph:
                continue
            if p.filters.prereq_floor is not None:
                preds = self.runtime.pred_idx[pos]
                if preds.size and float(means[preds].mean()) < p.filters.prereq_floor:
                    continue
            passing.append(sid)
        if passing:
            return passing, False
        return valid, True

    def select_batch(self, k: int | None = None) -> tuple[BatchSelection, bool]:
        feasible, fallback = self.feasible_training_ids()
        selection = bandit.select_batch(
            self.arms,
            feasible,
            context_fn=lambda proj: self.context_vector(proj),
            nodes_fn=self.runtime.nodes_for,
            k=k or self.params.batch_k,
            rng=self.rng,
            session=self.session,
        )
        return selection, fallback

    def contexts_for_picks(self, pick_ids: list[str]) -> list[np.ndarray]:
        """Refreshed context per pick for an externally chosen batch, with the
        same projected-coverage treatment the sampler applies."""
        snapshots = []
        projected: np.ndarray | None = None
        for sid in pick_ids:
            snapshots.append(self.context_vector(projected))
            nodes = self.runtime.nodes_for(sid)
            projected = nodes if projected is None else np.union1d(projected, nodes)
        return snapshots

    # -- ingestion -----------------------------------------------------------------

    def ingest_observation(self, obs: Observation) -> None:
        """Retention harvest, belief update, then one-hop propagation."""
        i = self.state.index.get(obs.node)
        if i is None:
            raise KeyError(obs.node)
        if obs.outcome is not Outcome.NOT_APPLICABLE:
            lp = self.state.last_practiced[i]
            if not np.isnan(lp):
                gap = obs.timestamp - lp
                before = float(self._mean_at_practice[i])
                # Restrict to skills the belief confidently held at last
                # practice; a barely-observed high mean is mostly prior luck
                # and would masquerade as steep forgetting.
                before_score = self._score_at_practice[i]
                if (gap >= RETENTION_MIN_GAP_HOURS
                        and before >= self.params.retention_floor
                        and not np.isnan(before_score)
                        and self.state.alpha[i] + self.state.beta[i]
                        >= self.params.retention_min_count):
                    self.tracker.record_retention(
                        theta_before=float(before_score),
                        theta_after=_reassessment_estimate(obs, self.params),
                        gap_hours=float(gap),
                    )
        self.state.update(obs)
        if obs.outcome is not Outcome.NOT_APPLICABLE:
            self._mean_at_practice[i] = self.state.alpha[i] / (
                self.state.alpha[i] + self.state.beta[i]
            )
            self._score_at_practice[i] = _reassessment_estimate(obs, self.params)
            self._practiced.add(i)
            if self._never_observed[i]:
                self._never_observed[i] = False
                if self.index_arrays is not None:
                    self._live_targets[self.index_arrays.nbr_idx[i]] -= 1
            if (self.params.propagate and self.index_arrays is not None
                    and (not self.params.unassessed_targets_only
                         or self._live_targets[i] > 0)):
                cap = (self.state.prior_alpha + self.state.prior_beta + 1e-9
                       if self.params.unassessed_targets_only else None)
                self.state.propagate(
                    self.index_arrays, obs.node,
                    upward_only=self.params.upward_only_propagation,
                    target_max_count=cap,
                )

    def ingest_scenario(self, observations: list[Observation]) -> None:
        for obs in observations:
            self.ingest_observation(obs)

    def apply_debrief(
        self,
        scenario_id: str,
        observations: list[Observation],
        now: float,
        session: int,
    ) -> float:
        """Interactive-path ingestion: one scenario's debrief at a time.

        Computes the decayed baseline at the debrief instant, ingests the
        observations, records practice gains, and credits the scenario's arm
        with the observed gain. Returns the reward.
        """
        self.begin_session(session, now)
        x = self.context_vector()
        self.ingest_scenario(observations)
        rewards = self.end_session([(scenario_id, 0.0, False)], [x])
        return rewards[0]

    def end_session(
        self,
        picks: list[tuple[str, float, bool]],
        snapshots: list[np.ndarray],
        update_arms: bool = True,
    ) -> list[float]:
        """Record practice gains and credit each pick's arm with its reward.

        Rewards compare end-of-session means against the decayed
        session-start baseline over each pick's activated subgraph.
        """
        assert self._baseline_raw is not None and self._baseline_view is not None
        end_raw = self.state.means()
        if self._practiced:
            idx = np.fromiter(self._practiced, dtype=np.int64)
            self.tracker.record_gains(end_raw[idx] - self._baseline_raw[idx])
        end_view = self.view.node_means(self.state.alpha, self.state.beta)
        rewards: list[float] = []
        for pos, (sid, _score, _explore) in enumerate(picks):
            nodes = self.runtime.nodes_for(sid)
            r = bandit.compute_reward(self._baseline_view, end_view, nodes)
            rewards.append(r)
            if update_arms:
                self.arms.update(self._arm_pos[sid], snapshots[pos], r)
        return rewards


def _reassessment_estimate(obs: Observation, params: EngineParams) -> float:
    """Mastery level implied by a single reassessment outcome.

    The debrief score (compliant 1, partial 0.5, violation 0) overstates low
    mastery because failed skills still earn partial credit at the channel's
    partial rate; inverting that calibration makes the estimate unbiased in
    aggregate, which is all the bucketed retention fit needs. Individual
    values may fall outside [0, 1].
    """
    if obs.outcome is Outcome.COMPLIANT:
        score = 1.0
    elif obs.outcome is Outcome.PARTIAL:
        score = 0.5
    else:
        score = 0.0
    p = params.retention_partial_rate
    return (score - p) / (1.0 - p)
