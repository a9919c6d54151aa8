"""Experiment harness: runs end-to-end training for one policy over a cohort
of simulated trainees, computes the evaluation metrics, and exports CSVs.

Policies: the full adaptive engine, its two ablations (no propagation;
population-average dynamics), and the round-robin / deficit-driven baselines.
During the cold-start phase the adaptive variants observe round-robin
assignments without recommending; the collected rewards still warm-start the
bandit.

The simulator's ground truth is read only through the sanctioned metrics
gate; selection runs purely on observations.
"""

from __future__ import annotations

import concurrent.futures as cf
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .bandit import FeasibilityFilters
from .belief import BeliefState, Observation, Outcome
from .dynamics import DEFAULT_KAPPA, POPULATION_LAMBDA
from .engine import CatalogRuntime, EngineParams, GranularityView, TraineeEngine
from .graph import (
    GraphGenParams,
    Scenario,
    ScenarioCatalog,
    SkillGraph,
    build_scenario_catalog,
    generate_synthetic_graph,
    load_graph,
)
from .similarity import (
    DEFAULT_EPSILON,
    DEFAULT_THRESHOLD,
    HashingEmbedder,
    IndexArrays,
    build_index,
)
from .simulate import archetype, as_sentinel, instantiate_archetype

POLICIES = ("pace_full", "pace_no_prop", "pace_no_dyn", "round_robin",
            "deficit_driven")

DEFAULT_GRAPH_PARAMS = GraphGenParams(
    n_nodes=1053, n_edges=1283, n_incident_types=63,
    condition_fraction=0.15, max_depth=12, seed=7,
)


class ConfigError(ValueError):
    pass


@dataclass
class ArchetypeSpec:
    name: str
    lam: float
    psi: float

    @classmethod
    def named(cls, name: str) -> "ArchetypeSpec":
        a = archetype(name)
        return cls(name=a.name, lam=a.lam, psi=a.psi)


def _default_archetypes() -> list[ArchetypeSpec]:
    return [ArchetypeSpec.named(n)
            for n in ("fast", "moderate", "struggling", "quick_forgetter")]


@dataclass
class ExperimentConfig:
    policy: str = "pace_full"
    granularity: str = "fine"
    n_sessions: int = 50
    batch_k: int = 5
    cold_start: int = 15
    session_hours: float = 2.0
    gap_every: int = 5
    gap_hours: float = 24.0
    archetypes: list[ArchetypeSpec] = field(default_factory=_default_archetypes)
    trainees_per_archetype: int = 10
    seed: int = 0
    graph_path: str | None = None          # takes priority over generator params
    graph_params: GraphGenParams = DEFAULT_GRAPH_PARAMS
    mastery_threshold: float = 0.85
    weak_threshold: float = 0.85
    catalog_size: int = 297
    catalog_seed: int = 0                  # fixture stays fixed across run seeds
    exam_items: int | None = None          # default: one per incident type
    prior_alpha: float = 1.0
    prior_beta: float = 1.0
    kappa: float = DEFAULT_KAPPA
    epsilon: float = DEFAULT_EPSILON
    similarity_threshold: float = DEFAULT_THRESHOLD
    prereq_floor: float | None = 0.25
    min_subgraph: int | None = None
    max_subgraph: int | None = None
    upward_only_propagation: bool = False
    n_jobs: int = 1

    def validate(self) -> None:
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}")
        if self.granularity not in ("fine", "medium", "coarse"):
            raise ConfigError(f"unknown granularity {self.granularity!r}")
        if not 0 < self.cold_start < self.n_sessions:
            raise ConfigError("cold_start must satisfy 0 < N0 < N")
        if not 0.0 < self.mastery_threshold < 1.0:
            raise ConfigError("mastery_threshold must lie in (0, 1)")
        if not 0.0 < self.weak_threshold < 1.0:
            raise ConfigError("weak_threshold must lie in (0, 1)")
        if self.batch_k < 1 or self.trainees_per_archetype < 1:
            raise ConfigError("batch_k and trainees_per_archetype must be >= 1")
        if not self.archetypes:
            raise ConfigError("at least one archetype is required")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["archetypes"] = [asdict(a) for a in self.archetypes]
        doc["graph_params"] = asdict(self.graph_params)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        if "archetypes" in doc:
            specs = []
            for a in doc["archetypes"]:
                if isinstance(a, str):
                    specs.append(ArchetypeSpec.named(a))
                else:
                    specs.append(ArchetypeSpec(name=a["name"], lam=a["lam"],
                                               psi=a["psi"]))
            doc["archetypes"] = specs
        if "graph_params" in doc and isinstance(doc["graph_params"], dict):
            doc["graph_params"] = GraphGenParams(**doc["graph_params"])
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def session_clock(t: int, session_hours: float, gap_every: int,
                  gap_hours: float) -> float:
    """Simulated wall-clock hours at session ``t`` (1-based); a rest gap is
    inserted after every ``gap_every`` sessions."""
    gaps = (t - 1) // gap_every if gap_every > 0 else 0
    return t * session_hours + gaps * gap_hours


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def coverage_at(values: np.ndarray | Sequence[float], threshold: float = 0.85) -> float:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("empty mastery vector")
    return float((arr >= threshold).mean())


def zero_to_hero(session_scores: Sequence[float], threshold: float = 0.85) -> int | None:
    """1-based index of the first session whose best scenario score reaches
    the threshold; None when never observed."""
    for i, s in enumerate(session_scores, start=1):
        if s >= threshold:
            return i
    return None


def approximation_gap(belief_means: np.ndarray, theta_truth: np.ndarray) -> float:
    a = np.asarray(belief_means, dtype=float)
    b = np.asarray(theta_truth, dtype=float)
    if a.shape != b.shape:
        raise ValueError("belief and truth vectors must have equal length")
    return float(np.abs(a - b).mean())


def scenario_score(observations: Sequence[Observation]) -> float:
    """Debrief score: full credit for compliant, half for partial, over the
    applicable (non-N/A) skills."""
    applicable = [o for o in observations if o.outcome is not Outcome.NOT_APPLICABLE]
    if not applicable:
        return 0.0
    credit = sum(
        1.0 if o.outcome is Outcome.COMPLIANT
        else 0.5 if o.outcome is Outcome.PARTIAL
        else 0.0
        for o in applicable
    )
    return credit / len(applicable)


@dataclass
class AggregatedBeliefs:
    """Belief posteriors pooled to a granularity level.

    ``groups`` maps a group id to its pooled (alpha, beta); every member node
    inherits the group posterior in ``node_means``.
    """
    level: str
    node_group: dict[str, str]
    groups: dict[str, tuple[float, float]]

    def group_mean(self, group_id: str) -> float:
        a, b = self.groups[group_id]
        return a / (a + b)

    def node_means(self) -> dict[str, float]:
        return {nid: self.group_mean(g) for nid, g in self.node_group.items()}


def aggregate_beliefs(state: BeliefState, graph: SkillGraph,
                      granularity: str) -> AggregatedBeliefs:
    view = GranularityView(graph, granularity)
    ga, gb = view.pooled_counts(state.alpha, state.beta)
    node_group = {
        nid: view.group_ids[view.group_of[i]]
        for i, nid in enumerate(state.node_ids)
    }
    groups = {gid: (float(ga[k]), float(gb[k]))
              for k, gid in enumerate(view.group_ids)}
    return AggregatedBeliefs(level=granularity, node_group=node_group, groups=groups)


def random_exam(catalog: ScenarioCatalog, n_items: int, seed: int) -> list[Scenario]:
    """Incident-stratified uniform exam sample, deterministic per seed."""
    if n_items > len(catalog):
        raise ValueError("n_items exceeds catalog size")
    rng = np.random.default_rng(seed)
    types = catalog.incident_types()
    by_type: dict[str, list[Scenario]] = {it: [] for it in types}
    for s in catalog:
        by_type[s.incident_type].append(s)
    order = list(types)
    rng.shuffle(order)
    picked: list[Scenario] = []
    cursor = {it: rng.permutation(len(by_type[it])) for it in types}
    used = {it: 0 for it in types}
    pos = 0
    while len(picked) < n_items:
        it = order[pos % len(order)]
        pos += 1
        if used[it] < len(by_type[it]):
            picked.append(by_type[it][cursor[it][used[it]]])
            used[it] += 1
    return picked


# ---------------------------------------------------------------------------
# Fixture
# ---------------------------------------------------------------------------


@dataclass
class Fixture:
    """Graph, catalog and similarity structures shared across runs."""
    graph: SkillGraph
    catalog: ScenarioCatalog
    runtime: CatalogRuntime
    index_arrays: IndexArrays


def build_fixture(config: ExperimentConfig) -> Fixture:
    if config.graph_path:
        graph = load_graph(config.graph_path)
    else:
        graph = generate_synthetic_graph(config.graph_params)
    catalog = build_scenario_catalog(graph, config.catalog_size,
                                     seed=config.catalog_seed)
    runtime = CatalogRuntime(graph, catalog)
    embeddings = HashingEmbedder().vectors_for(graph)
    index = build_index(graph, embeddings, epsilon=config.epsilon,
                        threshold=config.similarity_threshold)
    return Fixture(graph=graph, catalog=catalog, runtime=runtime,
                   index_arrays=IndexArrays(index, graph))


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass
class TraineeResult:
    trainee_id: str
    archetype: str
    series: dict[str, list[float | None]]
    trace: list[dict]
    c10: float | None
    c30: float | None
    c50: float | None
    z2h: int | None
    re: float
    lambda_hat: float
    psi_hat: float


@dataclass
class RunResult:
    config: ExperimentConfig
    trainees: list[TraineeResult]

    def by_archetype(self) -> dict[str, list[TraineeResult]]:
        out: dict[str, list[TraineeResult]] = {}
        for tr in self.trainees:
            out.setdefault(tr.archetype, []).append(tr)
        return out

    def archetype_mean(self, name: str, metric: str) -> float:
        vals = [getattr(tr, metric) for tr in self.by_archetype()[name]]
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else math.nan


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def _engine_params(config: ExperimentConfig) -> EngineParams:
    return EngineParams(
        prior_alpha=config.prior_alpha,
        prior_beta=config.prior_beta,
        kappa=config.kappa,
        mastery_threshold=config.mastery_threshold,
        weak_threshold=config.weak_threshold,
        filters=FeasibilityFilters(
            prereq_floor=config.prereq_floor,
            min_subgraph=config.min_subgraph,
            max_subgraph=config.max_subgraph,
        ),
        n_sessions=config.n_sessions,
        batch_k=config.batch_k,
        upward_only_propagation=config.upward_only_propagation,
        propagate=config.policy != "pace_no_prop",
        adaptive_dynamics=config.policy not in ("pace_no_dyn", "round_robin",
                                                "deficit_driven"),
        granularity=config.granularity,
    )


def _deficit_picks(engine: TraineeEngine, k: int) -> list[str]:
    """Greedy lowest-mean-belief selection over the training scenarios with
    projected coverage between picks."""
    mu = engine.decayed_view_means().copy()
    picks: list[str] = []
    candidates = engine.training_ids
    for _ in range(min(k, len(candidates))):
        best_id, best_score = None, None
        for sid in candidates:
            if sid in picks:
                continue
            idx = engine.runtime.nodes_for(sid)
            if idx.size == 0:
                continue
            score = float(mu[idx].mean())
            if best_score is None or score < best_score:
                best_id, best_score = sid, score
        if best_id is None:
            break
        picks.append(best_id)
        idx = engine.runtime.nodes_for(best_id)
        mu[idx] = np.maximum(mu[idx], engine.params.mastery_threshold)
    return picks


def _round_robin_picks(training_ids: list[str], catalog: ScenarioCatalog,
                       position: int, k: int) -> list[str]:
    """Cycle incident types (sorted), then scenarios within a type in catalog
    order, continuing from an absolute pick position."""
    by_type: dict[str, list[str]] = {}
    allowed = set(training_ids)
    for s in catalog:
        if s.id in allowed:
            by_type.setdefault(s.incident_type, []).append(s.id)
    types = sorted(by_type)
    out = []
    for j in range(k):
        p = position + j
        it = types[p % len(types)]
        scens = by_type[it]
        out.append(scens[(p // len(types)) % len(scens)])
    return out


def run_single_trainee(
    fixture: Fixture,
    config: ExperimentConfig,
    spec: ArchetypeSpec,
    trainee_id: str,
    agent_seed: int,
    response_seed: int,
    engine_seed: int,
    training_ids: list[str],
    exam: list[Scenario],
    sentinel: bool = False,
) -> TraineeResult:
    from .simulate import Archetype

    agent = instantiate_archetype(
        Archetype(spec.name, spec.lam, spec.psi), fixture.graph,
        seed=agent_seed, agent_id=trainee_id, kappa=config.kappa,
    )
    if sentinel:
        agent = as_sentinel(agent)
    response_rng = np.random.default_rng(response_seed)
    params = _engine_params(config)
    engine = TraineeEngine(
        fixture.graph, fixture.runtime, params,
        index_arrays=fixture.index_arrays,
        training_ids=training_ids,
        rng=np.random.default_rng(engine_seed),
    )
    if config.policy in ("round_robin", "deficit_driven"):
        # Baselines carry no decay model; their operative estimate is the raw
        # posterior mean.
        engine.tracker.frozen = True
        engine.tracker._psi0 = 0.0
        engine.tracker._lambda0 = POPULATION_LAMBDA

    pace_variant = config.policy.startswith("pace")
    series: dict[str, list] = {
        "session": [], "delta": [], "sigma_bar_sq": [], "coverage_truth": [],
        "coverage_belief": [], "explore_ratio": [], "reward": [],
        "best_score": [],
    }
    trace: list[dict] = []
    rr_position = 0
    runtime = fixture.runtime

    for t in range(1, config.n_sessions + 1):
        now = session_clock(t, config.session_hours, config.gap_every,
                            config.gap_hours)
        agent.forget(now)
        engine.begin_session(t, now)

        explore_ratio: float | None = None
        if pace_variant and t > config.cold_start:
            selection, _fallback = engine.select_batch(config.batch_k)
            picks = selection.picks
            snapshots = selection.context_snapshots
            if picks:
                explore_ratio = float(np.mean([p[2] for p in picks]))
            for rank, (sid, sampled, explore) in enumerate(picks):
                trace.append({
                    "session": t,
                    "rank": rank,
                    "scenario": sid,
                    "sampled_score": round(sampled, 6),
                    "mean_score": round(selection.mean_scores[rank], 6),
                    "explore": bool(explore),
                    "context": [round(float(v), 6) for v in snapshots[rank]],
                })
        else:
            if config.policy == "deficit_driven":
                ids = _deficit_picks(engine, config.batch_k)
            else:
                ids = _round_robin_picks(training_ids, fixture.catalog,
                                         rr_position, config.batch_k)
                rr_position += len(ids)
            picks = [(sid, math.nan, False) for sid in ids]
            snapshots = engine.contexts_for_picks(ids) if pace_variant else []

        best = 0.0
        for sid, _score, _explore in picks:
            pos = runtime.id_to_pos[sid]
            idx = runtime.v_idx[pos]
            node_ids = runtime.node_ids_by_pos[pos]
            observations = agent.respond_idx(node_ids, idx, now, response_rng)
            engine.ingest_scenario(observations)
            agent.learn_idx(idx, now)
            best = max(best, scenario_score(observations))

        rewards = engine.end_session(picks, snapshots, update_arms=pace_variant)

        operative = engine.decayed_view_means(now)
        with agent.metrics_access() as theta:
            truth_cov = coverage_at(theta, config.mastery_threshold)
            delta = approximation_gap(operative, theta)
        series["session"].append(t)
        series["delta"].append(delta)
        series["sigma_bar_sq"].append(float(engine.view_variances().mean()))
        series["coverage_truth"].append(truth_cov)
        series["coverage_belief"].append(coverage_at(operative,
                                                     config.mastery_threshold))
        series["explore_ratio"].append(explore_ratio)
        series["reward"].append(float(np.sum(rewards)) if rewards else 0.0)
        series["best_score"].append(best)

    def cov_at(session: int) -> float | None:
        if session <= config.n_sessions:
            return series["coverage_truth"][session - 1]
        return None

    dyn = engine.dynamics()
    return TraineeResult(
        trainee_id=trainee_id,
        archetype=spec.name,
        series=series,
        trace=trace,
        c10=cov_at(10),
        c30=cov_at(30),
        c50=cov_at(50),
        z2h=zero_to_hero(series["best_score"], config.mastery_threshold),
        re=agent.exam_score(exam, fixture.graph),
        lambda_hat=dyn.lambda_hat,
        psi_hat=dyn.psi_hat,
    )


def _trainee_tasks(config: ExperimentConfig, catalog: ScenarioCatalog):
    """Deterministic per-trainee seed triplets split from the master seed."""
    ss = np.random.SeedSequence(config.seed)
    n = len(config.archetypes) * config.trainees_per_archetype
    children = ss.spawn(n)
    tasks = []
    k = 0
    for spec in config.archetypes:
        for i in range(config.trainees_per_archetype):
            sub = children[k].spawn(3)
            seeds = [int(s.generate_state(1)[0]) for s in sub]
            tasks.append((spec, f"{spec.name}-{i:02d}", seeds))
            k += 1
    return tasks


def run_training(
    config: ExperimentConfig,
    fixture: Fixture | None = None,
    sentinel: bool = False,
) -> RunResult:
    """Run the configured experiment; deterministic for a fixed config+seed,
    whether trainees execute serially or in parallel."""
    config.validate()
    if fixture is None:
        fixture = build_fixture(config)
    n_items = config.exam_items or len(fixture.catalog.incident_types())
    exam = random_exam(fixture.catalog, n_items, seed=config.seed)
    exam_ids = {s.id for s in exam}
    training_ids = [sid for sid in fixture.runtime.ids if sid not in exam_ids]

    tasks = _trainee_tasks(config, fixture.catalog)
    results: list[TraineeResult] = []
    if config.n_jobs and config.n_jobs > 1:
        with cf.ProcessPoolExecutor(max_workers=config.n_jobs) as pool:
            futures = [
                pool.submit(
                    run_single_trainee, fixture, config, spec, tid,
                    seeds[0], seeds[1], seeds[2], training_ids, exam, sentinel,
                )
                for spec, tid, seeds in tasks
            ]
            results = [f.result() for f in futures]
    else:
        for spec, tid, seeds in tasks:
            results.append(run_single_trainee(
                fixture, config, spec, tid, seeds[0], seeds[1], seeds[2],
                training_ids, exam, sentinel,
            ))
    return RunResult(config=config, trainees=results)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def _fmt(value, percent: bool = False) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if percent:
        value = value * 100.0
    return f"{value:.4f}"


def export_results(result: RunResult, out_dir: str | Path) -> dict[str, Path]:
    """Write metrics.csv, series.csv and summary.csv (4-decimal fixed point;
    coverage and exam scores as percentages; absent values as empty cells)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    policy = result.config.policy

    metrics_path = out / "metrics.csv"
    lines = ["trainee,archetype,policy,c10,c30,c50,z2h,re"]
    for tr in result.trainees:
        z2h = "" if tr.z2h is None else str(tr.z2h)
        lines.append(
            f"{tr.trainee_id},{tr.archetype},{policy},"
            f"{_fmt(tr.c10, percent=True)},{_fmt(tr.c30, percent=True)},"
            f"{_fmt(tr.c50, percent=True)},{z2h},{_fmt(tr.re)}"
        )
    metrics_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    series_path = out / "series.csv"
    lines = ["trainee,archetype,policy,session,delta,sigma_bar_sq,"
             "coverage_truth,coverage_belief,explore_ratio,reward,best_score"]
    for tr in result.trainees:
        s = tr.series
        for i, t in enumerate(s["session"]):
            er = s["explore_ratio"][i]
            lines.append(
                f"{tr.trainee_id},{tr.archetype},{policy},{t},"
                f"{_fmt(s['delta'][i])},{_fmt(s['sigma_bar_sq'][i])},"
                f"{_fmt(s['coverage_truth'][i], percent=True)},"
                f"{_fmt(s['coverage_belief'][i], percent=True)},"
                f"{'' if er is None else _fmt(er)},"
                f"{_fmt(s['reward'][i])},{_fmt(s['best_score'][i])}"
            )
    series_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    summary_path = out / "summary.csv"
    lines = ["archetype,policy,c10_mean,c10_std,c30_mean,c30_std,c50_mean,"
             "c50_std,z2h_mean,z2h_std,z2h_finite,re_mean,re_std"]
    for name, group in result.by_archetype().items():
        def stats(metric: str, percent: bool) -> tuple[str, str]:
            vals = [getattr(tr, metric) for tr in group]
            vals = [v for v in vals if v is not None]
            if not vals:
                return "", ""
            arr = np.asarray(vals, dtype=float)
            return _fmt(float(arr.mean()), percent), _fmt(float(arr.std()), percent)

        c10 = stats("c10", True)
        c30 = stats("c30", True)
        c50 = stats("c50", True)
        z2h = stats("z2h", False)
        re = stats("re", False)
        finite = sum(1 for tr in group if tr.z2h is not None)
        lines.append(
            f"{name},{policy},{c10[0]},{c10[1]},{c30[0]},{c30[1]},"
            f"{c50[0]},{c50[1]},{z2h[0]},{z2h[1]},{finite},{re[0]},{re[1]}"
        )
    summary_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    trace_path = out / "trace.jsonl"
    with open(trace_path, "w", encoding="utf-8") as fh:
        for tr in result.trainees:
            for row in tr.trace:
                fh.write(json.dumps({"trainee": tr.trainee_id, **row},
                                    sort_keys=True) + "\n")

    return {"metrics": metrics_path, "series": series_path,
            "summary": summary_path, "trace": trace_path}
