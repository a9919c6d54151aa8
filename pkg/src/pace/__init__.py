"""Adaptive curriculum engine for procedural-skill training over a skill
graph: probabilistic mastery tracking, learning/forgetting dynamics, and
Thompson-sampling scenario selection, with a trainee simulator, an experiment
harness, and a trainer co-pilot service."""

from .graph import (
    EdgeKind,
    GraphGenParams,
    NodeKind,
    Scenario,
    ScenarioCatalog,
    SkillEdge,
    SkillGraph,
    SkillNode,
    activated_subgraph,
    build_scenario_catalog,
    generate_synthetic_graph,
    load_graph,
    normalized_depth,
)
from .similarity import (
    HashingEmbedder,
    SimilarityIndex,
    build_index,
    embed_node,
    pair_similarity,
)
from .belief import (
    BeliefState,
    ErrorType,
    Observation,
    Outcome,
    belief_summary,
    evidence_weights,
    init_beliefs,
    propagate,
    update_belief,
)
from .dynamics import (
    DynamicsEstimate,
    PracticeGain,
    RetentionPair,
    apply_forgetting,
    decay_beliefs,
    decay_risk_count,
    estimate_lambda,
    estimate_psi,
)
from .bandit import (
    ArmPosterior,
    BatchSelection,
    ContextVector,
    build_context,
    compute_reward,
    deficit_driven_policy,
    feasible_actions,
    round_robin_policy,
    select_batch,
    thompson_select,
    update_arm,
)
from .simulate import Archetype, TraineeAgent, instantiate_archetype
from .harness import (
    ExperimentConfig,
    RunResult,
    aggregate_beliefs,
    approximation_gap,
    coverage_at,
    export_results,
    random_exam,
    run_training,
    zero_to_hero,
)

__version__ = "0.1.0"
