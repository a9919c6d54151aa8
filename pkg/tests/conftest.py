import numpy as np
import pytest

from pace.graph import (
    EdgeKind,
    GraphGenParams,
    NodeKind,
    SkillEdge,
    SkillGraph,
    SkillNode,
    build_scenario_catalog,
    generate_synthetic_graph,
)
from pace.similarity import HashingEmbedder, build_index

DEFAULT_PARAMS = GraphGenParams(
    n_nodes=1053, n_edges=1283, n_incident_types=63,
    condition_fraction=0.15, max_depth=12, seed=7,
)

SMALL_PARAMS = GraphGenParams(
    n_nodes=160, n_edges=196, n_incident_types=9,
    condition_fraction=0.15, max_depth=8, seed=11,
)


@pytest.fixture(scope="session")
def default_graph():
    return generate_synthetic_graph(DEFAULT_PARAMS)


@pytest.fixture(scope="session")
def default_catalog(default_graph):
    return build_scenario_catalog(default_graph, 297, seed=0)


@pytest.fixture(scope="session")
def default_embeddings(default_graph):
    return HashingEmbedder().vectors_for(default_graph)


@pytest.fixture(scope="session")
def default_index(default_graph, default_embeddings):
    return build_index(default_graph, default_embeddings, epsilon=2.0,
                       threshold=0.6)


@pytest.fixture(scope="session")
def small_graph():
    return generate_synthetic_graph(SMALL_PARAMS)


@pytest.fixture(scope="session")
def small_catalog(small_graph):
    return build_scenario_catalog(small_graph, 45, seed=3)


def toy_nodes_edges():
    """q1 establishes c1; c1 entails q2: the minimal gated chain."""
    nodes = [
        SkillNode("q1", NodeKind.QUESTION, "confirm caller location",
                  frozenset({"incA"}), 0),
        SkillNode("c1", NodeKind.CONDITION, "injuries reported",
                  frozenset({"incA"}), 1),
        SkillNode("q2", NodeKind.QUESTION, "assess injury status",
                  frozenset({"incA"}), 2),
    ]
    edges = [
        SkillEdge("q1", "c1", EdgeKind.IMPLICATION),
        SkillEdge("c1", "q2", EdgeKind.ENTAILMENT),
    ]
    return nodes, edges


@pytest.fixture()
def toy_graph():
    nodes, edges = toy_nodes_edges()
    return SkillGraph(nodes, edges)


@pytest.fixture()
def chain_graph():
    """Five-node sequential chain in one incident."""
    nodes = [
        SkillNode(f"n{i}", NodeKind.QUESTION, f"step number {i} of drill",
                  frozenset({"inc"}), i)
        for i in range(5)
    ]
    edges = [SkillEdge(f"n{i}", f"n{i+1}", EdgeKind.SEQUENTIAL)
             for i in range(4)]
    return SkillGraph(nodes, edges)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance criterion lines after the run, uncaptured."""
    try:
        from test_acceptance import CRITERION_LINES
    except ImportError:
        return
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for _num, line in sorted(CRITERION_LINES):
            terminalreporter.write_line(line)
