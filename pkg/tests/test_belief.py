import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pace.belief import (
    BeliefError,
    BeliefState,
    ErrorType,
    Observation,
    Outcome,
    belief_summary,
    evidence_weights,
    format_timestamp,
    init_beliefs,
    observation_from_dict,
    observation_to_json,
    parse_timestamp,
    propagate,
    read_observation_log,
    replay_log,
    update_belief,
)
from pace.similarity import IndexArrays, SimilarityIndex


def obs(node, outcome, error=None, prompted=False, ts=0.0):
    return Observation(node=node, outcome=outcome, error_type=error,
                       prompted=prompted, timestamp=ts)


def two_node_arrays(phi=0.8):
    from pace.graph import EdgeKind, NodeKind, SkillEdge, SkillGraph, SkillNode
    g = SkillGraph(
        [SkillNode("a", NodeKind.QUESTION, "a text", frozenset({"i"}), 0),
         SkillNode("b", NodeKind.QUESTION, "b text", frozenset({"i"}), 1)],
        [SkillEdge("a", "b", EdgeKind.SEQUENTIAL)],
    )
    index = SimilarityIndex(epsilon=2.0, threshold=0.5)
    index.insert("a", "b", phi)
    index.finalize()
    return g, IndexArrays(index, g)


class TestInit:
    def test_uniform_prior_moments(self, toy_graph):
        state = init_beliefs(toy_graph)
        summary = belief_summary(state)
        assert np.allclose(state.means(), 0.5)
        assert summary.mean_variance == pytest.approx(1.0 / 12.0)

    def test_stronger_prior_moments(self, toy_graph):
        state = init_beliefs(toy_graph, 2.0, 2.0)
        assert np.allclose(state.means(), 0.5)
        assert state.variances()[0] == pytest.approx(0.05)

    def test_no_assessable_nodes_rejected(self):
        with pytest.raises(BeliefError):
            BeliefState([])

    def test_nonpositive_prior_rejected(self, toy_graph):
        with pytest.raises(BeliefError):
            init_beliefs(toy_graph, 0.0, 1.0)


class TestEvidenceWeights:
    def test_prompted_success_half(self):
        w_plus, _ = evidence_weights(Outcome.COMPLIANT, None, True)
        assert w_plus == 0.5

    def test_misconception_amplified(self):
        _, w_minus = evidence_weights(Outcome.VIOLATION,
                                      ErrorType.MISCONCEPTION, False)
        assert w_minus == 1.5

    def test_slip_attenuated(self):
        _, w_minus = evidence_weights(Outcome.VIOLATION, ErrorType.SLIP, False)
        assert w_minus == 0.5

    def test_omission_base_weight(self):
        _, w_minus = evidence_weights(Outcome.VIOLATION, ErrorType.OMISSION,
                                      False)
        assert w_minus == 1.0

    def test_base_weights(self):
        w_plus, w_minus = evidence_weights(Outcome.COMPLIANT, None, False)
        assert (w_plus, w_minus) == (1.0, 1.0)


class TestUpdate:
    def test_unprompted_compliant(self, toy_graph):
        state = init_beliefs(toy_graph)
        update_belief(state, obs("q1", Outcome.COMPLIANT, ts=3.0))
        b = state.get("q1")
        assert (b.alpha, b.beta) == (2.0, 1.0)
        assert b.mean == pytest.approx(2.0 / 3.0)
        assert b.last_practiced == 3.0

    def test_prompted_compliant(self, toy_graph):
        state = init_beliefs(toy_graph)
        update_belief(state, obs("q1", Outcome.COMPLIANT, prompted=True))
        b = state.get("q1")
        assert (b.alpha, b.beta) == (1.5, 1.0)
        assert b.mean == pytest.approx(0.6)

    def test_misconception_violation(self, toy_graph):
        state = init_beliefs(toy_graph, 2.0, 2.0)
        update_belief(state, obs("q1", Outcome.VIOLATION,
                                 ErrorType.MISCONCEPTION))
        b = state.get("q1")
        assert (b.alpha, b.beta) == (2.0, 3.5)
        assert b.mean == pytest.approx(2.0 / 5.5)

    def test_not_applicable_is_noop(self, toy_graph):
        state = init_beliefs(toy_graph)
        update_belief(state, obs("q1", Outcome.NOT_APPLICABLE, ts=9.0))
        b = state.get("q1")
        assert (b.alpha, b.beta) == (1.0, 1.0)
        assert b.last_practiced is None
        assert len(state.log) == 1

    def test_partial_adds_both_sides(self, toy_graph):
        state = init_beliefs(toy_graph)
        update_belief(state, obs("q1", Outcome.PARTIAL, ErrorType.SLIP,
                                 prompted=True))
        b = state.get("q1")
        assert (b.alpha, b.beta) == (1.5, 1.5)

    def test_unknown_node(self, toy_graph):
        state = init_beliefs(toy_graph)
        with pytest.raises(BeliefError, match="zz"):
            update_belief(state, obs("zz", Outcome.COMPLIANT))

    def test_error_type_forbidden_on_compliant(self):
        with pytest.raises(BeliefError):
            obs("q1", Outcome.COMPLIANT, ErrorType.SLIP)

    def test_counts_never_decrease(self, toy_graph):
        state = init_beliefs(toy_graph)
        rng = np.random.default_rng(0)
        outcomes = [Outcome.COMPLIANT, Outcome.VIOLATION, Outcome.PARTIAL,
                    Outcome.NOT_APPLICABLE]
        total = state.alpha.sum() + state.beta.sum()
        for k in range(200):
            o = outcomes[rng.integers(4)]
            err = None
            if o in (Outcome.VIOLATION, Outcome.PARTIAL):
                err = list(ErrorType)[rng.integers(3)]
            update_belief(state, obs("q1", o, err, ts=float(k)))
            new_total = state.alpha.sum() + state.beta.sum()
            assert new_total >= total - 1e-12
            total = new_total


class TestPropagate:
    def test_mean_blend_and_count_preservation(self):
        g, arrays = two_node_arrays(phi=0.8)
        state = BeliefState(g.assessable_ids)
        state.alpha[0], state.beta[0] = 9.0, 1.0  # mean 0.9 on "a"
        propagate(state, arrays, "a")
        b = state.get("b")
        assert b.mean == pytest.approx(0.61, abs=1e-12)
        assert (b.alpha, b.beta) == (pytest.approx(1.22), pytest.approx(0.78))
        assert b.alpha + b.beta == pytest.approx(2.0, abs=1e-12)
        # observed node untouched
        assert state.get("a").mean == pytest.approx(0.9)

    def test_no_neighbors_noop(self, toy_graph):
        index = SimilarityIndex(epsilon=2.0, threshold=0.5)
        arrays = IndexArrays(index, toy_graph)
        state = init_beliefs(toy_graph)
        before = state.means().copy()
        propagate(state, arrays, "q1")
        assert np.array_equal(state.means(), before)

    def test_fixed_point(self):
        g, arrays = two_node_arrays(phi=0.5)
        state = BeliefState(g.assessable_ids)
        # neighbor mean exactly phi * mu_v: 0.5 * 0.8 = 0.4
        state.alpha[0], state.beta[0] = 8.0, 2.0
        state.alpha[1], state.beta[1] = 0.8, 1.2
        propagate(state, arrays, "a")
        assert state.get("b").mean == pytest.approx(0.4, abs=1e-12)

    def test_upward_only_flag(self):
        g, arrays = two_node_arrays(phi=0.5)
        state = BeliefState(g.assessable_ids)
        state.alpha[0], state.beta[0] = 1.0, 9.0   # low source
        state.alpha[1], state.beta[1] = 9.0, 1.0   # high neighbor
        propagate(state, arrays, "a", upward_only=True)
        assert state.get("b").mean == pytest.approx(0.9)

    def test_target_count_cap(self):
        g, arrays = two_node_arrays(phi=0.5)
        state = BeliefState(g.assessable_ids)
        state.alpha[1], state.beta[1] = 5.0, 5.0   # heavily assessed neighbor
        state.alpha[0], state.beta[0] = 9.0, 1.0
        propagate(state, arrays, "a", target_max_count=2.0)
        assert state.get("b").mean == pytest.approx(0.5)

    @given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(0.0, 1.0),
           st.floats(0.5, 40.0))
    @settings(max_examples=100, deadline=None)
    def test_blend_stays_in_interval(self, mu_src, mu_nbr, phi, total):
        g, arrays = two_node_arrays(phi=phi if phi > 0 else 0.01)
        state = BeliefState(g.assessable_ids)
        state.alpha[0], state.beta[0] = mu_src * 10, (1 - mu_src) * 10
        state.alpha[1], state.beta[1] = mu_nbr * total, (1 - mu_nbr) * total
        propagate(state, arrays, "a")
        new = state.get("b")
        lo = min(mu_nbr, arrays.nbr_phi[0][0] * mu_src)
        hi = max(mu_nbr, arrays.nbr_phi[0][0] * mu_src)
        assert lo - 1e-9 <= new.mean <= hi + 1e-9
        assert new.alpha + new.beta == pytest.approx(total, abs=1e-9)


class TestSummary:
    def test_uniform_prior_summary(self, toy_graph):
        state = init_beliefs(toy_graph)
        s = belief_summary(state)
        assert s.mean_variance == pytest.approx(1.0 / 12.0)
        assert s.coverage == 0.0
        assert s.weak_mean == pytest.approx(0.5)

    def test_all_mastered(self, toy_graph):
        state = init_beliefs(toy_graph)
        state.alpha[:] = 99.0
        state.beta[:] = 1.0
        s = belief_summary(state)
        assert s.coverage == 1.0
        assert s.weak_mean == 0.0

    def test_half_mastered_counting(self, chain_graph):
        state = BeliefState(chain_graph.assessable_ids[:4])
        for i, mu in enumerate([0.9, 0.8, 0.86, 0.84]):
            state.alpha[i] = mu * 100
            state.beta[i] = (1 - mu) * 100
        s = state.summary(mastery_threshold=0.85)
        assert s.coverage == pytest.approx(0.5)


class TestReplay:
    def test_replay_reproduces_state(self, small_graph):
        from pace.similarity import HashingEmbedder, build_index
        emb = HashingEmbedder().vectors_for(small_graph)
        arrays = IndexArrays(build_index(small_graph, emb, threshold=0.6),
                             small_graph)
        state = init_beliefs(small_graph)
        rng = np.random.default_rng(7)
        ids = small_graph.assessable_ids
        for k in range(300):
            node = ids[rng.integers(len(ids))]
            roll = rng.random()
            if roll < 0.5:
                o = obs(node, Outcome.COMPLIANT, prompted=rng.random() < 0.1,
                        ts=float(k))
            elif roll < 0.8:
                o = obs(node, Outcome.VIOLATION,
                        list(ErrorType)[rng.integers(3)], ts=float(k))
            elif roll < 0.9:
                o = obs(node, Outcome.PARTIAL,
                        list(ErrorType)[rng.integers(3)], ts=float(k))
            else:
                o = obs(node, Outcome.NOT_APPLICABLE, ts=float(k))
            state.update(o)
            if o.outcome is not Outcome.NOT_APPLICABLE:
                state.propagate(arrays, node)
        again = replay_log(ids, state.log, arrays=arrays)
        assert np.allclose(again.alpha, state.alpha, atol=1e-12)
        assert np.allclose(again.beta, state.beta, atol=1e-12)
        lp_a = np.nan_to_num(again.last_practiced, nan=-1.0)
        lp_b = np.nan_to_num(state.last_practiced, nan=-1.0)
        assert np.array_equal(lp_a, lp_b)


class TestBoundaryFormats:
    def test_timestamp_roundtrip(self):
        hours = 123456.789
        assert parse_timestamp(format_timestamp(hours)) == pytest.approx(
            hours, abs=1e-6)

    def test_observation_jsonl_roundtrip(self, tmp_path):
        entries = [
            obs("q1", Outcome.COMPLIANT, prompted=True, ts=5.0),
            obs("q2", Outcome.VIOLATION, ErrorType.SLIP, ts=6.5),
            obs("q1", Outcome.NOT_APPLICABLE, ts=7.0),
        ]
        path = tmp_path / "log.jsonl"
        path.write_text("\n".join(observation_to_json(o) for o in entries))
        again = read_observation_log(path)
        assert [o.node for o in again] == ["q1", "q2", "q1"]
        assert again[0].prompted is True
        assert again[1].error_type is ErrorType.SLIP
        assert again[2].outcome is Outcome.NOT_APPLICABLE
        assert again[1].timestamp == pytest.approx(6.5, abs=1e-6)

    def test_bad_line_names_location(self, tmp_path):
        path = tmp_path / "log.jsonl"
        path.write_text('{"node": "q1"}')
        with pytest.raises(BeliefError, match=":1:"):
            read_observation_log(path)

    def test_csv_export(self, tmp_path, toy_graph):
        state = init_beliefs(toy_graph)
        update_belief(state, obs("q1", Outcome.COMPLIANT, ts=4.0))
        path = tmp_path / "beliefs.csv"
        state.export_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "node,alpha,beta,mean,variance,last_practiced"
        assert len(lines) == len(toy_graph.assessable_ids) + 1
        q1 = next(l for l in lines if l.startswith("q1,"))
        assert q1.split(",")[1] == "2.000000"
