from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socialsim.dynamics import (
    Adjacency,
    EvolutionMode,
    classify_evolution,
    dynamics_step,
    epsilon_neighborhood,
    hybrid_attitude_update,
    neighborhood_attitudes,
    rule_attitude,
    signal_valences,
)
from socialsim.errors import IndexOutOfRange, SeriesTooShort
from socialsim.model import CrowdAgentState, Intervention, InterventionKind, InterventionVector, Reply, ReplyTone
from socialsim.providers import PolicyResponse, Role, RuleBasedProvider, ScriptedProvider


def brute_neighborhood(i, x, adj, eps):
    """Straight from the definition, one pair at a time."""
    if eps == 0:
        return {i}
    out = {i}
    for j in range(len(x)):
        if j != i and adj[i][j] and abs(x[i] - x[j]) <= eps:
            out.add(j)
    return out


def brute_step(x, adj, eps):
    out = []
    for i in range(len(x)):
        nb = sorted(brute_neighborhood(i, x, adj, eps))
        out.append(x[i] if eps == 0 else sum(x[j] for j in nb) / len(nb))
    return out


def test_full_openness_includes_everyone():
    assert epsilon_neighborhood(0, [0.2, 0.5, 0.9], None, 1.0) == {0, 1, 2}


def test_zero_openness_is_self_only_even_with_equal_peers():
    assert epsilon_neighborhood(0, [0.4, 0.4, 0.9], None, 0.0) == {0}


def test_threshold_example():
    assert epsilon_neighborhood(0, [0.1, 0.3, 0.8], None, 0.25) == {0, 1}


def test_self_always_member():
    adj = Adjacency.from_edges(3, [])
    assert epsilon_neighborhood(1, [0.1, 0.11, 0.12], adj, 0.5) == {1}


def test_adjacency_restricts_neighborhood():
    adj = Adjacency.from_edges(3, [(0, 1)])
    assert epsilon_neighborhood(0, [0.5, 0.5, 0.5], adj, 0.5) == {0, 1}
    assert epsilon_neighborhood(2, [0.5, 0.5, 0.5], adj, 0.5) == {2}


def test_index_out_of_range():
    with pytest.raises(IndexOutOfRange):
        epsilon_neighborhood(3, [0.1, 0.2], None, 0.5)


def test_uniform_mean_at_full_openness():
    np.testing.assert_allclose(dynamics_step([0.0, 0.5, 1.0], None, 1.0), [0.5, 0.5, 0.5], atol=1e-15)


def test_identity_at_zero_openness():
    x = [0.3, 0.3, 0.9]
    assert dynamics_step(x, None, 0.0).tolist() == x


def test_bounded_confidence_clusters():
    out = dynamics_step([0.1, 0.2, 0.8, 0.9], None, 0.3)
    np.testing.assert_allclose(out, [0.15, 0.15, 0.85, 0.85], atol=1e-12)


def test_opinions_must_be_normalized():
    with pytest.raises(ValueError):
        dynamics_step([-0.5, 0.5], None, 0.5)


opinion_vec = st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=12)


@settings(max_examples=200, deadline=None)
@given(opinion_vec)
def test_limit_cases(x):
    assert dynamics_step(x, None, 0.0).tolist() == x
    full = dynamics_step(x, None, 1.0)
    assert np.all(np.abs(full - np.mean(x)) <= 1e-12)


@settings(max_examples=200, deadline=None)
@given(opinion_vec, st.floats(0, 1))
def test_convex_hull(x, eps):
    out = dynamics_step(x, None, eps)
    assert out.min() >= min(x) - 1e-12 and out.max() <= max(x) + 1e-12


@settings(max_examples=100, deadline=None)
@given(opinion_vec, st.randoms(use_true_random=False))
def test_permutation_equivariance_at_full_openness(x, rnd):
    perm = list(range(len(x)))
    rnd.shuffle(perm)
    out = dynamics_step(x, None, 1.0)
    out_p = dynamics_step([x[p] for p in perm], None, 1.0)
    np.testing.assert_allclose(out_p, out[perm], atol=1e-12)


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.floats(0, 1, allow_nan=False), min_size=4, max_size=4),
    st.floats(0, 1),
    st.lists(st.booleans(), min_size=6, max_size=6),
)
def test_four_agent_brute_force_oracle(x, eps, edge_bits):
    pairs = list(itertools.combinations(range(4), 2))
    edges = [p for p, on in zip(pairs, edge_bits) if on]
    adj = Adjacency.from_edges(4, edges)
    matrix = [[adj(i, j) for j in range(4)] for i in range(4)]
    for i in range(4):
        assert epsilon_neighborhood(i, x, adj, eps) == brute_neighborhood(i, x, matrix, eps)
    np.testing.assert_allclose(dynamics_step(x, adj, eps), brute_step(x, matrix, eps), atol=1e-12)


def _agent(att=0.0):
    return CrowdAgentState("a", "group", 100, att, 0.5, cognitive_state="calm")


def test_plain_mean_without_signals():
    assert hybrid_attitude_update(_agent(), (), InterventionVector(), [0.2, 0.4], ScriptedProvider()) == pytest.approx(0.3)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=10))
def test_no_signal_branch_is_the_mean(nb):
    got = hybrid_attitude_update(_agent(), (), InterventionVector(), nb, ScriptedProvider())
    assert abs(got - sum(nb) / len(nb)) <= 1e-12


def test_intervention_routes_through_policy():
    policy = ScriptedProvider({(Role.CROWD_ATTITUDE, None, None): {"updated_opinion": 0.9}})
    iv = InterventionVector((Intervention("media", InterventionKind.PUBLICITY, 0.2),))
    assert hybrid_attitude_update(_agent(), (), iv, [0.0], policy) == 0.9


def test_discussion_alone_routes_through_policy():
    policy = ScriptedProvider({(Role.CROWD_ATTITUDE, None, "a"): {"updated_opinion": -0.4}})
    reply = (Reply("b", "a", "no", ReplyTone.OPPOSING),)
    assert hybrid_attitude_update(_agent(), reply, InterventionVector(), [0.0], policy) == -0.4


def test_policy_answer_clamped():
    class Loud:
        def respond(self, request):
            return PolicyResponse(Role.CROWD_ATTITUDE, updated_opinion=1.0)

    iv = InterventionVector((Intervention("m", InterventionKind.RESPONSE, 1.0),))
    assert hybrid_attitude_update(_agent(0.9), (), iv, [0.0], Loud()) == 1.0


def test_rule_policy_moves_half_way_to_valence():
    iv = InterventionVector((Intervention("m", InterventionKind.PUBLICITY, 1.0),))
    assert hybrid_attitude_update(_agent(0.0), (), iv, [0.0], RuleBasedProvider()) == pytest.approx(0.5)


def test_rule_attitude_without_signals_is_identity():
    assert rule_attitude(0.3, [], 0.5) == 0.3
    assert rule_attitude(0.9, [1.0, 1.0], 1.0) == 1.0


def test_reply_valence_is_tone_times_sender():
    vals = signal_valences(
        [{"valence": 0.5}],
        [
            {"reply_tone": "supportive", "sender_attitude": 0.4},
            {"reply_tone": "opposing", "sender_attitude": 0.4},
            {"reply_tone": "neutral", "sender_attitude": 0.9},
        ],
    )
    assert vals == [0.5, 0.4, -0.4, 0.0]


def test_neighborhood_attitudes_use_opinion_scale():
    # attitudes 0 and 0.5 differ by 0.25 on the opinion scale
    assert neighborhood_attitudes(0, [0.0, 0.5, -1.0], None, 0.25) == [0.0, 0.5]


def _series(start, end, steps=3):
    return [list(np.linspace(s, e, steps)) for s, e in zip(start, end)]


def test_classify_consensus():
    start = [-0.6, -0.2, 0.1, 0.5, 0.7]
    end = [0.79, 0.8, 0.81, 0.8, 0.8]
    assert classify_evolution(_series(start, end)) is EvolutionMode.CONSENSUS


def test_classify_polarization():
    start = [0.05, -0.05, 0.0, 0.02]
    end = [0.9, -0.9, 0.9, -0.9]
    assert classify_evolution(_series(start, end)) is EvolutionMode.POLARIZATION


def test_classify_attenuation_same_sign():
    start = [0.6, 0.6, 0.6, 0.6]
    end = [0.2, 0.2, 0.2, 0.2]
    # all agents agree throughout, so the spread never shrinks below its start
    assert classify_evolution(_series(start, end)) is EvolutionMode.ATTENUATION


def test_classify_reinforcement():
    start = [0.2, 0.3, 0.4, 0.5]
    end = [0.4, 0.6, 0.8, 1.0]
    assert classify_evolution(_series(start, end)) is EvolutionMode.REINFORCEMENT


def test_classify_accepts_mapping():
    assert classify_evolution({"a": [0.1, 0.9], "b": [0.1, 0.9]}) is EvolutionMode.REINFORCEMENT


def test_classify_needs_two_steps():
    with pytest.raises(SeriesTooShort):
        classify_evolution([[0.1], [0.2]])
