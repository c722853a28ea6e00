from __future__ import annotations

import logging
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socialsim.engine import (
    PHASES,
    Action,
    ProviderSet,
    Simulation,
    aggregate_population,
    apply_control,
    build_providers,
    communicate,
    emit_engagement,
    initialize,
    run,
    sample_actions,
    select_interventions,
    update_states,
)
from socialsim.errors import EmptyCrowd, MissingScheduleEntry, ProviderUnavailable, SimulationAborted
from socialsim.model import (
    ActionKind,
    AgentSpec,
    CrowdAgentState,
    CrowdSpec,
    EngagementParams,
    EngagementVector,
    Intervention,
    InterventionKind,
    InterventionVector,
    Reply,
    ReplyTone,
    ScheduleEntry,
    SourceAgentSpec,
)
from socialsim.providers import PolicyResponse, ReplySpec, Role, RuleBasedProvider, ScriptedProvider

from .conftest import bundled, small_config

PUB = InterventionKind.PUBLICITY


def agents(n, att=0.0, eps=1.0, size=1000):
    return [CrowdAgentState(f"a{i}", f"g{i}", size, att if not isinstance(att, list) else att[i], eps) for i in range(n)]


def state_for(crowd, config=None):
    return initialize(config or small_config(n_agents=len(crowd)), crowd)


class Recorder:
    """Wraps a provider and keeps every request it sees."""

    def __init__(self, inner):
        self.inner = inner
        self.requests = []

    def respond(self, request):
        self.requests.append(request)
        return self.inner.respond(request)


# --- initialize -------------------------------------------------------------------


def test_initial_histogram_counts_agents():
    cfg = replace(small_config(n_agents=10), rng_seed=42)
    s = initialize(cfg, agents(10, [i / 10 - 0.5 for i in range(10)]))
    assert sum(s.population_signal.attitude_histogram) == 10


def test_initialize_deterministic():
    cfg = small_config(n_agents=3)
    assert initialize(cfg, agents(3)) == initialize(cfg, agents(3))


def test_empty_crowd():
    with pytest.raises(EmptyCrowd):
        initialize(small_config(), [])


# --- interventions ----------------------------------------------------------------


def test_schedule_overrides_provider():
    cfg = small_config(schedule=[ScheduleEntry(1, PUB, 0.4)])
    never = ScriptedProvider({(Role.SOURCE_AGENT, None, None): {"selected_intervention": "Prohibition"}})
    iv = select_interventions(state_for(agents(3), cfg), ProviderSet.single(never), cfg)
    assert [(e.source_id, e.kind, e.valence) for e in iv] == [("media", PUB, 0.4)]


def test_scripted_sources_inactive_by_default():
    cfg = small_config()
    iv = select_interventions(state_for(agents(3), cfg), ProviderSet.single(ScriptedProvider()), cfg)
    assert iv.is_empty and len(iv) == 1


def test_rule_source_publicizes_when_unseen():
    cfg = small_config()
    cfg = replace(cfg, source_agents=(replace(cfg.source_agents[0], policy="inherit"),))
    iv = select_interventions(state_for(agents(3), cfg), build_providers(cfg, "rules"), cfg)
    assert PUB in iv.kinds()


def test_disabled_sources_stay_inactive():
    cfg = small_config(schedule=[ScheduleEntry(1, PUB, 0.4)])
    cfg = replace(cfg, engine=replace(cfg.engine, sources_enabled=False))
    iv = select_interventions(state_for(agents(3), cfg), ProviderSet.single(ScriptedProvider()), cfg)
    assert iv.is_empty


# --- actions and communication ----------------------------------------------------


def test_select_partner_sets_epsilon_for_next_state():
    crowd = agents(3, eps=0.8)
    s = state_for(crowd)
    p = ScriptedProvider({(Role.CROWD_ACTION, None, "a0"): {"selected_action": "SelectPartner", "epsilon": 0.3}})
    acts = sample_actions(s, InterventionVector(), p)
    new = update_states(s, acts, (), InterventionVector(), p)
    assert new[0].epsilon == 0.3 and new[1].epsilon == 0.8


def test_unknown_reply_target_dropped_with_warning(caplog):
    s = state_for(agents(3))
    p = ScriptedProvider({(Role.CROWD_ACTION, None, "a0"): {
        "selected_action": "DiscussOpinion",
        "responses": [{"target_agent_id": "ghost", "reply_content": "hi"}, {"target_agent_id": "a1"}],
    }})
    with caplog.at_level(logging.WARNING):
        acts = sample_actions(s, InterventionVector(), p)
    assert [r.to_agent for r in acts[0].replies] == ["a1"]
    assert "ghost" in caplog.text


def test_update_only_gives_neighborhood_means():
    crowd = agents(3, [-0.6, 0.0, 0.6], eps=1.0)
    s = state_for(crowd)
    p = ScriptedProvider()
    acts = sample_actions(s, InterventionVector(), p)
    assert all(a.kind is ActionKind.UPDATE_OPINION for a in acts)
    new = update_states(s, acts, (), InterventionVector(), p)
    assert [a.attitude for a in new] == pytest.approx([0.0, 0.0, 0.0])
    assert all(len(a.memory_trace) == 1 for a in new)


def _discuss(sender, targets):
    return Action(sender, ActionKind.DISCUSS_OPINION, replies=tuple(Reply(sender, t, "x", ReplyTone.SUPPORTIVE) for t in targets))


def test_no_discussion_actions_empty_signal():
    s = state_for(agents(3))
    acts = [Action(f"a{i}", ActionKind.UPDATE_OPINION) for i in range(3)]
    assert communicate(acts, s) == ()


def test_open_sender_reaches_all_peers():
    s = state_for(agents(10, eps=1.0))
    acts = [_discuss("a0", [f"a{i}" for i in range(1, 10)])] + [Action(f"a{i}", ActionKind.UPDATE_OPINION) for i in range(1, 10)]
    assert len(communicate(acts, s)) == 9


def test_closed_sender_reaches_nobody():
    crowd = agents(10, eps=1.0)
    crowd[0] = replace(crowd[0], epsilon=0.0)
    s = state_for(crowd)
    acts = [_discuss("a0", [f"a{i}" for i in range(1, 10)])] + [Action(f"a{i}", ActionKind.UPDATE_OPINION) for i in range(1, 10)]
    assert communicate(acts, s) == ()


def test_out_of_range_peer_dropped():
    s = state_for(agents(3, [-1.0, -0.9, 1.0], eps=0.2))
    acts = [_discuss("a0", ["a1", "a2"]), Action("a1", ActionKind.UPDATE_OPINION), Action("a2", ActionKind.UPDATE_OPINION)]
    assert [r.to_agent for r in communicate(acts, s)] == ["a1"]


# --- state update -----------------------------------------------------------------


def test_memory_cap_evicts_oldest():
    crowd = [replace(agents(1)[0], memory_trace=tuple(f"m{i}" for i in range(32)))]
    s = state_for(crowd, small_config(n_agents=1))
    acts = [Action("a0", ActionKind.UPDATE_OPINION)]
    new = update_states(s, acts, (), InterventionVector(), ScriptedProvider(), memory_cap=32)
    assert len(new[0].memory_trace) == 32 and new[0].memory_trace[0] == "m1"


def test_policy_answer_replaces_cognitive_state():
    s = state_for(agents(2))
    p = ScriptedProvider({(Role.CROWD_ATTITUDE, None, None): {"updated_opinion": 0.9, "cognitive_state": "alarmed"}})
    iv = InterventionVector((Intervention("media", PUB, 0.5),))
    new = update_states(s, [Action("a0", ActionKind.UPDATE_OPINION), Action("a1", ActionKind.UPDATE_OPINION)], (), iv, p)
    assert [a.attitude for a in new] == [0.9, 0.9]
    assert [a.cognitive_state for a in new] == ["alarmed", "alarmed"]


def test_received_reply_carries_sender_attitude():
    crowd = agents(2, [0.8, 0.0])
    s = state_for(crowd)
    rec = Recorder(RuleBasedProvider())
    disc = (Reply("a0", "a1", "agree", ReplyTone.SUPPORTIVE),)
    acts = [_discuss("a0", ["a1"]), Action("a1", ActionKind.UPDATE_OPINION)]
    new = update_states(s, acts, disc, InterventionVector(), rec)
    # only a1 received something; it moves half way toward +0.8
    assert new[1].attitude == pytest.approx(0.4)
    assert [r.agent_id for r in rec.requests] == ["a1"]
    assert rec.requests[0].payload["discussion"][0]["sender_attitude"] == 0.8


# --- aggregation and engagement --------------------------------------------------


def test_weighted_mean():
    crowd = [CrowdAgentState("a", "a", 1000, 1.0, 0.5), CrowdAgentState("b", "b", 3000, -1.0, 0.5)]
    assert aggregate_population(crowd).mean_attitude == -0.5


def test_all_zero_attitudes_land_in_one_bin():
    sig = aggregate_population(agents(5, 0.0))
    assert sig.mean_attitude == 0.0
    assert sig.attitude_histogram == (0, 0, 0, 0, 5, 0, 0, 0)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.tuples(st.floats(-1, 1), st.integers(1, 10**6)), min_size=1, max_size=10),
    st.randoms(use_true_random=False),
)
def test_aggregation_permutation_invariant(rows, rnd):
    crowd = [CrowdAgentState(f"a{i}", "g", n, a, 0.5) for i, (a, n) in enumerate(rows)]
    shuffled = crowd[:]
    rnd.shuffle(shuffled)
    assert aggregate_population(crowd) == aggregate_population(shuffled)


def _emit(kinds, discussion=()):
    crowd = agents(100, 0.0, size=1000)
    iv = InterventionVector(tuple(Intervention(f"s{i}", k, 0.0) for i, k in enumerate(kinds)))
    return emit_engagement(aggregate_population(crowd), crowd, iv, discussion)


def test_default_engagement_examples():
    assert _emit([]).views == pytest.approx(500)
    assert _emit([PUB]).views == pytest.approx(750)
    assert _emit([InterventionKind.PROHIBITION]).views == pytest.approx(250)
    assert _emit([InterventionKind.PROHIBITION]).views < _emit([]).views


def test_simultaneous_interventions_multiply():
    assert _emit([PUB, InterventionKind.ANNOUNCEMENT]).views == pytest.approx(500 * 1.5 * 1.3)


def test_comments_double_with_discussion():
    y0 = _emit([])
    y1 = _emit([], (Reply("a0", "a1"),))
    assert y1.comments == pytest.approx(2 * y0.comments)


def test_provider_engagement_mode():
    crowd = agents(2)
    hint = ScriptedProvider({(Role.ENGAGEMENT_HINT, None, None): {"engagement_vector": {"views": 9, "likes": 8, "comments": 7, "shares": 6}}})
    y = emit_engagement(aggregate_population(crowd), crowd, InterventionVector(), (), EngagementParams(mode="provider"), hint)
    assert y == EngagementVector(9, 8, 7, 6)


# --- whole runs -------------------------------------------------------------------


def one_agent_config(schedule):
    cfg = small_config(n_agents=1, horizon=2, schedule=schedule, attitudes=[0.2])
    return cfg


def test_hand_traced_two_day_run():
    cfg = one_agent_config([ScheduleEntry(1, PUB, 0.5)])
    p = ScriptedProvider({(Role.CROWD_ATTITUDE, 1, "a0"): {"updated_opinion": 0.6}})
    tr = run(cfg, p)
    # day 1: publicity (x1.5) is active, so the scripted attitude 0.6 applies
    # views 1000*0.005*1.5, likes views*0.1*(1.6/2), comments views*0.05*0.5, shares views*0.02*0.6
    # day 2: nothing active, no discussion, so the agent keeps the mean of itself
    expected = [(7.5, 0.6, 0.1875, 0.09), (5.0, 0.4, 0.125, 0.06)]
    for y, e in zip(tr.engagement, expected):
        assert y.as_tuple() == pytest.approx(e, abs=1e-12)
    assert tr.attitudes == ((0.2,), (0.6,), (0.6,))


def test_same_seed_same_trajectory(demo_config):
    assert run(demo_config, build_providers(demo_config)) == run(demo_config, build_providers(demo_config))


def test_publicity_raises_day_one_views():
    base = run(one_agent_config([]), ScriptedProvider())
    pub = run(one_agent_config([ScheduleEntry(1, PUB, 0.5)]), ScriptedProvider())
    assert pub.views[0] > base.views[0]


def test_phase_order_in_log(demo_config):
    tr = run(demo_config, build_providers(demo_config))
    for t in range(1, 8):
        phases = [r["phase"] for r in tr.run_log if r["t"] == t and "dropped_reply" not in r and "reasoning_trace" not in r]
        assert phases == list(PHASES)


def test_closed_loop_probe():
    cfg = small_config(n_agents=3, horizon=4)
    probe = Recorder(ScriptedProvider())
    tr = Simulation(cfg, ProviderSet(crowd=ScriptedProvider(), sources={"media": probe})).run()
    seen = [r.payload["last_engagement"] for r in probe.requests]
    assert seen[0] is None
    for t in range(1, 4):
        assert seen[t]["views"] == tr.engagement[t - 1].views


def test_attitudes_bounded(demo_config):
    tr = run(demo_config, build_providers(demo_config))
    assert all(-1.0 <= a <= 1.0 for row in tr.attitudes for a in row)


def test_provider_failure_aborts_run():
    class Broken:
        def respond(self, request):
            if request.role is Role.CROWD_ATTITUDE:
                raise ProviderUnavailable("down")
            return ScriptedProvider().respond(request)

    cfg = small_config(schedule=[ScheduleEntry(2, PUB, 0.5)])
    with pytest.raises(SimulationAborted) as exc:
        run(cfg, Broken())
    assert exc.value.timestep == 2 and exc.value.phase == "update"


def test_edge_list_adjacency_limits_averaging():
    cfg = small_config(n_agents=3, horizon=1, attitudes=[-0.5, 0.5, 0.9])
    cfg = replace(cfg, engine=replace(cfg.engine, adjacency=(("a0", "a1"),)))
    tr = run(cfg, ScriptedProvider())
    assert tr.attitudes[1] == pytest.approx((0.0, 0.0, 0.9))


def test_generated_crowd_runs():
    cfg = bundled("generated.yaml")
    tr = run(cfg, build_providers(cfg))
    assert tr.horizon == 5 and len(tr.agent_ids) >= 3


# --- controls -----------------------------------------------------------------------


def test_control_two_clears_schedules(demo_config):
    c = apply_control(demo_config, 2)
    assert c.schedule_entries() == [] and not c.engine.sources_enabled and c.control is None


def test_control_four_keeps_first(demo_config):
    c = apply_control(demo_config, 4)
    assert [(t, sid) for t, _, sid, _ in c.schedule_entries()] == [(1, "outlet")]


def test_control_five_lowers_total(demo_config):
    base = run(demo_config, build_providers(demo_config))
    c5 = run(apply_control(demo_config, 5), build_providers(demo_config))
    assert sum(c5.views) < sum(base.views)


def test_control_one_silences_replies(demo_config):
    c = apply_control(demo_config, 1)
    tr = run(c, build_providers(c))
    assert all(d == () for d in tr.discussions)
    assert any(d for d in run(demo_config, build_providers(demo_config)).discussions)


def test_control_three_shifts_and_drops():
    cfg = small_config(horizon=5, schedule=[ScheduleEntry(1, PUB, 0.1), ScheduleEntry(4, InterventionKind.RESPONSE, 0.1)])
    c = apply_control(cfg, 3, offset=2)
    assert [e.t for _, _, _, e in c.schedule_entries()] == [3]


def test_control_three_on_prohibition_moves_suppression():
    cfg = bundled("prohibition.yaml")
    base = run(cfg, build_providers(cfg)).views
    moved = run(apply_control(cfg, 3, offset=2), build_providers(cfg)).views
    diff = [round(m - b, 9) for m, b in zip(moved, base)]
    # the halved day moves from 3 to 5
    gap = max(base) - min(base)
    assert diff[2] == pytest.approx(gap) and diff[4] == pytest.approx(-gap)
    assert all(d == 0 for i, d in enumerate(diff) if i not in (2, 4))


def test_controls_need_schedule_entries():
    cfg = small_config()
    for c in (3, 4, 5):
        with pytest.raises(MissingScheduleEntry):
            apply_control(cfg, c)
    one = small_config(schedule=[ScheduleEntry(1, PUB, 0.1)])
    with pytest.raises(MissingScheduleEntry):
        apply_control(one, 4)


def test_control_field_applied_at_run_start(demo_config):
    via_field = run(replace(demo_config, control=4), build_providers(demo_config))
    explicit = run(apply_control(demo_config, 4), build_providers(demo_config))
    assert via_field.engagement == explicit.engagement


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 7), st.sampled_from(["Publicity", "Announcement", "Response", "Refutation"])), max_size=5, unique_by=lambda x: x[0]))
def test_control_two_never_raises_total_views(entries):
    cfg = small_config(n_agents=3, horizon=7, schedule=[ScheduleEntry(t, k, 0.2) for t, k in entries])
    base = run(cfg, build_providers(cfg))
    c2 = run(apply_control(cfg, 2), build_providers(cfg))
    assert sum(c2.views) <= sum(base.views)
