"""Closed-loop simulation: interventions, crowd deliberation, aggregation, engagement.

Each timestep runs six phases in a fixed order against the frozen state of
the previous step:

    intervention -> action -> communicate -> update -> aggregate -> emit

and appends the emitted engagement vector to the event trajectory, which the
source agents see on the next step.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .crowd import Encoder, build_crowd
from .dynamics import Adjacency, neighborhood_mask, resolve_attitude
from .errors import (
    EmptyCrowd,
    MalformedPolicyOutput,
    MissingScheduleEntry,
    ProviderError,
    ScenarioError,
    SimulationAborted,
)
from .model import (
    HISTOGRAM_BINS,
    ActionKind,
    CrowdAgentState,
    DiscussionSignal,
    EngagementParams,
    EngagementVector,
    Event,
    Intervention,
    InterventionKind,
    InterventionVector,
    PopulationSignal,
    Reply,
    ScenarioConfig,
    ScheduleEntry,
    attitude_to_opinion,
    validate_scenario,
)
from .providers import PolicyProvider, PolicyRequest, Role

log = logging.getLogger(__name__)

PHASES = ("intervention", "action", "communicate", "update", "aggregate", "emit")


@dataclass(frozen=True)
class Action:
    agent_id: str
    kind: ActionKind
    epsilon: float | None = None
    replies: tuple[Reply, ...] = ()
    reasoning_trace: str = ""


@dataclass(frozen=True)
class WorldState:
    t: int
    event: Event
    crowd: tuple[CrowdAgentState, ...]
    population_signal: PopulationSignal
    intervention_log: tuple[tuple[int, InterventionVector], ...] = ()
    discussion_log: tuple[tuple[int, DiscussionSignal], ...] = ()
    # reserved for stochastic providers; the bundled ones never draw from it
    rng: np.random.Generator | None = field(default=None, compare=False)

    @property
    def attitudes(self) -> list[float]:
        return [a.attitude for a in self.crowd]

    def index(self) -> dict[str, int]:
        return {a.agent_id: i for i, a in enumerate(self.crowd)}


@dataclass
class ProviderSet:
    """Which provider answers which agents."""

    crowd: PolicyProvider
    sources: Mapping[str, PolicyProvider] = field(default_factory=dict)
    source_default: PolicyProvider | None = None
    engagement: PolicyProvider | None = None

    def for_source(self, source_id: str) -> PolicyProvider:
        return self.sources.get(source_id) or self.source_default or self.crowd

    @classmethod
    def single(cls, provider: PolicyProvider) -> ProviderSet:
        return cls(crowd=provider, source_default=provider, engagement=provider)


@dataclass(frozen=True)
class Trajectory:
    event_id: str
    agent_ids: tuple[str, ...]
    engagement: tuple[EngagementVector, ...]
    # attitudes[t][i], t = 0..T (row 0 is the initial state)
    attitudes: tuple[tuple[float, ...], ...]
    epsilons: tuple[tuple[float, ...], ...]
    interventions: tuple[InterventionVector, ...]
    discussions: tuple[DiscussionSignal, ...]
    population_signals: tuple[PopulationSignal, ...]
    run_log: tuple[Mapping[str, Any], ...] = ()

    @property
    def horizon(self) -> int:
        return len(self.engagement)

    @property
    def views(self) -> list[float]:
        return [y.views for y in self.engagement]

    def attitude_series(self) -> dict[str, list[float]]:
        """One attitude time series per agent, t = 0..T."""
        return {aid: [row[i] for row in self.attitudes] for i, aid in enumerate(self.agent_ids)}


# ---------------------------------------------------------------------------
# Phases
# ---------------------------------------------------------------------------


def aggregate_population(crowd: Sequence[CrowdAgentState], actions: Sequence[Action] = ()) -> PopulationSignal:
    """Population-weighted mean attitude, 8-bin histogram over [-1, 1], action tallies.

    Uses exactly rounded sums so agent order cannot change the result.
    """
    total = sum(a.population_size for a in crowd)
    mean = math.fsum(a.population_size * a.attitude for a in crowd) / total if total else 0.0
    hist, _ = np.histogram([a.attitude for a in crowd], bins=HISTOGRAM_BINS, range=(-1.0, 1.0))
    counts = {k: 0 for k in ActionKind}
    for act in actions:
        counts[act.kind] += 1
    return PopulationSignal(mean, tuple(int(h) for h in hist), total, counts)


def initialize(config: ScenarioConfig, crowd: Sequence[CrowdAgentState], event: Event | None = None) -> WorldState:
    if not crowd:
        raise EmptyCrowd("cannot simulate an empty crowd")
    event = event or config.event
    return WorldState(
        t=0,
        # the engine writes the trajectory; anything pre-filled is reference data
        event=replace(event, trajectory=()),
        crowd=tuple(crowd),
        population_signal=aggregate_population(crowd),
        rng=np.random.default_rng(config.rng_seed),
    )


def _active_dicts(iv: InterventionVector) -> list[dict]:
    return [d for d in iv.to_dict() if d["kind"] != InterventionKind.INACTIVE.value]


def visibility(state: WorldState, params: EngagementParams) -> float:
    """Cumulative views so far over the un-intervened views of the full horizon, capped at 1."""
    total = sum(a.population_size for a in state.crowd)
    budget = params.alpha * total * state.event.horizon_T
    if budget <= 0:
        return 0.0
    return min(1.0, sum(y.views for y in state.event.trajectory) / budget)


def _risk(mean: float) -> str:
    m = abs(mean)
    return "high" if m > 0.6 else "moderate" if m > 0.3 else "low"


def select_interventions(
    state: WorldState, providers: ProviderSet, config: ScenarioConfig, t: int | None = None
) -> InterventionVector:
    """One entry per source agent; scheduled entries override the provider."""
    t = state.t + 1 if t is None else t
    sig = state.population_signal
    traj = [dict(zip(("views", "likes", "comments", "shares"), y.as_tuple())) for y in state.event.trajectory]
    vis = visibility(state, config.engine.engagement)
    entries = []
    for src in config.source_agents:
        if not config.engine.sources_enabled:
            entries.append(Intervention(src.id))
            continue
        sched = next((e for e in src.schedule if e.t == t), None)
        if sched is not None:
            entries.append(Intervention(src.id, sched.kind, sched.valence if sched.kind is not InterventionKind.INACTIVE else 0.0, sched.message))
            continue
        history = [
            {"t": tt, "kind": e.kind.value}
            for tt, iv in state.intervention_log
            for e in iv
            if e.source_id == src.id and e.active
        ]
        payload = {
            "source_id": src.id,
            "source_agent_name": src.name or src.id,
            "day_n": t,
            "event_description": state.event.description,
            "opinion_summary": sig.to_dict(),
            "mean_attitude": sig.mean_attitude,
            "visibility": vis,
            "intervention_history": history,
            "policy_goal": src.policy_goal or "keep the public accurately informed",
            "risk_assessment": _risk(sig.mean_attitude),
            "stance": src.stance,
            "last_engagement": traj[-1] if traj else None,
            "trajectory": traj,
        }
        resp = providers.for_source(src.id).respond(PolicyRequest(Role.SOURCE_AGENT, t, src.id, payload))
        kind = resp.intervention or InterventionKind.INACTIVE
        if kind is InterventionKind.INACTIVE:
            valence = 0.0
        else:
            valence = resp.valence if resp.valence is not None else src.stance
        entries.append(Intervention(src.id, kind, valence, resp.message))
    return InterventionVector(tuple(entries))


def _crowd_payload(state: WorldState, agent: CrowdAgentState, t: int, interventions: InterventionVector) -> dict:
    return {
        "day_n": t,
        "agent_id": agent.agent_id,
        "agent_name": agent.group_name,
        "event_description": state.event.description,
        "intervention_vector": _active_dicts(interventions),
        "mean_state": state.population_signal.to_dict(),
        "previous_state": agent.cognitive_state,
        "memory_trace": list(agent.memory_trace),
        "interaction_range": agent.epsilon,
        "opinions": agent.attitude,
        "attitude": agent.attitude,
        "last_action": agent.last_action.value,
    }


def _mask(attitudes: Sequence[float], epsilons: Sequence[float], adjacency: Adjacency | None) -> np.ndarray:
    return neighborhood_mask([attitude_to_opinion(a) for a in attitudes], adjacency, np.asarray(epsilons, dtype=float))


def sample_actions(
    state: WorldState,
    interventions: InterventionVector,
    provider: PolicyProvider,
    *,
    adjacency: Adjacency | None = None,
    comments_enabled: bool = True,
    run_log: list | None = None,
) -> list[Action]:
    """Exactly one action per crowd agent, conditioned on the t-1 snapshot."""
    t = state.t + 1
    ids = state.index()
    att = state.attitudes
    mask = _mask(att, [a.epsilon for a in state.crowd], adjacency)
    actions = []
    for i, agent in enumerate(state.crowd):
        payload = _crowd_payload(state, agent, t, interventions)
        payload["neighbors"] = [
            {"agent_id": state.crowd[j].agent_id, "attitude": att[j]} for j in np.flatnonzero(mask[i]) if j != i
        ]
        resp = provider.respond(PolicyRequest(Role.CROWD_ACTION, t, agent.agent_id, payload))
        if resp.action is None:
            raise MalformedPolicyOutput(f"no action for {agent.agent_id}", raw=resp.reasoning_trace)
        replies = []
        if resp.action is ActionKind.DISCUSS_OPINION:
            for r in resp.replies:
                if r.target_agent_id not in ids:
                    log.warning("t=%d: %s replied to unknown agent %r; dropped", t, agent.agent_id, r.target_agent_id)
                    if run_log is not None:
                        run_log.append({"t": t, "phase": "action", "dropped_reply": [agent.agent_id, r.target_agent_id], "reason": "unknown target"})
                    continue
                replies.append(Reply(agent.agent_id, r.target_agent_id, r.reply_content, r.reply_tone))
            if not comments_enabled:
                replies = []
        actions.append(Action(agent.agent_id, resp.action, resp.epsilon, tuple(replies), resp.reasoning_trace))
    return actions


def effective_epsilons(state: WorldState, actions: Sequence[Action]) -> list[float]:
    """SelectPartner actions set a new epsilon for this step onward."""
    by_id = {a.agent_id: a for a in actions}
    out = []
    for agent in state.crowd:
        act = by_id.get(agent.agent_id)
        if act is not None and act.kind is ActionKind.SELECT_PARTNER and act.epsilon is not None:
            out.append(act.epsilon)
        else:
            out.append(agent.epsilon)
    return out


def communicate(
    actions: Sequence[Action],
    state: WorldState,
    *,
    adjacency: Adjacency | None = None,
    run_log: list | None = None,
) -> DiscussionSignal:
    """Replies that reach a peer inside the sender's epsilon-neighborhood."""
    ids = state.index()
    mask = _mask(state.attitudes, effective_epsilons(state, actions), adjacency)
    out = []
    for act in actions:
        if act.kind is not ActionKind.DISCUSS_OPINION:
            continue
        i = ids[act.agent_id]
        for r in act.replies:
            j = ids.get(r.to_agent)
            if j is not None and j != i and mask[i, j]:
                out.append(r)
            else:
                log.debug("reply %s -> %s outside neighborhood; dropped", r.from_agent, r.to_agent)
                if run_log is not None:
                    run_log.append({"t": state.t + 1, "phase": "communicate", "dropped_reply": [r.from_agent, r.to_agent], "reason": "outside neighborhood"})
    return tuple(out)


def _memory_line(t: int, action: Action, received: Sequence[Reply], interventions: InterventionVector) -> str:
    return json.dumps(
        {
            "t": t,
            "action": action.kind.value,
            "received": [[r.from_agent, r.reply_tone.value] for r in received],
            "interventions": [k.value for k in interventions.kinds()],
        },
        separators=(",", ":"),
    )


def update_states(
    state: WorldState,
    actions: Sequence[Action],
    discussion: DiscussionSignal,
    interventions: InterventionVector,
    provider: PolicyProvider,
    *,
    adjacency: Adjacency | None = None,
    memory_cap: int = 32,
    run_log: list | None = None,
) -> list[CrowdAgentState]:
    """Apply the hybrid attitude rule and record memory for every agent."""
    t = state.t + 1
    att = state.attitudes
    eps = effective_epsilons(state, actions)
    mask = _mask(att, eps, adjacency)
    by_id = {a.agent_id: a for a in actions}
    sender_att = {a.agent_id: a.attitude for a in state.crowd}
    out = []
    for i, agent in enumerate(state.crowd):
        act = by_id[agent.agent_id]
        received = tuple(r for r in discussion if r.to_agent == agent.agent_id)
        current = replace(agent, epsilon=eps[i])
        upd = resolve_attitude(
            current,
            received,
            interventions,
            [att[j] for j in np.flatnonzero(mask[i])],
            provider,
            t=t,
            context={
                "day_n": t,
                "event_description": state.event.description,
                "mean_state": state.population_signal.to_dict(),
                "sender_attitudes": sender_att,
            },
        )
        if run_log is not None and upd.via_policy and upd.reasoning_trace:
            run_log.append({"t": t, "phase": "update", "agent_id": agent.agent_id, "reasoning_trace": upd.reasoning_trace})
        out.append(
            replace(
                current,
                attitude=upd.attitude,
                last_action=act.kind,
                memory_trace=agent.remember(_memory_line(t, act, received, interventions), memory_cap),
                cognitive_state=upd.cognitive_state if upd.via_policy and upd.cognitive_state is not None else agent.cognitive_state,
            )
        )
    return out


def default_engagement(
    signal: PopulationSignal,
    crowd: Sequence[CrowdAgentState],
    interventions: InterventionVector,
    discussion: DiscussionSignal,
    params: EngagementParams,
) -> EngagementVector:
    total = sum(a.population_size for a in crowd)
    mult = 1.0
    for kind in interventions.kinds():
        mult *= params.multipliers.get(kind.value, 1.0)
    views = total * params.alpha * mult
    mean = signal.mean_attitude
    return EngagementVector(
        views=views,
        likes=views * params.rho_like * (mean + 1.0) / 2.0,
        comments=views * params.rho_comment * (1.0 if discussion else 0.5),
        shares=views * params.rho_share * abs(mean),
    )


def emit_engagement(
    signal: PopulationSignal,
    crowd: Sequence[CrowdAgentState],
    interventions: InterventionVector,
    discussion: DiscussionSignal,
    params: EngagementParams | None = None,
    provider: PolicyProvider | None = None,
    context: Mapping[str, Any] | None = None,
) -> EngagementVector:
    """Engagement for the step.

    The default closed-form mapping scales a 0.5% participation base by a
    multiplier per active intervention. With ``params.mode == "provider"``
    the provider estimates the vector instead, seeing the default as a hint.
    """
    params = params or EngagementParams()
    y = default_engagement(signal, crowd, interventions, discussion, params)
    if params.mode != "provider":
        return y
    if provider is None:
        raise ValueError("provider engagement mode needs an engagement provider")
    ctx = dict(context or {})
    payload = {
        "agent_name": "crowd",
        "day_n": ctx.get("day_n", 0),
        "event_description": ctx.get("event_description", ""),
        "intervention_vector": _active_dicts(interventions),
        "mean_state": signal.to_dict(),
        "previous_state": [a.cognitive_state for a in crowd],
        "memory_trace": [a.memory_trace[-1] if a.memory_trace else "" for a in crowd],
        "interaction_range": [a.epsilon for a in crowd],
        "opinions": [a.attitude for a in crowd],
        "default_engagement": dict(zip(("views", "likes", "comments", "shares"), y.as_tuple())),
    }
    resp = provider.respond(PolicyRequest(Role.ENGAGEMENT_HINT, ctx.get("day_n", 0), None, payload))
    if resp.engagement is None:
        raise MalformedPolicyOutput("engagement response carries no engagement_vector", raw=resp.reasoning_trace)
    return resp.engagement


# ---------------------------------------------------------------------------
# Counterfactual controls
# ---------------------------------------------------------------------------

CONTROLS = {
    1: "disable public commenting",
    2: "remove all source-side interventions",
    3: "shift intervention times",
    4: "remove the second intervention",
    5: "remove the first intervention",
}


def _remove_entry(config: ScenarioConfig, source_id: str, entry: ScheduleEntry) -> ScenarioConfig:
    sources = tuple(
        replace(s, schedule=tuple(e for e in s.schedule if e is not entry)) if s.id == source_id else s
        for s in config.source_agents
    )
    return replace(config, source_agents=sources)


def apply_control(config: ScenarioConfig, control_id: int, offset: int | None = None) -> ScenarioConfig:
    """Counterfactual variant of ``config``; the result has ``control`` cleared.

    3 shifts every scheduled intervention by ``offset`` days (default
    ``engine.control_time_offset``); entries pushed outside 1..T are dropped.
    4 and 5 remove the second / first scheduled intervention in chronological
    order.
    """
    if control_id not in CONTROLS:
        raise ValueError("control must be in 1..5")
    base = replace(config, control=None)
    entries = base.schedule_entries()
    if control_id == 1:
        return replace(base, engine=replace(base.engine, comments_enabled=False))
    if control_id == 2:
        sources = tuple(replace(s, schedule=()) for s in base.source_agents)
        return replace(base, source_agents=sources, engine=replace(base.engine, sources_enabled=False))
    if control_id == 3:
        if not entries:
            raise MissingScheduleEntry("control 3 needs at least one scheduled intervention")
        shift = base.engine.control_time_offset if offset is None else offset
        T = base.event.horizon_T
        sources = []
        for s in base.source_agents:
            moved = []
            for e in s.schedule:
                if 1 <= e.t + shift <= T:
                    moved.append(replace(e, t=e.t + shift))
                else:
                    log.warning("control 3: %s intervention moved to day %d, outside 1..%d; dropped", s.id, e.t + shift, T)
            sources.append(replace(s, schedule=tuple(moved)))
        return replace(base, source_agents=tuple(sources))
    need = 2 if control_id == 4 else 1
    if len(entries) < need:
        raise MissingScheduleEntry(f"control {control_id} needs at least {need} scheduled intervention(s), found {len(entries)}")
    _, _, sid, entry = entries[need - 1]
    return _remove_entry(base, sid, entry)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


def _adjacency_for(config: ScenarioConfig, crowd: Sequence[CrowdAgentState]) -> Adjacency:
    n = len(crowd)
    if config.engine.adjacency == "complete":
        return Adjacency.complete(n)
    idx = {a.agent_id: i for i, a in enumerate(crowd)}
    try:
        return Adjacency.from_edges(n, [(idx[a], idx[b]) for a, b in config.engine.adjacency])
    except KeyError as exc:
        raise ScenarioError(f"adjacency references unknown agent {exc}") from None


class Simulation:
    """One run of one scenario. Not shareable across concurrent runs."""

    def __init__(
        self,
        config: ScenarioConfig,
        providers: ProviderSet,
        *,
        crowd: Sequence[CrowdAgentState] | None = None,
        encoder: Encoder | None = None,
        base_dir: str | Path | None = None,
    ):
        report = validate_scenario(config)
        if not report.ok:
            raise ScenarioError("invalid scenario: " + "; ".join(map(str, report)))
        if config.control is not None:
            config = apply_control(config, config.control)
        self.config = config
        self.providers = providers
        event = config.event
        if crowd is None:
            try:
                event, crowd = build_crowd(config, providers.crowd, encoder, base_dir)
            except ProviderError as exc:
                raise SimulationAborted(0, "crowd generation", exc) from exc
        self.adjacency = _adjacency_for(config, crowd)
        self.state = initialize(config, crowd, event)
        self.run_log: list[dict] = [
            {"t": 0, "phase": "init", "agents": [a.agent_id for a in crowd], "population_signal": self.state.population_signal.to_dict()}
        ]
        self._attitudes = [tuple(self.state.attitudes)]
        self._epsilons = [tuple(a.epsilon for a in crowd)]
        self._signals = [self.state.population_signal]

    def _phase(self, name: str, fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except ProviderError as exc:
            raise SimulationAborted(self.state.t + 1, name, exc) from exc

    def step(self) -> WorldState:
        s, cfg, rl = self.state, self.config, self.run_log
        t = s.t + 1
        if t > s.event.horizon_T:
            raise RuntimeError("horizon reached")

        iv = self._phase("intervention", select_interventions, s, self.providers, cfg)
        rl.append({"t": t, "phase": "intervention", "interventions": iv.to_dict()})

        actions = self._phase(
            "action", sample_actions, s, iv, self.providers.crowd,
            adjacency=self.adjacency, comments_enabled=cfg.engine.comments_enabled, run_log=rl,
        )
        rl.append({"t": t, "phase": "action", "actions": {a.agent_id: a.kind.value for a in actions}})

        discussion = communicate(actions, s, adjacency=self.adjacency, run_log=rl)
        rl.append({"t": t, "phase": "communicate", "replies": [r.to_dict() for r in discussion]})

        crowd = self._phase(
            "update", update_states, s, actions, discussion, iv, self.providers.crowd,
            adjacency=self.adjacency, memory_cap=cfg.engine.memory_cap, run_log=rl,
        )
        rl.append({"t": t, "phase": "update", "attitudes": {a.agent_id: a.attitude for a in crowd}})

        signal = aggregate_population(crowd, actions)
        rl.append({"t": t, "phase": "aggregate", "population_signal": signal.to_dict()})

        y = self._phase(
            "emit", emit_engagement, signal, crowd, iv, discussion, cfg.engine.engagement,
            self.providers.engagement or self.providers.crowd,
            {"day_n": t, "event_description": s.event.description},
        )
        rl.append({"t": t, "phase": "emit", "engagement": dict(zip(("views", "likes", "comments", "shares"), y.as_tuple()))})

        self.state = WorldState(
            t=t,
            event=s.event.extend(y),
            crowd=tuple(crowd),
            population_signal=signal,
            intervention_log=s.intervention_log + ((t, iv),),
            discussion_log=s.discussion_log + ((t, discussion),),
            rng=s.rng,
        )
        self._attitudes.append(tuple(a.attitude for a in crowd))
        self._epsilons.append(tuple(a.epsilon for a in crowd))
        self._signals.append(signal)
        return self.state

    def run(self) -> Trajectory:
        while self.state.t < self.state.event.horizon_T:
            self.step()
        return self.trajectory()

    def trajectory(self) -> Trajectory:
        s = self.state
        return Trajectory(
            event_id=s.event.id,
            agent_ids=tuple(a.agent_id for a in s.crowd),
            engagement=s.event.trajectory,
            attitudes=tuple(self._attitudes),
            epsilons=tuple(self._epsilons),
            interventions=tuple(iv for _, iv in s.intervention_log),
            discussions=tuple(d for _, d in s.discussion_log),
            population_signals=tuple(self._signals),
            run_log=tuple(self.run_log),
        )


def build_providers(
    config: ScenarioConfig,
    selection: str = "rules",
    *,
    endpoint: str | None = None,
    model_name: str = "llama3-8b",
    timeout: float = 60.0,
    max_retries: int = 2,
) -> ProviderSet:
    """Providers for a run: ``selection`` drives the crowd and every source
    whose policy is "inherit"; other sources get the backend they name."""
    from .providers import RemoteChatProvider, RuleBasedProvider, ScriptedProvider

    cache: dict[str, PolicyProvider] = {}

    def make(kind: str) -> PolicyProvider:
        if kind not in cache:
            if kind == "scripted":
                cache[kind] = ScriptedProvider(config.scripted)
            elif kind == "rules":
                cache[kind] = RuleBasedProvider(config.rules)
            elif kind == "remote":
                if not endpoint:
                    raise ScenarioError("the remote provider needs an endpoint")
                cache[kind] = RemoteChatProvider(endpoint, model_name, timeout=timeout, max_retries=max_retries)
            else:
                raise ScenarioError(f"unknown provider {kind!r}")
        return cache[kind]

    crowd = make(selection)
    sources = {s.id: make(s.policy) for s in config.source_agents if s.policy != "inherit"}
    return ProviderSet(crowd=crowd, sources=sources, source_default=crowd, engagement=crowd)


def run(config: ScenarioConfig, providers: ProviderSet | PolicyProvider, **kw) -> Trajectory:
    if not isinstance(providers, ProviderSet):
        providers = ProviderSet.single(providers)
    return Simulation(config, providers, **kw).run()
