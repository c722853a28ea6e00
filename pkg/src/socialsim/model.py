"""Domain types shared across the engine and the scenario file schema.

Everything here is a frozen value object. Scenario configs are built in
memory or parsed from YAML, and checked with :func:`validate_scenario`;
construction never rejects out-of-range values so that a bad config can be
reported on as data rather than blowing up half-way through parsing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterator, Mapping

import yaml

from .errors import ScenarioError

SCHEMA_VERSION = 1
HISTOGRAM_BINS = 8


class InterventionKind(str, Enum):
    PROHIBITION = "Prohibition"
    REFUTATION = "Refutation"
    PUBLICITY = "Publicity"
    RESPONSE = "Response"
    ANNOUNCEMENT = "Announcement"
    INACTIVE = "Inactive"


class ActionKind(str, Enum):
    SELECT_PARTNER = "SelectPartner"
    DISCUSS_OPINION = "DiscussOpinion"
    UPDATE_OPINION = "UpdateOpinion"


class ReplyTone(str, Enum):
    SUPPORTIVE = "supportive"
    NEUTRAL = "neutral"
    OPPOSING = "opposing"


TONE_WEIGHT = {
    ReplyTone.SUPPORTIVE: 1.0,
    ReplyTone.NEUTRAL: 0.0,
    ReplyTone.OPPOSING: -1.0,
}

ENGAGEMENT_FIELDS = ("views", "likes", "comments", "shares")


def attitude_to_opinion(attitude: float) -> float:
    """Map an attitude in [-1, 1] onto the normalized opinion scale [0, 1]."""
    return (attitude + 1.0) / 2.0


def opinion_to_attitude(opinion: float) -> float:
    return 2.0 * opinion - 1.0


def clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


# ---------------------------------------------------------------------------
# Runtime value objects
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EngagementVector:
    views: float
    likes: float
    comments: float
    shares: float

    def __post_init__(self):
        for name in ENGAGEMENT_FIELDS:
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"engagement component {name}={v!r} must be finite and >= 0")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.views, self.likes, self.comments, self.shares)

    @classmethod
    def zero(cls) -> EngagementVector:
        return cls(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Event:
    id: str
    title: str
    content: str
    domain: str = ""
    country: str = ""
    horizon_T: int = 7
    trajectory: tuple[EngagementVector, ...] = ()

    def __post_init__(self):
        if len(self.trajectory) > self.horizon_T:
            raise ValueError("event trajectory is longer than its horizon")

    @property
    def description(self) -> str:
        return f"{self.title}. {self.content}".strip() if self.content else self.title

    def extend(self, y: EngagementVector) -> Event:
        return replace(self, trajectory=self.trajectory + (y,))


@dataclass(frozen=True)
class Intervention:
    source_id: str
    kind: InterventionKind = InterventionKind.INACTIVE
    valence: float = 0.0
    message: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", InterventionKind(self.kind))
        if not -1.0 <= self.valence <= 1.0:
            raise ValueError(f"intervention valence {self.valence} outside [-1, 1]")
        if self.kind is InterventionKind.INACTIVE and self.valence != 0.0:
            raise ValueError("inactive intervention must carry valence 0")

    @property
    def active(self) -> bool:
        return self.kind is not InterventionKind.INACTIVE


@dataclass(frozen=True)
class InterventionVector:
    """One entry per registered source agent for a single timestep."""

    entries: tuple[Intervention, ...] = ()

    def __iter__(self) -> Iterator[Intervention]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def active(self) -> tuple[Intervention, ...]:
        return tuple(e for e in self.entries if e.active)

    @property
    def is_empty(self) -> bool:
        return not self.active()

    def kinds(self) -> tuple[InterventionKind, ...]:
        return tuple(e.kind for e in self.active())

    def to_dict(self) -> list[dict]:
        return [
            {"source_id": e.source_id, "kind": e.kind.value, "valence": e.valence, "message": e.message}
            for e in self.entries
        ]


@dataclass(frozen=True)
class Reply:
    from_agent: str
    to_agent: str
    reply_content: str = ""
    reply_tone: ReplyTone = ReplyTone.NEUTRAL

    def to_dict(self) -> dict:
        return {
            "from_agent": self.from_agent,
            "to_agent": self.to_agent,
            "reply_content": self.reply_content,
            "reply_tone": self.reply_tone.value,
        }


# An empty tuple is the "no discussion" signal.
DiscussionSignal = tuple[Reply, ...]


@dataclass(frozen=True)
class CrowdAgentState:
    agent_id: str
    group_name: str
    population_size: int
    attitude: float
    epsilon: float
    cognitive_state: str = ""
    memory_trace: tuple[str, ...] = ()
    last_action: ActionKind = ActionKind.UPDATE_OPINION
    description: str = ""

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError(f"{self.agent_id}: population_size must be >= 1")
        if not -1.0 <= self.attitude <= 1.0:
            raise ValueError(f"{self.agent_id}: attitude {self.attitude} outside [-1, 1]")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"{self.agent_id}: epsilon {self.epsilon} outside [0, 1]")

    def remember(self, entry: str, cap: int) -> tuple[str, ...]:
        """Memory trace with ``entry`` appended, oldest entries evicted beyond ``cap``."""
        trace = self.memory_trace + (entry,)
        return trace[-cap:] if len(trace) > cap else trace


@dataclass(frozen=True)
class PopulationSignal:
    mean_attitude: float
    attitude_histogram: tuple[int, ...]
    total_active_population: int
    action_counts: Mapping[ActionKind, int]

    def to_dict(self) -> dict:
        return {
            "mean_attitude": self.mean_attitude,
            "attitude_histogram": list(self.attitude_histogram),
            "total_active_population": self.total_active_population,
            "action_counts": {k.value: v for k, v in self.action_counts.items()},
        }


# ---------------------------------------------------------------------------
# Scenario configuration
# ---------------------------------------------------------------------------

DEFAULT_MULTIPLIERS = {
    InterventionKind.PUBLICITY.value: 1.5,
    InterventionKind.ANNOUNCEMENT.value: 1.3,
    InterventionKind.RESPONSE.value: 1.2,
    InterventionKind.REFUTATION.value: 1.1,
    InterventionKind.PROHIBITION.value: 0.5,
    InterventionKind.INACTIVE.value: 1.0,
}


@dataclass(frozen=True)
class ScheduleEntry:
    t: int
    kind: InterventionKind
    valence: float = 0.0
    message: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", InterventionKind(self.kind))


@dataclass(frozen=True)
class SourceAgentSpec:
    id: str
    name: str = ""
    # "inherit" takes the run-wide source provider; otherwise one of
    # scripted / rules / remote.
    policy: str = "inherit"
    stance: float = 0.0
    policy_goal: str = ""
    schedule: tuple[ScheduleEntry, ...] = ()


@dataclass(frozen=True)
class AgentSpec:
    agent_id: str
    group_name: str
    population_size: int = 1000
    attitude: float | None = None
    epsilon: float | None = None
    cognitive_state: str = ""
    memory: tuple[str, ...] = ()


@dataclass(frozen=True)
class CrowdGenSpec:
    # "builtin" or a path relative to the scenario file
    graph: str = "builtin"
    # optional subgroup names per coarse template, handed to the scorer as hints
    candidates: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    initial_attitudes: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class CrowdSpec:
    agents: tuple[AgentSpec, ...] = ()
    generate: CrowdGenSpec | None = None


@dataclass(frozen=True)
class EngagementParams:
    mode: str = "default"  # default | provider
    alpha: float = 0.005
    multipliers: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_MULTIPLIERS))
    rho_like: float = 0.1
    rho_comment: float = 0.05
    rho_share: float = 0.02


@dataclass(frozen=True)
class RuleParams:
    gain: float = 0.5
    visibility_threshold: float = 0.1
    response_threshold: float = 0.6
    supportive_band: float = 0.2
    opposing_band: float = 0.6
    default_country: str = "China"


@dataclass(frozen=True)
class EngineParams:
    lam: float = 0.5
    topk_k: int = 2
    relevance_threshold: float = 0.7
    memory_cap: int = 32
    default_epsilon: float = 0.5
    init_attitude_low: float = -0.2
    init_attitude_high: float = 0.2
    # "complete" or an explicit list of undirected [agent_id, agent_id] edges
    adjacency: str | tuple[tuple[str, str], ...] = "complete"
    control_time_offset: int = 2
    comments_enabled: bool = True
    sources_enabled: bool = True
    engagement: EngagementParams = field(default_factory=EngagementParams)


@dataclass(frozen=True)
class ScriptedEntry:
    role: str
    response: Mapping[str, Any]
    t: int | None = None
    agent_id: str | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    event: Event
    source_agents: tuple[SourceAgentSpec, ...] = ()
    crowd: CrowdSpec = field(default_factory=CrowdSpec)
    engine: EngineParams = field(default_factory=EngineParams)
    rules: RuleParams = field(default_factory=RuleParams)
    scripted: tuple[ScriptedEntry, ...] = ()
    rng_seed: int = 0
    control: int | None = None
    schema_version: int = SCHEMA_VERSION

    @property
    def source_count(self) -> int:
        return len(self.source_agents)

    def schedule_entries(self) -> list[tuple[int, int, str, ScheduleEntry]]:
        """All schedule entries in chronological order.

        Ties on the same day keep source declaration order.
        """
        out = []
        for order, src in enumerate(self.source_agents):
            for entry in src.schedule:
                out.append((entry.t, order, src.id, entry))
        out.sort(key=lambda r: (r[0], r[1]))
        return out


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __iter__(self):
        return iter(self.violations)

    def __len__(self) -> int:
        return len(self.violations)


def _in(x, lo, hi) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x) and lo <= x <= hi


def validate_scenario(config: ScenarioConfig) -> ValidationReport:
    """Collect every range/consistency violation in ``config``. Never raises."""
    v: list[Violation] = []

    def bad(path, msg):
        v.append(Violation(path, msg))

    if config.schema_version != SCHEMA_VERSION:
        bad("schema_version", f"unsupported schema_version {config.schema_version}, expected {SCHEMA_VERSION}")

    ev = config.event
    if not ev.id:
        bad("event.id", "must be non-empty")
    if not isinstance(ev.horizon_T, int) or ev.horizon_T < 1:
        bad("event.horizon_T", "must be a positive integer")
    T = ev.horizon_T if isinstance(ev.horizon_T, int) else 0

    seen_src = set()
    for i, src in enumerate(config.source_agents):
        p = f"source_agents[{i}]"
        if not src.id:
            bad(f"{p}.id", "must be non-empty")
        if src.id in seen_src:
            bad(f"{p}.id", f"duplicate source id {src.id!r}")
        seen_src.add(src.id)
        if src.policy not in ("inherit", "scripted", "rules", "remote"):
            bad(f"{p}.policy", f"unknown policy {src.policy!r}")
        if not _in(src.stance, -1.0, 1.0):
            bad(f"{p}.stance", "must be in [-1, 1]")
        days = set()
        for j, e in enumerate(src.schedule):
            q = f"{p}.schedule[{j}]"
            if not isinstance(e.t, int) or not 1 <= e.t <= T:
                bad(f"{q}.t", f"must be in 1..{T}")
            if e.t in days:
                bad(f"{q}.t", f"source {src.id!r} already has an entry on day {e.t}")
            days.add(e.t)
            if not _in(e.valence, -1.0, 1.0):
                bad(f"{q}.valence", "must be in [-1, 1]")
            if e.kind is InterventionKind.INACTIVE and e.valence != 0:
                bad(f"{q}.valence", "must be 0 for Inactive")

    crowd = config.crowd
    eng = config.engine
    if bool(crowd.agents) == (crowd.generate is not None):
        bad("crowd", "exactly one of crowd.agents or crowd.generate must be given")
    ids = set()
    for i, a in enumerate(crowd.agents):
        p = f"crowd.agents[{i}]"
        if not a.agent_id:
            bad(f"{p}.agent_id", "must be non-empty")
        if a.agent_id in ids:
            bad(f"{p}.agent_id", f"duplicate agent id {a.agent_id!r}")
        ids.add(a.agent_id)
        if not isinstance(a.population_size, int) or a.population_size < 1:
            bad(f"{p}.population_size", f"agent {a.agent_id!r}: must be >= 1")
        if a.attitude is not None and not _in(a.attitude, -1.0, 1.0):
            bad(f"{p}.attitude", f"agent {a.agent_id!r}: attitude {a.attitude} outside [-1, 1]")
        if a.epsilon is not None and not _in(a.epsilon, 0.0, 1.0):
            bad(f"{p}.epsilon", f"agent {a.agent_id!r}: epsilon {a.epsilon} outside [0, 1]")
        if len(a.memory) > eng.memory_cap:
            bad(f"{p}.memory", f"agent {a.agent_id!r}: more entries than memory_cap {eng.memory_cap}")
    if crowd.generate is not None:
        for name, att in crowd.generate.initial_attitudes.items():
            if not _in(att, -1.0, 1.0):
                bad(f"crowd.generate.initial_attitudes.{name}", f"attitude {att} outside [-1, 1]")
    if isinstance(eng.adjacency, str):
        if eng.adjacency != "complete":
            bad("engine.adjacency", "must be 'complete' or a list of edges")
    else:
        for k, (a, b) in enumerate(eng.adjacency):
            if ids and (a not in ids or b not in ids):
                bad(f"engine.adjacency[{k}]", f"edge ({a}, {b}) references an unknown agent")
            if a == b:
                bad(f"engine.adjacency[{k}]", "self-loops are not stored")

    if not _in(eng.lam, 0.0, 1.0):
        bad("engine.lambda", "must be in [0, 1]")
    if not isinstance(eng.topk_k, int) or eng.topk_k < 1:
        bad("engine.topk_k", "must be a positive integer")
    if not _in(eng.relevance_threshold, 0.0, 1.0):
        bad("engine.relevance_threshold", "must be in [0, 1]")
    if not isinstance(eng.memory_cap, int) or eng.memory_cap < 1:
        bad("engine.memory_cap", "must be a positive integer")
    if not _in(eng.default_epsilon, 0.0, 1.0):
        bad("engine.default_epsilon", "must be in [0, 1]")
    if not (_in(eng.init_attitude_low, -1.0, 1.0) and _in(eng.init_attitude_high, -1.0, 1.0)) or (
        eng.init_attitude_low > eng.init_attitude_high
    ):
        bad("engine.init_attitude_low", "initial attitude range must be an ordered sub-interval of [-1, 1]")
    if not isinstance(eng.control_time_offset, int):
        bad("engine.control_time_offset", "must be an integer")

    ep = eng.engagement
    if ep.mode not in ("default", "provider"):
        bad("engine.engagement.mode", "must be 'default' or 'provider'")
    for name in ("alpha", "rho_like", "rho_comment", "rho_share"):
        if not _in(getattr(ep, name), 0.0, math.inf):
            bad(f"engine.engagement.{name}", "must be finite and >= 0")
    kinds = {k.value for k in InterventionKind}
    for k, m in ep.multipliers.items():
        if k not in kinds:
            bad(f"engine.engagement.multipliers.{k}", "unknown intervention kind")
        elif not _in(m, 0.0, math.inf):
            bad(f"engine.engagement.multipliers.{k}", "must be finite and >= 0")

    r = config.rules
    if not _in(r.gain, 0.0, 1.0):
        bad("rules.gain", "must be in [0, 1]")
    for name in ("visibility_threshold", "response_threshold", "supportive_band", "opposing_band"):
        if not _in(getattr(r, name), 0.0, 2.0):
            bad(f"rules.{name}", "must be in [0, 2]")

    for i, s in enumerate(config.scripted):
        if s.role not in ROLES:
            bad(f"scripted[{i}].role", f"unknown role {s.role!r}")

    if not isinstance(config.rng_seed, int) or not 0 <= config.rng_seed < 2**64:
        bad("rng_seed", "must be a 64-bit unsigned integer")
    if config.control is not None and config.control not in (1, 2, 3, 4, 5):
        bad("control", "control must be in 1..5")

    return ValidationReport(tuple(v))


ROLES = (
    "SourceAgent",
    "CrowdAction",
    "CrowdAttitude",
    "EventParser",
    "RelevanceScorer",
    "FallbackTemplates",
    "EngagementHint",
)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _event_to_dict(ev: Event) -> dict:
    d = {
        "id": ev.id,
        "title": ev.title,
        "content": ev.content,
        "domain": ev.domain,
        "country": ev.country,
        "horizon_T": ev.horizon_T,
    }
    if ev.trajectory:
        d["trajectory"] = [list(y.as_tuple()) for y in ev.trajectory]
    return d


def _plain(obj) -> Any:
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (tuple, list)):
        return [_plain(x) for x in obj]
    if hasattr(obj, "__dataclass_fields__"):
        out = {}
        for f in fields(obj):
            val = getattr(obj, f.name)
            if val is None:
                continue
            out["lambda" if f.name == "lam" else f.name] = _plain(val)
        return out
    return obj


def config_to_dict(config: ScenarioConfig) -> dict:
    sources = []
    for s in config.source_agents:
        d = _plain(s)
        if not s.schedule:
            d.pop("schedule")
        sources.append(d)
    crowd: dict = {}
    if config.crowd.agents:
        crowd["agents"] = [_plain(a) for a in config.crowd.agents]
        for a in crowd["agents"]:
            if not a.get("memory"):
                a.pop("memory", None)
    if config.crowd.generate is not None:
        crowd["generate"] = _plain(config.crowd.generate)
    out = {
        "schema_version": config.schema_version,
        "event": _event_to_dict(config.event),
        "source_agents": sources,
        "crowd": crowd,
        "engine": _plain(config.engine),
        "rules": _plain(config.rules),
    }
    if config.scripted:
        out["scripted"] = [_plain(s) for s in config.scripted]
    out["rng_seed"] = config.rng_seed
    if config.control is not None:
        out["control"] = config.control
    return out


def _req(d: Mapping, key: str, where: str):
    if key not in d:
        raise ScenarioError(f"{where}: missing required key {key!r}")
    return d[key]


def _num(x, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ScenarioError(f"{where}: expected a number, got {x!r}")
    return float(x)


def _int(x, where: str) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise ScenarioError(f"{where}: expected an integer, got {x!r}")
    return x


def _kind(x, where: str) -> InterventionKind:
    try:
        return InterventionKind(x)
    except ValueError:
        raise ScenarioError(f"{where}: unknown intervention kind {x!r}") from None


def _only(d: Mapping, allowed: set[str], where: str):
    extra = set(d) - allowed
    if extra:
        raise ScenarioError(f"{where}: unknown keys {sorted(extra)}")


def _dataclass_from(cls, d: Mapping | None, where: str, renames=None, nested=None):
    """Build a flat dataclass of scalars from a mapping, coercing numbers by the default's type."""
    d = dict(d or {})
    renames = renames or {}
    nested = nested or {}
    kwargs = {}
    names = {f.name: f for f in fields(cls)}
    proto = cls()
    keys = {renames.get(n, n) for n in names}
    _only(d, keys, where)
    for name, f in names.items():
        key = renames.get(name, name)
        if key not in d:
            continue
        val = d[key]
        if name in nested:
            kwargs[name] = nested[name](val, f"{where}.{key}")
            continue
        default = getattr(proto, name)
        if isinstance(default, bool):
            if not isinstance(val, bool):
                raise ScenarioError(f"{where}.{key}: expected a boolean")
            kwargs[name] = val
        elif isinstance(default, float):
            kwargs[name] = _num(val, f"{where}.{key}")
        elif isinstance(default, int):
            kwargs[name] = _int(val, f"{where}.{key}")
        else:
            kwargs[name] = val
    return cls(**kwargs)


def _engagement_from(d, where) -> EngagementParams:
    def mults(m, w):
        if not isinstance(m, Mapping):
            raise ScenarioError(f"{w}: expected a mapping")
        return {str(k): _num(v, f"{w}.{k}") for k, v in m.items()}

    return _dataclass_from(EngagementParams, d, where, nested={"multipliers": mults})


def _adjacency_from(x, where):
    if isinstance(x, str):
        return x
    if not isinstance(x, list):
        raise ScenarioError(f"{where}: expected 'complete' or a list of edges")
    edges = []
    for e in x:
        if not isinstance(e, list) or len(e) != 2:
            raise ScenarioError(f"{where}: each edge must be a two-element list")
        edges.append((str(e[0]), str(e[1])))
    return tuple(edges)


def config_from_dict(d: Mapping) -> ScenarioConfig:
    if not isinstance(d, Mapping):
        raise ScenarioError("scenario root must be a mapping")
    _only(d, {"schema_version", "event", "source_agents", "crowd", "engine", "rules", "scripted", "rng_seed", "control"}, "scenario")

    e = _req(d, "event", "scenario")
    if not isinstance(e, Mapping):
        raise ScenarioError("event: expected a mapping")
    _only(e, {"id", "title", "content", "domain", "country", "horizon_T", "trajectory"}, "event")
    traj = tuple(EngagementVector(*(_num(c, "event.trajectory") for c in y)) for y in e.get("trajectory", []))
    try:
        event = Event(
            id=str(_req(e, "id", "event")),
            title=str(e.get("title", "")),
            content=str(e.get("content", "")),
            domain=str(e.get("domain", "")),
            country=str(e.get("country", "")),
            horizon_T=_int(e.get("horizon_T", 7), "event.horizon_T"),
            trajectory=traj,
        )
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"event: {exc}") from None

    sources = []
    for i, s in enumerate(d.get("source_agents") or []):
        where = f"source_agents[{i}]"
        if not isinstance(s, Mapping):
            raise ScenarioError(f"{where}: expected a mapping")
        _only(s, {"id", "name", "policy", "stance", "policy_goal", "schedule"}, where)
        sched = []
        for j, en in enumerate(s.get("schedule") or []):
            w = f"{where}.schedule[{j}]"
            _only(en, {"t", "kind", "valence", "message"}, w)
            sched.append(
                ScheduleEntry(
                    t=_int(_req(en, "t", w), f"{w}.t"),
                    kind=_kind(_req(en, "kind", w), f"{w}.kind"),
                    valence=_num(en.get("valence", 0.0), f"{w}.valence"),
                    message=str(en.get("message", "")),
                )
            )
        sources.append(
            SourceAgentSpec(
                id=str(_req(s, "id", where)),
                name=str(s.get("name", "")),
                policy=str(s.get("policy", "inherit")),
                stance=_num(s.get("stance", 0.0), f"{where}.stance"),
                policy_goal=str(s.get("policy_goal", "")),
                schedule=tuple(sched),
            )
        )

    c = d.get("crowd") or {}
    _only(c, {"agents", "generate"}, "crowd")
    agents = []
    for i, a in enumerate(c.get("agents") or []):
        where = f"crowd.agents[{i}]"
        _only(a, {f.name for f in fields(AgentSpec)}, where)
        agents.append(
            AgentSpec(
                agent_id=str(_req(a, "agent_id", where)),
                group_name=str(a.get("group_name", a["agent_id"])),
                population_size=_int(a.get("population_size", 1000), f"{where}.population_size"),
                attitude=None if a.get("attitude") is None else _num(a["attitude"], f"{where}.attitude"),
                epsilon=None if a.get("epsilon") is None else _num(a["epsilon"], f"{where}.epsilon"),
                cognitive_state=str(a.get("cognitive_state", "")),
                memory=tuple(str(m) for m in a.get("memory") or []),
            )
        )
    gen = None
    if c.get("generate") is not None:
        g = c["generate"]
        _only(g, {"graph", "candidates", "initial_attitudes"}, "crowd.generate")
        gen = CrowdGenSpec(
            graph=str(g.get("graph", "builtin")),
            candidates={str(k): tuple(str(x) for x in v) for k, v in (g.get("candidates") or {}).items()},
            initial_attitudes={
                str(k): _num(v, f"crowd.generate.initial_attitudes.{k}")
                for k, v in (g.get("initial_attitudes") or {}).items()
            },
        )

    engine = _dataclass_from(
        EngineParams,
        d.get("engine"),
        "engine",
        renames={"lam": "lambda"},
        nested={"engagement": _engagement_from, "adjacency": _adjacency_from},
    )
    rules = _dataclass_from(RuleParams, d.get("rules"), "rules")

    scripted = []
    for i, s in enumerate(d.get("scripted") or []):
        where = f"scripted[{i}]"
        _only(s, {"role", "t", "agent_id", "response"}, where)
        resp = _req(s, "response", where)
        if not isinstance(resp, Mapping):
            raise ScenarioError(f"{where}.response: expected a mapping")
        scripted.append(
            ScriptedEntry(
                role=str(_req(s, "role", where)),
                response=dict(resp),
                t=None if s.get("t") is None else _int(s["t"], f"{where}.t"),
                agent_id=None if s.get("agent_id") is None else str(s["agent_id"]),
            )
        )

    control = d.get("control")
    return ScenarioConfig(
        event=event,
        source_agents=tuple(sources),
        crowd=CrowdSpec(agents=tuple(agents), generate=gen),
        engine=engine,
        rules=rules,
        scripted=tuple(scripted),
        rng_seed=_int(d.get("rng_seed", 0), "rng_seed"),
        control=None if control is None else _int(control, "control"),
        schema_version=_int(d.get("schema_version", SCHEMA_VERSION), "schema_version"),
    )


def dumps_scenario(config: ScenarioConfig) -> str:
    return yaml.safe_dump(config_to_dict(config), sort_keys=False, allow_unicode=True, width=100)


def loads_scenario(text: str) -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"invalid YAML: {exc}") from None
    return config_from_dict(data)


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
    return loads_scenario(text)


def save_scenario(config: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(dumps_scenario(config), encoding="utf-8")
