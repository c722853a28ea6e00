"""Two-stage crowd generation.

Coarse stage: the event's (domain, country) keys a breadth-first lookup in a
hierarchical group graph; a missing branch is filled from the provider and
committed to the graph so later lookups hit it. Fine stage: each coarse
template is expanded into candidate subgroups, each scored by a blend of
embedding similarity and a provider relevance score, and the TopK union the
above-threshold candidates become crowd agents.
"""

from __future__ import annotations

import copy
import hashlib
import logging
import re
import threading
from collections import deque
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np
import yaml

from .errors import (
    EmptyCandidatePool,
    EmptyCrowd,
    EncoderMismatch,
    MalformedParserOutput,
    MalformedPolicyOutput,
    ParserUnavailable,
    ProviderUnavailable,
    ScenarioError,
    ScorerOutOfRange,
)
from .model import AgentSpec, CrowdAgentState, EngineParams, Event, ScenarioConfig, clamp
from .providers import PolicyRequest, Role

log = logging.getLogger(__name__)

GRAPH_SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Group graph
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PopulationTemplate:
    name: str
    description: str = ""
    population_size: int = 10000


@dataclass
class GroupNode:
    name: str
    templates: list[PopulationTemplate] = field(default_factory=list)
    children: list[GroupNode] = field(default_factory=list)

    def child(self, name: str) -> GroupNode | None:
        for c in self.children:
            if c.name.casefold() == name.casefold():
                return c
        return None


class GroupGraph:
    """Rooted tree of population templates keyed by country, then domain.

    Readers take :meth:`snapshot` or call :func:`bfs_retrieve_templates`;
    writers go through :meth:`commit_branch`, which holds the graph lock.
    """

    def __init__(self, root: GroupNode):
        self.root = root
        self._lock = threading.RLock()
        problems = self.problems()
        if problems:
            raise ScenarioError("invalid group graph: " + "; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        seen: set[int] = set()
        stack = [(self.root, self.root.name)]
        while stack:
            node, path = stack.pop()
            if id(node) in seen:
                out.append(f"{path}: node reachable twice (cycle or shared subtree)")
                continue
            seen.add(id(node))
            if not node.name:
                out.append(f"{path}: empty node name")
            names = [c.name.casefold() for c in node.children]
            if len(names) != len(set(names)):
                out.append(f"{path}: duplicate child names")
            for t in node.templates:
                if not t.name.strip():
                    out.append(f"{path}: template with empty name")
            stack.extend((c, f"{path}/{c.name}") for c in node.children)
        return out

    def snapshot(self) -> GroupGraph:
        with self._lock:
            return GroupGraph(copy.deepcopy(self.root))

    def commit_branch(self, country: str, domain: str, templates: Sequence[PopulationTemplate]) -> None:
        with self._lock:
            node = self.root
            for name in (country, domain):
                nxt = node.child(name)
                if nxt is None:
                    nxt = GroupNode(name)
                    node.children.append(nxt)
                node = nxt
            node.templates = list(templates)

    # -- persistence ------------------------------------------------------

    def to_dict(self) -> dict:
        def enc(n: GroupNode) -> dict:
            d: dict[str, Any] = {"name": n.name}
            if n.templates:
                d["templates"] = [
                    {"name": t.name, "description": t.description, "population_size": t.population_size}
                    for t in n.templates
                ]
            if n.children:
                d["children"] = [enc(c) for c in n.children]
            return d

        with self._lock:
            return {"schema_version": GRAPH_SCHEMA_VERSION, "root": enc(self.root)}

    @classmethod
    def from_dict(cls, d: Mapping) -> GroupGraph:
        if not isinstance(d, Mapping) or "root" not in d:
            raise ScenarioError("group graph needs a root node")
        if d.get("schema_version", GRAPH_SCHEMA_VERSION) != GRAPH_SCHEMA_VERSION:
            raise ScenarioError(f"unsupported group graph schema_version {d.get('schema_version')}")

        def dec(n) -> GroupNode:
            if not isinstance(n, Mapping) or "name" not in n:
                raise ScenarioError("every group node needs a name")
            temps = []
            for t in n.get("templates") or []:
                if isinstance(t, str):
                    t = {"name": t}
                temps.append(
                    PopulationTemplate(
                        str(t.get("name", "")),
                        str(t.get("description", "")),
                        int(t.get("population_size", 10000)),
                    )
                )
            return GroupNode(str(n["name"]), temps, [dec(c) for c in n.get("children") or []])

        return cls(dec(d["root"]))

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, allow_unicode=True)

    @classmethod
    def load(cls, path: str | Path) -> GroupGraph:
        try:
            return cls.from_dict(yaml.safe_load(Path(path).read_text(encoding="utf-8")))
        except (OSError, yaml.YAMLError) as exc:
            raise ScenarioError(f"cannot read group graph {path}: {exc}") from None

    @classmethod
    def builtin(cls) -> GroupGraph:
        text = (resources.files("socialsim") / "data" / "groups.yaml").read_text(encoding="utf-8")
        return cls.from_dict(yaml.safe_load(text))


def bfs_retrieve_templates(graph: GroupGraph, domain: str, country: str) -> list[PopulationTemplate]:
    """Templates of the shallowest node named ``domain`` below a node named ``country``.

    Ties at equal depth go to the node met first in level order. Returns an
    empty list when no such branch exists.
    """
    dom, ctry = domain.casefold(), country.casefold()
    with graph._lock:
        queue = deque([(graph.root, False)])
        while queue:
            node, under_country = queue.popleft()
            if under_country and node.name.casefold() == dom:
                return list(node.templates)
            inside = under_country or node.name.casefold() == ctry
            queue.extend((c, inside) for c in node.children)
    return []


def fallback_templates(
    graph: GroupGraph, event: Event, provider, domain: str | None = None, country: str | None = None
) -> list[PopulationTemplate]:
    """Ask the provider for templates of a missing branch and commit them to ``graph``."""
    domain = domain or event.domain
    country = country or event.country
    resp = provider.respond(
        PolicyRequest(
            Role.FALLBACK_TEMPLATES,
            0,
            None,
            {"event_description": event.description, "domain": domain, "country": country},
        )
    )
    temps = [PopulationTemplate(t["name"], t.get("description", ""), int(t.get("population_size", 10000))) for t in resp.templates]
    if temps:
        graph.commit_branch(country, domain, temps)
    return temps


def retrieve_templates(graph: GroupGraph, event: Event, provider) -> list[PopulationTemplate]:
    temps = bfs_retrieve_templates(graph, event.domain, event.country)
    if temps:
        return temps
    log.info("no group branch for (%s, %s); using fallback", event.country, event.domain)
    return fallback_templates(graph, event, provider)


def parse_event_attributes(event_text: str, parser) -> tuple[str, str]:
    if not event_text or not event_text.strip():
        raise MalformedParserOutput("event text is empty")
    try:
        resp = parser.respond(PolicyRequest(Role.EVENT_PARSER, 0, None, {"event_description": event_text}))
    except ProviderUnavailable as exc:
        raise ParserUnavailable(str(exc)) from exc
    except MalformedParserOutput:
        raise
    except MalformedPolicyOutput as exc:
        raise MalformedParserOutput(str(exc), raw=exc.raw) from exc
    if not resp.domain or not resp.country:
        raise MalformedParserOutput("parser response lacks domain or country", raw=resp.reasoning_trace)
    return resp.domain, resp.country


# ---------------------------------------------------------------------------
# Relevance scoring and selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CandidateSubgroup:
    name: str
    parent_template: str = ""
    description: str = ""
    relevance: float = 0.0
    population_size: int = 1000

    @property
    def text(self) -> str:
        return f"{self.name} {self.description}".strip()


class Encoder(Protocol):
    def encode(self, text: str) -> np.ndarray: ...


_TOKEN = re.compile(r"[\w']+")


class HashingEncoder:
    """Signed hashed bag-of-words; deterministic across processes."""

    def __init__(self, dim: int = 256):
        self.dim = dim

    def encode(self, text: str) -> np.ndarray:
        v = np.zeros(self.dim)
        for tok in _TOKEN.findall(text.lower()):
            h = int.from_bytes(hashlib.blake2b(tok.encode(), digest_size=8).digest(), "little")
            v[h % self.dim] += 1.0 if (h >> 63) & 1 == 0 else -1.0
        return v


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise EncoderMismatch(f"embedding lengths differ: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise EncoderMismatch("cannot take cosine of an all-zero embedding")
    return float(np.dot(u, v) / (nu * nv))


Scorer = Callable[[CandidateSubgroup, Event], float]


def relevance_score(candidate: CandidateSubgroup, event: Event, encoder: Encoder, scorer: Scorer, lam: float) -> float:
    """``lam * cos + (1 - lam) * psi`` with the cosine clamped to [0, 1]."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda {lam} outside [0, 1]")
    cos = clamp(cosine(encoder.encode(candidate.text), encoder.encode(event.description)), 0.0, 1.0)
    psi = float(scorer(candidate, event))
    if not 0.0 <= psi <= 1.0:
        raise ScorerOutOfRange(f"psi {psi} for {candidate.name!r} outside [0, 1]")
    return clamp(lam * cos + (1.0 - lam) * psi, 0.0, 1.0)


def select_subgroups(candidates: Iterable[CandidateSubgroup], topk_k: int, threshold: float = 0.7) -> list[CandidateSubgroup]:
    """TopK by score, united with every candidate at or above ``threshold``.

    Duplicate names keep their best score; ties order by name, so the result
    does not depend on input order.
    """
    best: dict[str, CandidateSubgroup] = {}
    for c in candidates:
        if c.name not in best or c.relevance > best[c.name].relevance:
            best[c.name] = c
    if not best:
        raise EmptyCandidatePool("no candidate subgroups to select from")
    if topk_k < 1:
        raise ValueError("topk_k must be positive")
    ranked = sorted(best.values(), key=lambda c: (-c.relevance, c.name))
    return [c for i, c in enumerate(ranked) if i < topk_k or c.relevance >= threshold]


def specialize(
    template: PopulationTemplate,
    event: Event,
    encoder: Encoder,
    provider,
    params: EngineParams,
    hints: Sequence[str] = (),
) -> list[CandidateSubgroup]:
    """Expand one coarse template into its selected fine-grained subgroups."""
    resp = provider.respond(
        PolicyRequest(
            Role.RELEVANCE_SCORER,
            0,
            template.name,
            {
                "event_description": event.description,
                "group_node": template.name,
                "group_description": template.description,
                "candidates": list(hints),
            },
        )
    )
    psi = dict(resp.subgroups)
    context = f"{template.name}: {template.description}" if template.description else template.name
    pool = [CandidateSubgroup(name, template.name, context) for name in psi]
    if not pool:
        raise EmptyCandidatePool(f"scorer produced no subgroups for {template.name!r}")
    scored = [replace(c, relevance=relevance_score(c, event, encoder, lambda c, e: psi[c.name], params.lam)) for c in pool]
    chosen = select_subgroups(scored, params.topk_k, params.relevance_threshold)
    share = max(1, template.population_size // len(chosen))
    return [replace(c, population_size=share) for c in chosen]


# ---------------------------------------------------------------------------
# Instantiation
# ---------------------------------------------------------------------------


def _slug(s: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", s.lower()).strip("_") or "group"


def instantiate_crowd(
    selected: Sequence[CandidateSubgroup],
    defaults: EngineParams,
    seed: int,
    initial_attitudes: Mapping[str, float] | None = None,
) -> list[CrowdAgentState]:
    """One agent per subgroup; attitudes drawn uniformly from the configured range.

    A draw is consumed for every subgroup even when overridden, so an
    override never shifts the attitudes of the others.
    """
    if not selected:
        raise ValueError("cannot instantiate a crowd from an empty selection")
    overrides = initial_attitudes or {}
    rng = np.random.default_rng(seed)
    draws = rng.uniform(defaults.init_attitude_low, defaults.init_attitude_high, size=len(selected))
    agents, used = [], set()
    for c, draw in zip(selected, draws):
        aid = _slug(f"{c.parent_template} {c.name}") if c.parent_template else _slug(c.name)
        base, k = aid, 2
        while aid in used:
            aid, k = f"{base}_{k}", k + 1
        used.add(aid)
        agents.append(
            CrowdAgentState(
                agent_id=aid,
                group_name=c.name,
                population_size=c.population_size,
                attitude=float(overrides.get(c.name, draw)),
                epsilon=defaults.default_epsilon,
                cognitive_state=f"{c.name}: no settled view yet",
                description=c.description,
            )
        )
    return agents


def crowd_from_specs(specs: Sequence[AgentSpec], defaults: EngineParams, seed: int) -> list[CrowdAgentState]:
    rng = np.random.default_rng(seed)
    draws = rng.uniform(defaults.init_attitude_low, defaults.init_attitude_high, size=len(specs))
    return [
        CrowdAgentState(
            agent_id=s.agent_id,
            group_name=s.group_name,
            population_size=s.population_size,
            attitude=float(draw) if s.attitude is None else s.attitude,
            epsilon=defaults.default_epsilon if s.epsilon is None else s.epsilon,
            cognitive_state=s.cognitive_state or f"{s.group_name}: no settled view yet",
            memory_trace=tuple(s.memory),
        )
        for s, draw in zip(specs, draws)
    ]


def build_crowd(
    config: ScenarioConfig,
    provider,
    encoder: Encoder | None = None,
    base_dir: str | Path | None = None,
    graph: GroupGraph | None = None,
) -> tuple[Event, list[CrowdAgentState]]:
    """Resolve the scenario's crowd, parsing event attributes when missing."""
    event = config.event
    if config.crowd.agents:
        return event, crowd_from_specs(config.crowd.agents, config.engine, config.rng_seed)
    gen = config.crowd.generate
    if gen is None:
        raise EmptyCrowd("scenario defines no crowd")
    if not event.domain or not event.country:
        domain, country = parse_event_attributes(event.description, provider)
        event = replace(event, domain=event.domain or domain, country=event.country or country)
    if graph is None:
        if gen.graph == "builtin":
            graph = GroupGraph.builtin()
        else:
            path = Path(gen.graph)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            graph = GroupGraph.load(path)
    encoder = encoder or HashingEncoder()
    selected: list[CandidateSubgroup] = []
    for tpl in retrieve_templates(graph, event, provider):
        selected.extend(specialize(tpl, event, encoder, provider, config.engine, gen.candidates.get(tpl.name, ())))
    if not selected:
        raise EmptyCrowd(f"no crowd could be generated for ({event.country}, {event.domain})")
    return event, instantiate_crowd(selected, config.engine, config.rng_seed, gen.initial_attitudes)
