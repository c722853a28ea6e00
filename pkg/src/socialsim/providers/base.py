from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Protocol

from ..errors import MalformedParserOutput, MalformedPolicyOutput
from ..model import ActionKind, EngagementVector, InterventionKind, ReplyTone


class Role(str, Enum):
    SOURCE_AGENT = "SourceAgent"
    CROWD_ACTION = "CrowdAction"
    CROWD_ATTITUDE = "CrowdAttitude"
    EVENT_PARSER = "EventParser"
    RELEVANCE_SCORER = "RelevanceScorer"
    FALLBACK_TEMPLATES = "FallbackTemplates"
    ENGAGEMENT_HINT = "EngagementHint"


@dataclass(frozen=True)
class PolicyRequest:
    role: Role
    t: int
    agent_id: str | None
    payload: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ReplySpec:
    target_agent_id: str
    reply_content: str = ""
    reply_tone: ReplyTone = ReplyTone.NEUTRAL


@dataclass(frozen=True)
class PolicyResponse:
    """Role-dependent provider answer. Unused fields stay ``None``/empty."""

    role: Role
    intervention: InterventionKind | None = None
    valence: float | None = None
    message: str = ""
    action: ActionKind | None = None
    epsilon: float | None = None
    replies: tuple[ReplySpec, ...] = ()
    updated_opinion: float | None = None
    cognitive_state: str | None = None
    engagement: EngagementVector | None = None
    subgroups: tuple[tuple[str, float], ...] = ()
    domain: str | None = None
    country: str | None = None
    templates: tuple[Mapping[str, Any], ...] = ()
    reasoning_trace: str = ""

    def __post_init__(self):
        def out(msg):
            raise MalformedPolicyOutput(f"{self.role.value}: {msg}", raw=self.reasoning_trace)

        if self.valence is not None and not -1.0 <= self.valence <= 1.0:
            out(f"valence {self.valence} outside [-1, 1]")
        if self.epsilon is not None and not 0.0 <= self.epsilon <= 1.0:
            out(f"epsilon {self.epsilon} outside [0, 1]")
        if self.updated_opinion is not None and not -1.0 <= self.updated_opinion <= 1.0:
            out(f"updated_opinion {self.updated_opinion} outside [-1, 1]")
        for name, rel in self.subgroups:
            if not 0.0 <= rel <= 1.0:
                out(f"relevance {rel} for {name!r} outside [0, 1]")
        if self.action is ActionKind.SELECT_PARTNER and self.epsilon is None:
            out("SelectPartner requires epsilon")

    @classmethod
    def from_dict(cls, role: Role | str, data: Mapping[str, Any], raw: str | None = None) -> PolicyResponse:
        """Parse a structured response (scripted entry or decoded remote JSON)."""
        return parse_response(Role(role), data, raw)


class PolicyProvider(Protocol):
    def respond(self, request: PolicyRequest) -> PolicyResponse: ...


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _number(x, what: str, raw) -> float:
    if isinstance(x, bool):
        raise MalformedPolicyOutput(f"{what}: expected a number, got {x!r}", raw=raw)
    try:
        v = float(x)
    except (TypeError, ValueError):
        raise MalformedPolicyOutput(f"{what}: expected a number, got {x!r}", raw=raw) from None
    if not math.isfinite(v):
        raise MalformedPolicyOutput(f"{what}: non-finite value {x!r}", raw=raw)
    return v


_INACTIVE_WORDS = {"", "none", "inactive", "null", "no intervention"}


def _intervention(x, raw) -> InterventionKind:
    if x is None or (isinstance(x, str) and x.strip().lower() in _INACTIVE_WORDS):
        return InterventionKind.INACTIVE
    if isinstance(x, str):
        for kind in InterventionKind:
            if x.strip().lower() == kind.value.lower():
                return kind
    raise MalformedPolicyOutput(f"unknown intervention {x!r}", raw=raw)


def _action(x, raw) -> ActionKind:
    if isinstance(x, str):
        for kind in ActionKind:
            if x.strip().lower() == kind.value.lower():
                return kind
    raise MalformedPolicyOutput(f"unknown action {x!r}", raw=raw)


def _tone(x, raw) -> ReplyTone:
    try:
        return ReplyTone(str(x).strip().lower())
    except ValueError:
        raise MalformedPolicyOutput(f"unknown reply tone {x!r}", raw=raw) from None


def parse_response(role: Role, d: Mapping[str, Any], raw: str | None = None) -> PolicyResponse:
    if not isinstance(d, Mapping):
        raise MalformedPolicyOutput(f"{role.value}: response is not an object", raw=raw)
    trace = str(d.get("reasoning_trace", "") or "")
    if raw is None:
        raw = trace
    kw: dict[str, Any] = {"role": role, "reasoning_trace": trace}

    if role is Role.SOURCE_AGENT:
        key = "selected_intervention" if "selected_intervention" in d else "intervention"
        if key not in d:
            raise MalformedPolicyOutput("source response missing selected_intervention", raw=raw)
        kind = _intervention(d[key], raw)
        kw["intervention"] = kind
        if kind is InterventionKind.INACTIVE:
            kw["valence"] = 0.0
        elif d.get("valence") is not None:
            kw["valence"] = _number(d["valence"], "valence", raw)
        kw["message"] = str(d.get("message", d.get("expected_effect", "")) or "")

    elif role is Role.CROWD_ACTION:
        key = "selected_action" if "selected_action" in d else "action"
        if key not in d:
            raise MalformedPolicyOutput("action response missing selected_action", raw=raw)
        action = _action(d[key], raw)
        kw["action"] = action
        if action is ActionKind.SELECT_PARTNER:
            if "epsilon" not in d:
                raise MalformedPolicyOutput("SelectPartner response missing epsilon", raw=raw)
            kw["epsilon"] = _number(d["epsilon"], "epsilon", raw)
        elif action is ActionKind.DISCUSS_OPINION:
            replies = d.get("responses", [])
            if not isinstance(replies, list):
                raise MalformedPolicyOutput("responses must be a list", raw=raw)
            out = []
            for r in replies:
                if not isinstance(r, Mapping) or "target_agent_id" not in r:
                    raise MalformedPolicyOutput("each response needs target_agent_id", raw=raw)
                out.append(
                    ReplySpec(
                        str(r["target_agent_id"]),
                        str(r.get("reply_content", "")),
                        _tone(r.get("reply_tone", "neutral"), raw),
                    )
                )
            kw["replies"] = tuple(out)
        elif d.get("updated_opinion") is not None:
            kw["updated_opinion"] = _number(d["updated_opinion"], "updated_opinion", raw)

    elif role is Role.CROWD_ATTITUDE:
        if "updated_opinion" not in d:
            raise MalformedPolicyOutput("attitude response missing updated_opinion", raw=raw)
        kw["updated_opinion"] = _number(d["updated_opinion"], "updated_opinion", raw)
        state = d.get("cognitive_state", d.get("update_reason"))
        kw["cognitive_state"] = None if state is None else str(state)

    elif role is Role.ENGAGEMENT_HINT:
        ev = d.get("engagement_vector")
        if not isinstance(ev, Mapping):
            raise MalformedPolicyOutput("engagement response missing engagement_vector", raw=raw)
        try:
            vals = [_number(ev[k], k, raw) for k in ("views", "likes", "comments", "shares")]
            kw["engagement"] = EngagementVector(*vals)
        except KeyError as exc:
            raise MalformedPolicyOutput(f"engagement_vector missing {exc}", raw=raw) from None
        except ValueError as exc:
            raise MalformedPolicyOutput(str(exc), raw=raw) from None

    elif role is Role.RELEVANCE_SCORER:
        groups = d.get("generated_subgroups")
        if not isinstance(groups, list):
            raise MalformedPolicyOutput("relevance response missing generated_subgroups", raw=raw)
        subs = []
        for g in groups:
            if not isinstance(g, Mapping) or "name" not in g or "relevance" not in g:
                raise MalformedPolicyOutput("each subgroup needs name and relevance", raw=raw)
            subs.append((str(g["name"]), _number(g["relevance"], "relevance", raw)))
        kw["subgroups"] = tuple(subs)

    elif role is Role.EVENT_PARSER:
        dom, ctry = d.get("domain"), d.get("country")
        if not (isinstance(dom, str) and dom.strip() and isinstance(ctry, str) and ctry.strip()):
            raise MalformedParserOutput("parser response needs non-empty domain and country", raw=raw)
        kw["domain"], kw["country"] = dom.strip(), ctry.strip()

    elif role is Role.FALLBACK_TEMPLATES:
        temps = d.get("templates")
        if not isinstance(temps, list):
            raise MalformedPolicyOutput("fallback response missing templates", raw=raw)
        out = []
        for tpl in temps:
            if isinstance(tpl, str):
                tpl = {"name": tpl}
            if not isinstance(tpl, Mapping) or not str(tpl.get("name", "")).strip():
                raise MalformedPolicyOutput("each template needs a name", raw=raw)
            out.append(
                {
                    "name": str(tpl["name"]).strip(),
                    "description": str(tpl.get("description", "")),
                    "population_size": int(_number(tpl.get("population_size", 10000), "population_size", raw)),
                }
            )
        kw["templates"] = tuple(out)

    return PolicyResponse(**kw)


_TRAILING_COMMA = re.compile(r",\s*([}\]])")


def extract_json_block(text: str) -> tuple[dict, str]:
    """Return the first well-formed JSON object in ``text`` and the text around it.

    A second pass tolerates trailing commas, which chat models copy from
    loosely written format examples.
    """
    dec = json.JSONDecoder()
    for candidate in (text, _TRAILING_COMMA.sub(r"\1", text)):
        pos = candidate.find("{")
        while pos != -1:
            try:
                obj, end = dec.raw_decode(candidate, pos)
            except json.JSONDecodeError:
                pos = candidate.find("{", pos + 1)
                continue
            if isinstance(obj, dict):
                rest = (candidate[:pos] + candidate[end:]).strip()
                return obj, rest
            pos = candidate.find("{", end)
    raise MalformedPolicyOutput("no JSON object found in provider output", raw=text)
