"""Deterministic rule-based provider standing in for LLM reasoning."""

from __future__ import annotations

import re

from ..dynamics import rule_attitude, signal_valences
from ..model import ActionKind, EngagementVector, InterventionKind, ReplyTone, RuleParams, clamp
from .base import PolicyRequest, PolicyResponse, ReplySpec, Role

# SelectPartner -> DiscussOpinion -> UpdateOpinion -> SelectPartner
ACTION_CYCLE = {
    ActionKind.SELECT_PARTNER: ActionKind.DISCUSS_OPINION,
    ActionKind.DISCUSS_OPINION: ActionKind.UPDATE_OPINION,
    ActionKind.UPDATE_OPINION: ActionKind.SELECT_PARTNER,
}

DOMAIN_KEYWORDS = {
    "Education": ("school", "student", "students", "university", "teacher", "cafeteria", "freshmen", "professor",
                  "academic", "admission", "vocational", "campus"),
    "Sports": ("football", "coach", "team", "match", "olympic", "league"),
    "Economy": ("financial", "market", "bank", "stock", "economy", "price"),
    "Politics": ("policy", "government", "retirement", "election", "law", "statutory"),
    "Society": ("missing", "accident", "fire", "police", "community"),
}

_WORD = re.compile(r"[a-z0-9]+")


def _tokens(text: str) -> set[str]:
    return set(_WORD.findall(text.lower()))


class RuleBasedProvider:
    """Pure function of the request; identical requests give identical answers.

    Source agents publicize while the event is barely visible, respond when
    the crowd is strongly one-sided, and otherwise stay quiet. Crowd agents
    cycle SelectPartner -> DiscussOpinion -> UpdateOpinion.
    """

    def __init__(self, params: RuleParams | None = None):
        self.params = params or RuleParams()

    def respond(self, request: PolicyRequest) -> PolicyResponse:
        handler = getattr(self, "_" + request.role.value)
        return handler(request.payload)

    def _SourceAgent(self, p) -> PolicyResponse:
        stance = float(p.get("stance", 0.0))
        if float(p.get("visibility", 0.0)) < self.params.visibility_threshold:
            kind = InterventionKind.PUBLICITY
        elif abs(float(p.get("mean_attitude", 0.0))) > self.params.response_threshold:
            kind = InterventionKind.RESPONSE
        else:
            kind = InterventionKind.INACTIVE
        valence = 0.0 if kind is InterventionKind.INACTIVE else stance
        return PolicyResponse(
            Role.SOURCE_AGENT,
            intervention=kind,
            valence=valence,
            reasoning_trace=f"visibility={p.get('visibility')} mean_attitude={p.get('mean_attitude')} -> {kind.value}",
        )

    def _CrowdAction(self, p) -> PolicyResponse:
        last = ActionKind(p.get("last_action", ActionKind.UPDATE_OPINION.value))
        action = ACTION_CYCLE[last]
        me = p.get("agent_id")
        att = float(p.get("attitude", 0.0))
        if action is ActionKind.SELECT_PARTNER:
            # strongly committed groups close up
            return PolicyResponse(Role.CROWD_ACTION, action=action, epsilon=clamp(1.0 - abs(att), 0.0, 1.0))
        if action is ActionKind.DISCUSS_OPINION:
            replies = []
            for nb in p.get("neighbors", []):
                if nb["agent_id"] == me:
                    continue
                gap = abs(float(nb["attitude"]) - att)
                if gap < self.params.supportive_band:
                    tone = ReplyTone.SUPPORTIVE
                elif gap > self.params.opposing_band:
                    tone = ReplyTone.OPPOSING
                else:
                    tone = ReplyTone.NEUTRAL
                replies.append(ReplySpec(nb["agent_id"], f"{me} replies {tone.value}ly to {nb['agent_id']}", tone))
            return PolicyResponse(Role.CROWD_ACTION, action=action, replies=tuple(replies))
        return PolicyResponse(Role.CROWD_ACTION, action=action)

    def _CrowdAttitude(self, p) -> PolicyResponse:
        att = float(p.get("attitude", 0.0))
        vals = signal_valences(p.get("intervention_vector", []), p.get("discussion", []))
        new = rule_attitude(att, vals, self.params.gain)
        return PolicyResponse(
            Role.CROWD_ATTITUDE,
            updated_opinion=new,
            cognitive_state=f"attitude {new:+.3f} after {len(vals)} signal(s)",
        )

    def _EngagementHint(self, p) -> PolicyResponse:
        d = p.get("default_engagement") or {}
        return PolicyResponse(
            Role.ENGAGEMENT_HINT,
            engagement=EngagementVector(*(float(d.get(k, 0.0)) for k in ("views", "likes", "comments", "shares"))),
        )

    def _EventParser(self, p) -> PolicyResponse:
        words = _tokens(str(p.get("event_description", "")))
        best, hits = "Society", 0
        for domain, keys in DOMAIN_KEYWORDS.items():
            n = len(words.intersection(keys))
            if n > hits:
                best, hits = domain, n
        return PolicyResponse(Role.EVENT_PARSER, domain=best, country=self.params.default_country)

    def _RelevanceScorer(self, p) -> PolicyResponse:
        event = _tokens(str(p.get("event_description", "")))
        group = str(p.get("group_node", "public"))
        names = p.get("candidates") or [group, f"directly affected {group}", f"engaged {group}", f"casual {group} observers"]
        subs = []
        for name in names:
            toks = _tokens(name)
            score = len(toks & event) / len(toks) if toks else 0.0
            subs.append((name, score))
        return PolicyResponse(Role.RELEVANCE_SCORER, subgroups=tuple(subs))

    def _FallbackTemplates(self, p) -> PolicyResponse:
        return PolicyResponse(
            Role.FALLBACK_TEMPLATES,
            templates=({"name": "netizens", "description": "general online public", "population_size": 100000},),
        )
