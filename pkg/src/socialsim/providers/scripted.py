from __future__ import annotations

import threading
from collections import Counter
from typing import Any, Iterable, Mapping

from ..model import ActionKind, EngagementVector, InterventionKind, ScriptedEntry
from .base import PolicyRequest, PolicyResponse, Role

Key = tuple[Role, "int | None", "str | None"]


class ScriptedProvider:
    """Test double answering by exact lookup on ``(role, t, agent_id)``.

    ``None`` in ``t`` or ``agent_id`` acts as a wildcard. The most specific
    key wins: (t, agent), then (any t, agent), then (t, any agent), then
    (any, any). Unmatched requests get the role's neutral answer.
    """

    def __init__(self, schedule: Mapping[tuple, Any] | Iterable[ScriptedEntry] = ()):
        self._table: dict[Key, PolicyResponse] = {}
        items = schedule.items() if isinstance(schedule, Mapping) else (
            ((e.role, e.t, e.agent_id), e.response) for e in schedule
        )
        for (role, t, agent), resp in items:
            role = Role(role)
            if not isinstance(resp, PolicyResponse):
                resp = PolicyResponse.from_dict(role, resp)
            self._table[(role, t, agent)] = resp
        self.calls: Counter[Role] = Counter()
        self._lock = threading.Lock()

    def respond(self, request: PolicyRequest) -> PolicyResponse:
        with self._lock:
            self.calls[request.role] += 1
        r, t, a = request.role, request.t, request.agent_id
        for key in ((r, t, a), (r, None, a), (r, t, None), (r, None, None)):
            if key in self._table:
                return self._table[key]
        return neutral_response(request)


def neutral_response(request: PolicyRequest) -> PolicyResponse:
    role = request.role
    if role is Role.SOURCE_AGENT:
        return PolicyResponse(role, intervention=InterventionKind.INACTIVE, valence=0.0)
    if role is Role.CROWD_ACTION:
        return PolicyResponse(role, action=ActionKind.UPDATE_OPINION)
    if role is Role.CROWD_ATTITUDE:
        # no change
        return PolicyResponse(role, updated_opinion=float(request.payload.get("attitude", 0.0)))
    if role is Role.ENGAGEMENT_HINT:
        return PolicyResponse(role, engagement=EngagementVector.zero())
    # parser, scorer and fallback have no meaningful neutral value; callers
    # treat the empty fields as malformed or empty as appropriate
    return PolicyResponse(role)
