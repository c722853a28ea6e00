"""Bounded-confidence opinion dynamics and the hybrid attitude rule.

Opinions live on the normalized scale [0, 1]; crowd attitudes live on
[-1, 1] and are mapped with ``x = (A + 1) / 2`` before any epsilon test, so
epsilon keeps its [0, 1] meaning. epsilon = 0 isolates an agent, epsilon = 1
connects it to everyone (uniform averaging), anything between is the
Hegselmann-Krause neighborhood restricted to the social graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import IndexOutOfRange, MalformedPolicyOutput, SeriesTooShort
from .model import (
    TONE_WEIGHT,
    CrowdAgentState,
    DiscussionSignal,
    InterventionVector,
    ReplyTone,
    attitude_to_opinion,
    clamp,
)


class Adjacency:
    """Symmetric boolean relation over agent indices; the diagonal is always False."""

    def __init__(self, matrix):
        m = np.array(matrix, dtype=bool)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("adjacency must be a square matrix")
        if not np.array_equal(m, m.T):
            raise ValueError("adjacency must be symmetric")
        np.fill_diagonal(m, False)
        m.setflags(write=False)
        self.matrix = m

    @classmethod
    def complete(cls, n: int) -> Adjacency:
        return cls(~np.eye(n, dtype=bool))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> Adjacency:
        m = np.zeros((n, n), dtype=bool)
        for a, b in edges:
            m[a, b] = m[b, a] = True
        return cls(m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, i: int, j: int) -> bool:
        return bool(self.matrix[i, j])

    def __eq__(self, other):
        return isinstance(other, Adjacency) and np.array_equal(self.matrix, other.matrix)


def _as_opinions(opinions) -> np.ndarray:
    x = np.asarray(opinions, dtype=float)
    if x.ndim != 1:
        raise ValueError("opinions must be a 1-d vector")
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise ValueError("opinions must lie in [0, 1]")
    return x


def _check_epsilon(epsilon: float) -> None:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon {epsilon} outside [0, 1]")


def epsilon_neighborhood(i: int, opinions, adjacency: Adjacency | None, epsilon: float) -> frozenset[int]:
    """Indices agent ``i`` listens to under confidence bound ``epsilon``.

    The agent itself is always a member. At epsilon = 0 it is the only
    member, even if a peer holds exactly the same opinion. At epsilon = 1
    every graph neighbor qualifies, which on the complete graph is everyone.
    """
    x = _as_opinions(opinions)
    n = x.size
    if not 0 <= i < n:
        raise IndexOutOfRange(f"agent index {i} out of range for {n} agents")
    _check_epsilon(epsilon)
    if epsilon == 0.0:
        return frozenset({i})
    adj = adjacency.matrix if adjacency is not None else ~np.eye(n, dtype=bool)
    close = np.abs(x - x[i]) <= epsilon
    members = np.flatnonzero(adj[i] & close)
    return frozenset({i, *members.tolist()})


def neighborhood_mask(opinions, adjacency: Adjacency | None, epsilon) -> np.ndarray:
    """Row ``i`` marks the epsilon-neighborhood of agent ``i``; epsilon may be per-agent."""
    x = _as_opinions(opinions)
    n = x.size
    eps = np.broadcast_to(np.asarray(epsilon, dtype=float), (n,))
    if n and (eps.min() < 0.0 or eps.max() > 1.0):
        raise ValueError("epsilon outside [0, 1]")
    adj = adjacency.matrix if adjacency is not None else ~np.eye(n, dtype=bool)
    mask = adj & (np.abs(x[:, None] - x[None, :]) <= eps[:, None])
    mask |= np.eye(n, dtype=bool)
    mask[eps == 0.0] = np.eye(n, dtype=bool)[eps == 0.0]
    return mask


def dynamics_step(opinions, adjacency: Adjacency | None = None, epsilon=1.0) -> np.ndarray:
    """One synchronous update: every agent moves to the mean of its neighborhood.

    All agents read the same input snapshot. ``epsilon`` is a scalar or a
    per-agent vector.
    """
    x = _as_opinions(opinions)
    n = x.size
    eps = np.broadcast_to(np.asarray(epsilon, dtype=float), (n,))
    mask = neighborhood_mask(x, adjacency, eps)
    out = np.empty(n)
    for i in range(n):
        if eps[i] == 0.0:
            out[i] = x[i]
        else:
            out[i] = np.mean(x[mask[i]])
    return out


# ---------------------------------------------------------------------------
# Hybrid attitude update
# ---------------------------------------------------------------------------


def rule_attitude(attitude: float, valences: Sequence[float], gain: float) -> float:
    """Deterministic stand-in for the reasoning policy.

    Moves the attitude a fraction ``gain`` of the way toward the mean signal
    valence. No signals means no change.
    """
    if not valences:
        return attitude
    target = sum(valences) / len(valences)
    return clamp(attitude + gain * (target - attitude), -1.0, 1.0)


def signal_valences(interventions: Iterable[Mapping[str, Any]], replies: Iterable[Mapping[str, Any]]) -> list[float]:
    """Valences carried by active interventions and received replies.

    A reply conveys the sender's attitude weighted by its tone: supportive
    +1, neutral 0, opposing -1.
    """
    vals = [float(i["valence"]) for i in interventions]
    for r in replies:
        w = TONE_WEIGHT[ReplyTone(r["reply_tone"])]
        vals.append(w * float(r.get("sender_attitude", 1.0)))
    return vals


@dataclass(frozen=True)
class AttitudeUpdate:
    attitude: float
    via_policy: bool
    cognitive_state: str | None = None
    reasoning_trace: str = ""


def resolve_attitude(
    agent: CrowdAgentState,
    discussion: DiscussionSignal,
    interventions: InterventionVector,
    neighborhood_attitudes: Sequence[float],
    policy,
    *,
    t: int = 0,
    context: Mapping[str, Any] | None = None,
) -> AttitudeUpdate:
    """Hybrid rule with bookkeeping the engine needs (which branch fired, new state text)."""
    if discussion or not interventions.is_empty:
        from .providers import PolicyRequest, Role

        sender_att = dict((context or {}).get("sender_attitudes", {}))
        payload = dict(context or {})
        payload.pop("sender_attitudes", None)
        payload.update(
            {
                "agent_id": agent.agent_id,
                "agent_name": agent.group_name,
                "attitude": agent.attitude,
                "opinions": agent.attitude,
                "previous_state": agent.cognitive_state,
                "memory_trace": list(agent.memory_trace),
                "interaction_range": agent.epsilon,
                "intervention_vector": [
                    {"source_id": e.source_id, "kind": e.kind.value, "valence": e.valence, "message": e.message}
                    for e in interventions.active()
                ],
                "discussion": [
                    {**r.to_dict(), "sender_attitude": sender_att.get(r.from_agent, 0.0)} for r in discussion
                ],
            }
        )
        resp = policy.respond(PolicyRequest(Role.CROWD_ATTITUDE, t, agent.agent_id, payload))
        if resp.updated_opinion is None:
            raise MalformedPolicyOutput("attitude response carries no updated_opinion", raw=resp.reasoning_trace)
        return AttitudeUpdate(
            clamp(resp.updated_opinion, -1.0, 1.0),
            True,
            resp.cognitive_state,
            resp.reasoning_trace,
        )
    if not neighborhood_attitudes:
        raise ValueError("neighborhood_attitudes must be non-empty when no signal is present")
    return AttitudeUpdate(sum(neighborhood_attitudes) / len(neighborhood_attitudes), False)


def hybrid_attitude_update(
    agent: CrowdAgentState,
    discussion: DiscussionSignal,
    interventions: InterventionVector,
    neighborhood_attitudes: Sequence[float],
    policy,
    **kwargs,
) -> float:
    """New attitude for ``agent``.

    If the agent received discussion or any intervention is active, the
    policy decides (result clamped to [-1, 1]); otherwise the attitude is
    the plain mean of ``neighborhood_attitudes``.
    """
    return resolve_attitude(agent, discussion, interventions, neighborhood_attitudes, policy, **kwargs).attitude


def neighborhood_attitudes(i: int, attitudes: Sequence[float], adjacency: Adjacency | None, epsilon: float) -> list[float]:
    opinions = [attitude_to_opinion(a) for a in attitudes]
    return [attitudes[j] for j in sorted(epsilon_neighborhood(i, opinions, adjacency, epsilon))]


# ---------------------------------------------------------------------------
# Evolution modes
# ---------------------------------------------------------------------------


class EvolutionMode(str, Enum):
    POLARIZATION = "Polarization"
    CONSENSUS = "Consensus"
    REINFORCEMENT = "Reinforcement"
    ATTENUATION = "Attenuation"


CONSENSUS_STD = 0.15
DRIFT = 0.1
CLUSTER_SHARE = 0.25
# attitudes closer to zero than this belong to neither signed cluster
CLUSTER_DEADZONE = 0.1


def classify_evolution(attitude_series) -> EvolutionMode:
    """Name the collective attitude trajectory.

    ``attitude_series`` holds one time series per agent (a mapping of agent
    id to series also works). Rules are checked in priority order
    Polarization > Consensus > Reinforcement > Attenuation. A trajectory that
    meets none of them is assigned the closer of Reinforcement/Attenuation by
    the sign of the change in mean magnitude.
    """
    if isinstance(attitude_series, Mapping):
        attitude_series = list(attitude_series.values())
    a = np.asarray(attitude_series, dtype=float)
    if a.ndim != 2 or a.shape[0] == 0:
        raise ValueError("expected one series per agent")
    if a.shape[1] < 2:
        raise SeriesTooShort("attitude series need at least two timesteps")
    first, last = a[:, 0], a[:, -1]
    n = a.shape[0]

    pos = np.count_nonzero(last >= CLUSTER_DEADZONE)
    neg = np.count_nonzero(last <= -CLUSTER_DEADZONE)
    if pos >= CLUSTER_SHARE * n and neg >= CLUSTER_SHARE * n:
        return EvolutionMode.POLARIZATION

    std0, std1 = float(np.std(first)), float(np.std(last))
    if std1 < CONSENSUS_STD and std1 < std0:
        return EvolutionMode.CONSENSUS

    drift = float(np.mean(np.abs(last)) - np.mean(np.abs(first)))
    flipped = bool(np.any(first * last < 0))
    if drift >= DRIFT and not flipped:
        return EvolutionMode.REINFORCEMENT
    if drift <= -DRIFT:
        return EvolutionMode.ATTENUATION
    return EvolutionMode.REINFORCEMENT if drift >= 0 else EvolutionMode.ATTENUATION
