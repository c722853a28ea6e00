"""Reading and writing run outputs.

trajectory.tsv   ``# socialsim trajectory v1`` then ``t views likes comments shares``
attitudes.tsv    ``# socialsim attitudes v1`` then ``t <agent ids...>``, rows t = 0..T
run_log.jsonl    one JSON object per engine log record
bundle.json      config snapshot, trajectory, attitudes, log, optional metrics

Floats are written with ``repr`` so every file re-parses to the same values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import __version__
from .engine import Trajectory
from .errors import SimError
from .model import ENGAGEMENT_FIELDS, EngagementVector, ScenarioConfig, config_from_dict, config_to_dict

TRAJECTORY_HEADER = "# socialsim trajectory v1"
ATTITUDES_HEADER = "# socialsim attitudes v1"
BUNDLE_FORMAT = "socialsim-bundle"
BUNDLE_VERSION = 1


class ArtifactError(SimError, ValueError):
    """An output file is unreadable or does not follow its schema."""


def _num(v: float) -> str:
    return repr(float(v))


def trajectory_tsv(engagement: Sequence[EngagementVector]) -> str:
    lines = [TRAJECTORY_HEADER, "\t".join(("t",) + ENGAGEMENT_FIELDS)]
    for t, y in enumerate(engagement, start=1):
        lines.append("\t".join([str(t)] + [_num(v) for v in y.as_tuple()]))
    return "\n".join(lines) + "\n"


def parse_trajectory_tsv(text: str) -> list[EngagementVector]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != TRAJECTORY_HEADER:
        raise ArtifactError(f"missing header {TRAJECTORY_HEADER!r}")
    if len(lines) < 2 or lines[1].split("\t") != ["t", *ENGAGEMENT_FIELDS]:
        raise ArtifactError("bad column line")
    out = []
    for n, ln in enumerate(lines[2:], start=1):
        cells = ln.split("\t")
        try:
            if len(cells) != 5 or int(cells[0]) != n:
                raise ValueError
            out.append(EngagementVector(*(float(c) for c in cells[1:])))
        except ValueError:
            raise ArtifactError(f"bad trajectory row {n}: {ln!r}") from None
    return out


def attitudes_tsv(agent_ids: Sequence[str], rows: Sequence[Sequence[float]]) -> str:
    lines = [ATTITUDES_HEADER, "\t".join(["t", *agent_ids])]
    for t, row in enumerate(rows):
        lines.append("\t".join([str(t)] + [_num(v) for v in row]))
    return "\n".join(lines) + "\n"


def parse_attitudes_tsv(text: str) -> dict[str, list[float]]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != ATTITUDES_HEADER:
        raise ArtifactError(f"missing header {ATTITUDES_HEADER!r}")
    if len(lines) < 2:
        raise ArtifactError("missing column line")
    cols = lines[1].split("\t")
    if cols[0] != "t" or len(cols) < 2:
        raise ArtifactError("bad column line")
    series: dict[str, list[float]] = {a: [] for a in cols[1:]}
    for ln in lines[2:]:
        cells = ln.split("\t")
        if len(cells) != len(cols):
            raise ArtifactError(f"bad attitude row: {ln!r}")
        try:
            for a, c in zip(cols[1:], cells[1:]):
                series[a].append(float(c))
        except ValueError:
            raise ArtifactError(f"bad attitude row: {ln!r}") from None
    return series


def run_log_jsonl(records: Sequence[Mapping[str, Any]]) -> str:
    return "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in records)


@dataclass(frozen=True)
class RunBundle:
    config: ScenarioConfig
    seed: int
    engagement: tuple[EngagementVector, ...]
    agent_ids: tuple[str, ...]
    attitudes: tuple[tuple[float, ...], ...]
    interventions: tuple[tuple[str, ...], ...]
    log: tuple[Mapping[str, Any], ...] = ()
    metrics: Mapping[str, Any] | None = None
    tool_version: str = __version__

    @classmethod
    def from_run(cls, config: ScenarioConfig, traj: Trajectory, metrics: Mapping[str, Any] | None = None) -> RunBundle:
        return cls(
            config=config,
            seed=config.rng_seed,
            engagement=traj.engagement,
            agent_ids=traj.agent_ids,
            attitudes=traj.attitudes,
            interventions=tuple(tuple(k.value for k in iv.kinds()) for iv in traj.interventions),
            log=traj.run_log,
            metrics=metrics,
        )

    def attitude_series(self) -> dict[str, list[float]]:
        return {a: [row[i] for row in self.attitudes] for i, a in enumerate(self.agent_ids)}

    def to_dict(self) -> dict:
        d = {
            "format": BUNDLE_FORMAT,
            "version": BUNDLE_VERSION,
            "tool_version": self.tool_version,
            "seed": self.seed,
            "config": config_to_dict(self.config),
            "trajectory": [dict(zip(ENGAGEMENT_FIELDS, y.as_tuple())) for y in self.engagement],
            "interventions": [list(k) for k in self.interventions],
            "attitudes": {"agent_ids": list(self.agent_ids), "rows": [list(r) for r in self.attitudes]},
            "log": list(self.log),
        }
        if self.metrics is not None:
            d["metrics"] = dict(self.metrics)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> RunBundle:
        if d.get("format") != BUNDLE_FORMAT:
            raise ArtifactError("not a run bundle")
        if d.get("version") != BUNDLE_VERSION:
            raise ArtifactError(f"unsupported bundle version {d.get('version')!r}")
        try:
            att = d["attitudes"]
            return cls(
                config=config_from_dict(d["config"]),
                seed=int(d["seed"]),
                engagement=tuple(EngagementVector(**y) for y in d["trajectory"]),
                agent_ids=tuple(att["agent_ids"]),
                attitudes=tuple(tuple(float(v) for v in r) for r in att["rows"]),
                interventions=tuple(tuple(k) for k in d.get("interventions", ())),
                log=tuple(d.get("log", ())),
                metrics=d.get("metrics"),
                tool_version=str(d.get("tool_version", "")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ArtifactError(f"malformed bundle: {exc}") from None


def load_bundle(path: str | Path) -> RunBundle:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ArtifactError(f"cannot read bundle {path}: {exc}") from None
    return RunBundle.from_dict(data)


def load_engagement(path: str | Path) -> list[EngagementVector]:
    """Engagement series from a trajectory.tsv or a bundle.json."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ArtifactError(f"cannot read {path}: {exc}") from None
    if text.lstrip().startswith("{"):
        try:
            return list(RunBundle.from_dict(json.loads(text)).engagement)
        except ValueError as exc:
            raise ArtifactError(f"cannot parse {path}: {exc}") from None
    return parse_trajectory_tsv(text)
