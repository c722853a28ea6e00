from __future__ import annotations

from importlib import resources

import pytest

from socialsim.model import (
    InterventionKind,
    AgentSpec,
    CrowdSpec,
    Event,
    ScenarioConfig,
    ScheduleEntry,
    SourceAgentSpec,
    load_scenario,
)

SCENARIOS = resources.files("socialsim") / "data" / "scenarios"
SCENARIO_NAMES = sorted(p.name for p in SCENARIOS.iterdir() if p.name.endswith(".yaml"))


def scenario_path(name: str):
    return SCENARIOS / name


def bundled(name: str) -> ScenarioConfig:
    return load_scenario(SCENARIOS / name)


def small_config(n_agents=3, horizon=3, schedule=(), attitudes=None, **kw) -> ScenarioConfig:
    attitudes = attitudes or [round(-0.5 + i / max(1, n_agents - 1), 3) for i in range(n_agents)]
    agents = tuple(
        AgentSpec(f"a{i}", f"group {i}", population_size=1000, attitude=attitudes[i], epsilon=1.0)
        for i in range(n_agents)
    )
    sources = (SourceAgentSpec("media", "media", policy="scripted", stance=0.5, schedule=tuple(schedule)),)
    return ScenarioConfig(
        event=Event("e1", "Something happened", "details", "Society", "China", horizon),
        source_agents=sources,
        crowd=CrowdSpec(agents=agents),
        **kw,
    )


@pytest.fixture
def demo_config() -> ScenarioConfig:
    return bundled("demo.yaml")


@pytest.fixture
def publicity_day1():
    return (ScheduleEntry(1, InterventionKind.PUBLICITY, 0.5),)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(line)
