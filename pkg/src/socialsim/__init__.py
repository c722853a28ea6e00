"""Agent-based simulation of public response to interventions on social events."""

__version__ = "0.1.0"

from .engine import ProviderSet, Simulation, Trajectory, apply_control, build_providers, run  # noqa: E402
from .metrics import MetricReport, dtw, evaluate, mape, wasserstein1, zscore_reproducibility  # noqa: E402
from .model import ScenarioConfig, load_scenario, validate_scenario  # noqa: E402

__all__ = [
    "MetricReport",
    "ProviderSet",
    "ScenarioConfig",
    "Simulation",
    "Trajectory",
    "apply_control",
    "build_providers",
    "dtw",
    "evaluate",
    "load_scenario",
    "mape",
    "run",
    "validate_scenario",
    "wasserstein1",
    "zscore_reproducibility",
]
