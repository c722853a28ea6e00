"""Exception hierarchy shared by every module."""

from __future__ import annotations


class SimError(Exception):
    """Base class for all package errors."""


class ScenarioError(SimError):
    """Scenario or group-graph file could not be parsed into the schema."""


class ProviderError(SimError):
    """Base for failures raised by a policy provider."""


class ProviderUnavailable(ProviderError):
    """Transport failure or timeout after all retries were spent."""


# Same failure seen from the crowd-policy side.
PolicyUnavailable = ProviderUnavailable


class ParserUnavailable(ProviderUnavailable):
    pass


class MalformedPolicyOutput(ProviderError):
    """Response could not be parsed or violated a declared range.

    The raw provider text is kept on ``raw`` for post-mortem inspection.
    """

    def __init__(self, message: str, raw: str | None = None):
        super().__init__(message)
        self.raw = raw


class MalformedParserOutput(MalformedPolicyOutput):
    pass


class EncoderMismatch(SimError):
    pass


class ScorerOutOfRange(SimError):
    pass


class EmptyCandidatePool(SimError):
    pass


class IndexOutOfRange(SimError, IndexError):
    pass


class SeriesTooShort(SimError):
    pass


class EmptyInput(SimError, ValueError):
    pass


class LengthMismatch(SimError, ValueError):
    pass


class AllComponentsSkipped(SimError, ValueError):
    pass


class TooFewRuns(SimError, ValueError):
    pass


class HorizonMismatch(SimError, ValueError):
    pass


class EmptyCrowd(SimError):
    pass


class MissingScheduleEntry(SimError):
    pass


class SimulationAborted(SimError):
    """A provider failed mid-run; the run is discarded, never truncated."""

    def __init__(self, timestep: int, phase: str, cause: Exception):
        super().__init__(f"run aborted at t={timestep} during {phase}: {cause}")
        self.timestep = timestep
        self.phase = phase
        self.cause = cause
