"""Exception hierarchy shared by the simulator, analysis and I/O layers."""


class GfmError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(GfmError, ValueError):
    """A physical or numerical parameter is out of its admissible range."""


class InvalidInputError(GfmError, ValueError):
    """An input series or axis is empty or malformed."""


class InfeasibleBandError(GfmError, ValueError):
    """The requested hysteresis band is below the hardware floor H_b."""


class ScenarioError(GfmError, ValueError):
    """Base class for scenario file problems."""


class ScenarioSyntaxError(ScenarioError):
    """A scenario line could not be parsed."""

    def __init__(self, message, line_number=None, source=None):
        self.line_number = line_number
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line_number is not None:
            where += f"line {line_number}: "
        elif where:
            where += " "
        super().__init__(where + message)


class ScenarioValidationError(ScenarioError):
    """A parsed scenario violates one of its invariants."""


class SimulationDivergedError(GfmError, RuntimeError):
    """The integrator produced a non-finite state.

    Attributes
    ----------
    state : CircuitState
        Last state that was still finite.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state
