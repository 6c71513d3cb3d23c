"""Exception types shared across govbench modules."""


class GovbenchError(Exception):
    """Base class for all govbench errors."""


class InvalidArgument(GovbenchError):
    """A caller-supplied argument is malformed or out of range."""


class InvalidChoice(InvalidArgument):
    """A ballot's choice expression cannot be normalized."""


class EmptyTally(GovbenchError):
    """Tally requested over an empty vote list."""


class DegenerateTally(GovbenchError):
    """Outcome has zero total voting power; alignment is undefined."""


class DegenerateSeries(GovbenchError):
    """Participation series lacks the events a feature requires."""


class NoData(GovbenchError):
    """A data segment needed for a computation is empty."""


class DegenerateBaseline(GovbenchError):
    """Pre-event average is non-positive; percentage change undefined."""

    def __init__(self, message: str, series: str = ""):
        super().__init__(message)
        self.series = series


class NotFound(GovbenchError):
    """A referenced entity does not exist at the source."""


class SourceUnavailable(GovbenchError):
    """An upstream service kept failing after bounded retries."""


class SourceProtocolError(GovbenchError):
    """An upstream service violated its paging or wire contract."""


class LoadError(GovbenchError):
    """A persisted dataset file is corrupt."""

    def __init__(self, message: str, path: str = "", line: int = 0):
        super().__init__(message)
        self.path = path
        self.line = line


class PolicyInapplicable(GovbenchError):
    """The selected policy cannot decide this kind of proposal."""


class PolicyFailure(GovbenchError):
    """An external policy endpoint produced no parsable decision."""


class EmptyEvaluation(GovbenchError):
    """No proposals or voters available to aggregate."""


class CoverageError(GovbenchError):
    """Decision sets do not cover the same proposals."""

    def __init__(self, message: str, missing_ids: tuple = ()):
        super().__init__(message)
        self.missing_ids = tuple(missing_ids)


class SpecError(GovbenchError):
    """A synthetic scenario specification is infeasible."""


class ConfigError(GovbenchError):
    """A run configuration failed validation."""
