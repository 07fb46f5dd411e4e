"""Exception hierarchy for mep_string."""


class MEPError(Exception):
    """Base class for all errors raised by this package."""


class NonFinite(MEPError):
    """An energy, gradient or Hessian evaluated to NaN or infinity."""


class DomainEscape(MEPError):
    """A point left the computational box by more than the allowed margin."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DegenerateString(MEPError):
    """All images of a string coincide, so arc length is zero."""


class DegenerateTangent(MEPError):
    pass


class OutOfRange(MEPError):
    pass


class BadKnots(MEPError):
    pass


class StepLimit(MEPError):
    """The adaptive reference flow ran out of substeps."""


class NotAMinimum(MEPError):
    pass


class NoInteriorMax(MEPError):
    """The highest-energy image of a string is one of its endpoints."""


class SamplingFailure(MEPError):
    pass


class ConfigError(MEPError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line, column):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class ValidationError(ConfigError):
    """Collects every problem found in a config, keyed by dotted path."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = "\n".join(f"  {path}: {msg}" for path, msg in self.errors)
        super().__init__(f"{len(self.errors)} config error(s):\n{lines}")
