"""Exception types raised across the package."""


class JacksonError(Exception):
    """Base class for all errors raised by jackson_dynamics."""


class NegativeExternalRate(JacksonError):
    """Requested utilizations need a negative external arrival rate."""


class Unstable(JacksonError):
    """Some queue has utilization >= 1."""


class SingularRouting(JacksonError):
    """Routing matrix has spectral radius >= 1 (network not open)."""


class StateSpaceTooLarge(JacksonError):
    pass


class NotIrreducible(JacksonError):
    """Truncated chain has more than one closed communicating class."""


class SolverFailure(JacksonError):
    pass


class FormMismatch(JacksonError):
    """Two closed forms of the same quantity disagree; always a bug."""


class DeadNetwork(JacksonError):
    """No event can ever fire: all queues empty and no external arrivals."""


class ConfigInvalid(JacksonError):
    pass


class TooFewPeriods(JacksonError):
    pass


class ParseError(JacksonError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class KeyMismatch(JacksonError):
    pass
