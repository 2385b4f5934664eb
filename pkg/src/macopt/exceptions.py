"""Exception hierarchy for macopt."""


class MacoptError(Exception):
    """Base class for all library errors."""


class NegativeDischarge(MacoptError, ValueError):
    pass


class InvalidModel(MacoptError, ValueError):
    pass


class EmptyInterval(MacoptError, ValueError):
    pass


class InfeasibleStart(MacoptError, ValueError):
    pass


class NonFiniteObjective(MacoptError, ArithmeticError):
    pass


class SolverFailure(MacoptError, RuntimeError):
    """Raised when a solve ends without an optimality certificate.

    The offending :class:`~macopt.convex.SolveReport` is attached as ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class OutOfInteriorRange(MacoptError, ValueError):
    pass


class TooManyUsers(MacoptError, ValueError):
    pass


class PreconditionViolated(MacoptError, ValueError):
    pass


class PeerInfeasible(MacoptError, ValueError):
    pass


class TargetOutOfRange(MacoptError, ValueError):
    pass


class ConfigError(MacoptError, ValueError):
    pass
