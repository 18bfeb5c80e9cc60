"""Exception hierarchy shared by every module of the package."""


class MaslovError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(MaslovError, ValueError):
    """Malformed matrix, shape mismatch or out-of-range argument."""


class SingularMatrixError(MaslovError, ArithmeticError):
    """A linear system is singular to working tolerance."""


class ChartDomainError(MaslovError, ValueError):
    """A Lagrangian is not transversal to the reference of the requested chart."""


class DomainError(MaslovError, ValueError):
    """A time or parameter lies outside the domain of a profile or path."""


class NumericalFailure(MaslovError, RuntimeError):
    """A numerical procedure failed a hard accuracy contract.

    ``at`` records the offending time or path parameter when known.
    """

    def __init__(self, message, at=None):
        super().__init__(message if at is None else f"{message} (at {at!r})")
        self.at = at


class EndpointDegenerateError(NumericalFailure):
    """A path endpoint meets the reference Lagrangian nontrivially."""


class InvalidLoopError(MaslovError, ValueError):
    """Consecutive loop edges do not join up."""


class InvalidSpecError(MaslovError, ValueError):
    """A rectangle specification violates its invariants."""


class CertificationFailure(MaslovError):
    """The independent index computations disagree.

    The full report is attached as ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
