"""Exception hierarchy shared by every lcvx module."""


class LcvxError(Exception):
    """Base class for all errors raised by lcvx."""


class DimensionError(LcvxError, ValueError):
    """Array shapes are inconsistent with each other or with the problem."""


class ProblemDataError(LcvxError, ValueError):
    """Problem data violates a hard premise (e.g. a nonpositive lower bound)."""


class EigenDecompositionError(LcvxError):
    """The eigenvalue iteration failed to converge."""


class NotDiagonalizableError(LcvxError):
    """A matrix is numerically defective and no Jordan structure was supplied."""


class SolverError(LcvxError):
    """A cone program could not be solved to the requested status.

    The offending :class:`~lcvx.conic.ConeSolution` is kept on ``solution``
    so callers can inspect the best iterate and residuals.
    """

    def __init__(self, message, solution=None, t_s=None):
        super().__init__(message)
        self.solution = solution
        self.t_s = t_s


class AssumptionError(LcvxError):
    """A structural assumption needed by an algorithm does not hold."""


class ScenarioError(LcvxError, ValueError):
    """A scenario file is malformed, incomplete or inconsistent."""
