"""Exception hierarchy shared across the package."""


class LapconError(Exception):
    pass


class BudgetExceeded(LapconError):
    """An edge carried more words in one direction in one round than allowed."""


class Disconnected(LapconError):
    pass


class InvalidParams(LapconError, ValueError):
    pass


class PatternMismatch(LapconError, ValueError):
    """A matrix has support outside the minor's edges and diagonal."""


class NotInRange(LapconError, ValueError):
    """Right-hand side is not orthogonal to the kernel of the Laplacian."""


class NotMeanZero(NotInRange):
    pass


class SingularBlock(LapconError, ValueError):
    pass


class NullSpaceMismatch(LapconError, ValueError):
    pass


class NotSDD(LapconError, ValueError):
    pass


class EmptyTerminals(LapconError, ValueError):
    pass


class SolverFailure(LapconError):
    pass


class BadEstimate(LapconError, ValueError):
    pass


class NonConvergence(LapconError):
    pass


class NotAlphaDD(LapconError, ValueError):
    pass


class Failure(LapconError):
    pass


class ChainInvalid(LapconError):
    pass


class BadBounds(LapconError):
    """Chebyshev residual grew for too many consecutive iterations."""


class NotMultipleOfDelta(LapconError, ValueError):
    pass


class NoConvergence(LapconError):
    pass


class MalformedFile(LapconError, ValueError):
    pass
