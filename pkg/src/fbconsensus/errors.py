"""Exception hierarchy shared across the package."""


class ConsensusError(Exception):
    """Base class for all package errors."""


class StochasticMatrixError(ConsensusError, ValueError):
    """Raised when a matrix cannot be accepted as row stochastic."""


class NonSquareError(StochasticMatrixError):
    pass


class NegativeEntryError(StochasticMatrixError):
    pass


class RowSumDeviationError(StochasticMatrixError):
    pass


class SingularBasisError(ConsensusError, ValueError):
    pass


class InfeasibleScheduleError(ConsensusError, ValueError):
    pass


class NonFiniteError(ConsensusError, ArithmeticError):
    """A state or feedback value overflowed; signals divergence."""


class NoSignChangeError(ConsensusError, ValueError):
    pass


class NoConvergenceError(ConsensusError, RuntimeError):
    pass


class BracketExpansionFailedError(ConsensusError, RuntimeError):
    pass


class DerivativeUnavailableError(ConsensusError, ValueError):
    pass


class NotConvergedError(ConsensusError, ValueError):
    pass


class ConfigError(ConsensusError, ValueError):
    """Malformed or inconsistent experiment configuration."""
