"""Exception hierarchy shared across the package."""


class MvexecError(Exception):
    """Base class for all package errors."""


class ConfigError(MvexecError, ValueError):
    """Invalid configuration. The message names the offending key path."""


class DomainError(MvexecError, ValueError):
    """An operation was called outside its documented domain."""


class NumericalError(MvexecError, RuntimeError):
    """A computation failed numerically."""


class SolverBlowupError(NumericalError):
    """The backward scheme exceeded its magnitude guard."""

    def __init__(self, t: float, q: float, state: int, value: float, bound: float):
        self.t = t
        self.q = q
        self.state = state
        self.value = value
        self.bound = bound
        super().__init__(
            f"value blow-up at t={t:g}, q={q:g}, state={state}: "
            f"|{value:g}| exceeds guard {bound:g}"
        )


class DegenerateEstimateError(NumericalError):
    """A posterior point estimate is undefined for the given hyperparameters."""


class MissingInputError(MvexecError, OSError):
    """A required input file or directory is absent."""
