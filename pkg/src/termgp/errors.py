"""Exception types shared across the package."""


class TermGPError(Exception):
    """Base class for all termgp errors."""


class InvalidSpec(TermGPError, ValueError):
    """A kernel, grid, quote or config value violates its contract."""


class UnsupportedDerivative(TermGPError):
    """Kernel derivatives requested for a family that is not twice differentiable."""


class SingularCovariance(TermGPError):
    """A covariance matrix could not be factorized, even after the nugget."""


class SingularConstraintMatrix(TermGPError):
    """The constraint normal-equation matrix is singular or rank deficient."""


class RankDeficient(TermGPError):
    """A constraint matrix does not have full row rank (e.g. duplicate quotes)."""


class OutOfDomain(TermGPError, ValueError):
    """An evaluation point lies outside the knot-grid domain."""


class MissingCurvePoint(TermGPError):
    """An instrument cash-flow date is not among the curve points."""


class MissingDiscount(TermGPError):
    """A required exogenous discount factor is unavailable."""


class InconsistentGrid(TermGPError):
    """Instrument schedules do not align with the common payment grid."""


class EmptyInput(TermGPError, ValueError):
    """An input collection that must be non-empty is empty."""


class Infeasible(TermGPError):
    """Equality constraints and the inequality cone have empty intersection."""


class MaxIterations(TermGPError):
    """An iterative solver exhausted its iteration budget."""


class AcceptanceTooLow(TermGPError):
    """Rejection sampling acceptance rate fell below the floor within budget."""


class InfeasibleFold(TermGPError):
    """A leave-one-out subproblem is infeasible."""

    def __init__(self, fold: int, message: str = ""):
        self.fold = fold
        super().__init__(message or f"leave-one-out fold {fold} is infeasible")


class BracketFailure(TermGPError):
    """A root bracket does not contain a sign change."""


class NonPositiveValue(TermGPError, ValueError):
    """A curve value that must be strictly positive is not."""


class ZeroHorizon(TermGPError, ValueError):
    """A rate transform was requested at zero time horizon."""


class TooFewSamples(TermGPError, ValueError):
    """Not enough sample paths to compute the requested statistic."""


class NonConvergence(TermGPError):
    """An optimizer failed to produce a usable solution within budget."""


class QuoteParseError(TermGPError, ValueError):
    """A quote or discount CSV row could not be parsed."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ConfigError(TermGPError, ValueError):
    """A run configuration value is missing or invalid."""
