"""Exception hierarchy for solver and validation failures."""


class RicciLabError(Exception):
    """Base class for all package errors."""


class InvalidMetricError(RicciLabError):
    """Metric coefficients violate positivity or basic shape constraints."""


class DegenerateProfileError(InvalidMetricError):
    """Profile breaches the positivity floor or pole smoothness conditions."""


class ClassMismatchError(RicciLabError):
    """Operands belong to different symmetry classes or grids."""


class UnnormalizedInputError(RicciLabError):
    """Weighted mass of the input differs from 1 beyond tolerance."""


class SolverFailure(RicciLabError):
    """Iteration did not converge. Carries the best iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class PositivityLossError(SolverFailure):
    """Minimizer substitution w = exp(-f/2) touched zero."""


class StaleInputError(RicciLabError):
    """Cached minimizer no longer satisfies its equation for this metric."""


class PreconditionError(RicciLabError):
    """Operation precondition violated (e.g. non-soliton base point)."""


class ResonanceError(RicciLabError):
    """Linear solve is near-singular: an eigenvalue sits at the shift 1/(2 tau)."""


class GaugeDegenerateError(RicciLabError):
    """Gauge-subspace projection is rank deficient."""


class BasinExceededError(SolverFailure):
    """Gauge-fixing Newton iteration left its convergence basin."""


class SingularityDetected(RicciLabError):
    """Flow reached a degenerate metric. Carries the partial trajectory."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class StiffnessFailure(RicciLabError):
    """Adaptive step size underflowed."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class RegularityLostError(RicciLabError):
    """Minimizer solve failed along a modified-flow trajectory."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class DiffeoDegeneracyError(RicciLabError):
    """Reparametrization map lost monotonicity."""


class InsufficientDataError(RicciLabError):
    """Too few usable points in a fitting window."""


class ConfigError(RicciLabError):
    """Configuration text failed to parse or validate.

    ``line`` and ``field`` locate the offending entry when known.
    """

    def __init__(self, message, line=None, field=None):
        super().__init__(message)
        self.line = line
        self.field = field
