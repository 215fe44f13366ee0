"""Exception types raised by the epilock solvers and data pipeline."""


class EpilockError(Exception):
    """Base class for all epilock errors."""


class DimensionMismatch(EpilockError):
    pass


class DegenerateLocation(EpilockError):
    """A location is visited by nobody (zero weighted column sum), so the
    visit-normalisation diagonal is undefined."""


class NotStronglyConnected(EpilockError):
    """The nonzero pattern of the matrix is not strongly connected."""


class NonConvergence(EpilockError):
    """An iterative solver hit its iteration cap.

    Carries the last residual/imbalance so callers can decide whether the
    partial answer is usable.
    """

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InfeasibleAlpha(EpilockError):
    """The requested decay rate is outside the attainable range, so no
    lockdown of any cost can achieve it."""


class CalibrationRange(EpilockError):
    """Transmission-rate calibration could not bracket the growth target."""


class DegenerateRates(EpilockError):
    """Rate combination makes the requested quantity undefined."""


class TauDiagonalZero(EpilockError):
    """The travel matrix has a zero diagonal entry; the constrained
    reduction requires a positive diagonal."""


class RowCollapse(EpilockError):
    """A perturbation zeroed out an entire row of the travel matrix."""


class WidthInfeasible(EpilockError):
    """No random-policy interval of the requested width can match the cost."""


class DataInconsistency(EpilockError):
    """Ingested tables are mutually inconsistent (e.g. negative active cases)."""


class StepRejectionCascade(EpilockError):
    """The integrator kept rejecting steps until the step size underflowed."""
