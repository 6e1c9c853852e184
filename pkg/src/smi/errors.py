"""Exception types raised by the library."""


class SMIError(Exception):
    """Base class for all library errors."""


class MarginalNotAvailable(SMIError):
    """No evaluator for log p(Y | phi) is registered for this model."""


class ImproperPriorError(MarginalNotAvailable):
    """The operation needs a proper prior pi(theta | phi) and none is available."""


class QuadratureError(SMIError):
    """Numerical integration did not reach the requested tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class DegenerateDataError(SMIError):
    """Data are degenerate for the requested closed form (e.g. all covariates zero)."""


class InternalInvariantError(SMIError):
    """A quantity that should be impossible (e.g. a non-PD covariance) was produced."""


class ZeroMassError(SMIError):
    """A belief update produced a table with zero total mass."""


class SamplerError(SMIError):
    """MCMC failed (no acceptances during burn-in, invalid start, unsupported setting)."""

    def __init__(self, message, scales=None):
        super().__init__(message)
        self.scales = scales


class SequenceTooShort(SMIError):
    """Too few draws for a diagnostic or estimator."""


class RangeMismatchError(SMIError):
    """Two utility curves share no common range of values."""


class DataFormatError(SMIError):
    """Input file is malformed; ``rows`` lists (line number, message) pairs."""

    def __init__(self, message, rows=()):
        super().__init__(message)
        self.rows = list(rows)
