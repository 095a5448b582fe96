"""Exception taxonomy shared across the package.

Three families matter to callers: configuration problems (caller fixable,
raised before any heavy work), numerical failures (well-formed inputs that
defeat an algorithm at runtime), and data-format problems (files that do not
parse or do not match their declared schema).  The command line maps these to
distinct exit codes.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class DataFormatError(ValueError):
    """A file exists but its content violates the expected format."""


class ParseError(DataFormatError):
    """A dataset line failed to parse; carries the 1-based line number."""

    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


class MissingMetadata(DataFormatError):
    """The sidecar metadata file is absent or lacks required keys."""


class LengthMismatch(DataFormatError):
    """Covariate rows do not align with the target length."""


class SeriesTooShort(DataFormatError):
    """One or more series cannot support the requested split or window.

    Attributes
    ----------
    ids : list
        Identifiers of the offending series.
    """

    def __init__(self, message, ids=()):
        super().__init__(message)
        self.ids = list(ids)


class UnknownFrequency(DataFormatError):
    """A frequency code outside the supported set."""


class NumericalError(RuntimeError):
    """Base class for runtime numerical failures."""


class NonConvergence(NumericalError):
    """An iterative solver ran out of iterations before meeting tolerance.

    Attributes
    ----------
    residual : float
        Worst residual at the final iterate.
    iterations : int
        Iterations consumed.
    """

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class HessianNotPD(NumericalError):
    """A matrix that must be symmetric positive definite failed factorization."""


class DegenerateVariance(NumericalError):
    """A standardization step hit zero variance."""


class NonFiniteLoss(NumericalError):
    """Training produced a NaN or infinite loss.

    Attributes
    ----------
    epoch, batch_index : int or None
        Where in the schedule the value appeared.
    """

    def __init__(self, message, epoch=None, batch_index=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch_index = batch_index


class FactorizationFailure(NumericalError):
    """A covariance matrix failed its SPD factorization; raise the jitter."""


class ZeroDenominator(NumericalError):
    """A metric's normalizing mass is zero."""


class ZeroSeasonalError(NumericalError):
    """The seasonal scaling error of the history is zero."""
