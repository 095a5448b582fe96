"""Multivariate quantile function forecasting.

A probabilistic forecaster whose multivariate quantile function is the
gradient of a convex potential network conditioned on a recurrent summary of
the past.  Monotonicity of gradients of convex functions rules out quantile
crossing by construction, and the same map supports forward sampling, exact
inversion, and exact log-densities.

Subpackages of note:

``graph``
    Expression-graph reverse-mode differentiation with nested gradients.
``picnn``
    The convex potential network and its parametrization.
``encoder``
    Recurrent context encoder with mean scaling.
``model``
    The quantile map: sampling, inversion, densities, shape checks,
    checkpoints.
``training``
    Energy-score and likelihood objectives, instance sampling, optimization.
``metrics``
    Forecast evaluation metrics.
``data``
    Dataset io, splits, calendar features, synthetic generators.
"""

from .errors import (
    ConfigError,
    DataFormatError,
    DegenerateVariance,
    FactorizationFailure,
    HessianNotPD,
    LengthMismatch,
    MissingMetadata,
    NonConvergence,
    NonFiniteLoss,
    NumericalError,
    ParseError,
    SeriesTooShort,
    UnknownFrequency,
    ZeroDenominator,
    ZeroSeasonalError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataFormatError",
    "DegenerateVariance",
    "FactorizationFailure",
    "HessianNotPD",
    "LengthMismatch",
    "MissingMetadata",
    "NonConvergence",
    "NonFiniteLoss",
    "NumericalError",
    "ParseError",
    "SeriesTooShort",
    "UnknownFrequency",
    "ZeroDenominator",
    "ZeroSeasonalError",
    "__version__",
]
