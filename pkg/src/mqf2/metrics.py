"""Forecast evaluation: weighted quantile losses, sum-CRPS, scaled interval
score, the sample-based energy score, and the correlation-matrix comparison
for the synthetic study.

Conventions fixed here: predicted quantiles are empirical per-step quantiles
of the sample paths with rank ceil(alpha * S), 1-indexed; the energy-score
metric splits paths into disjoint halves for the spread term and reuses the
training loss so both code paths agree bit for bit; sum-CRPS uses the full
path set for every term of its double sum, which keeps it non-negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import training
from .errors import (
    ConfigError,
    DegenerateVariance,
    ZeroDenominator,
    ZeroSeasonalError,
)

__all__ = [
    "DEFAULT_LEVELS",
    "DEFAULT_STEPS",
    "MetricConfig",
    "seasonal_lag_for",
    "quantile_loss",
    "empirical_quantile",
    "wql_per_level",
    "mean_wql",
    "per_step_wql",
    "sum_crps",
    "msis",
    "energy_score_metric",
    "pooled_correlation",
    "corr_mae",
    "EvaluationReport",
    "evaluate_forecasts",
]

DEFAULT_LEVELS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
DEFAULT_STEPS = (1, 5, 10, 15, 20)

# customary lag per frequency: one day of hours, one week of days, one year
# of weeks or months or quarters, one step for yearly data
_SEASONAL_LAGS = {"H": 24, "D": 7, "W": 52, "M": 12, "Q": 4, "Y": 1}


def seasonal_lag_for(freq):
    try:
        return _SEASONAL_LAGS[freq]
    except KeyError:
        raise ConfigError(f"no seasonal lag defined for frequency {freq!r}") from None


@dataclass(frozen=True)
class MetricConfig:
    quantile_levels: tuple = DEFAULT_LEVELS
    wql_steps: tuple = DEFAULT_STEPS
    msis_zeta: float = 0.05
    seasonal_lag: int = 1
    energy_beta: float = 1.0

    def __post_init__(self):
        levels = tuple(self.quantile_levels)
        if not levels or any(not 0.0 < a < 1.0 for a in levels):
            raise ConfigError("quantile levels must lie strictly inside (0, 1)")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ConfigError("quantile levels must be strictly increasing")
        steps = tuple(self.wql_steps)
        if not steps or any(s < 1 for s in steps) or any(
            b <= a for a, b in zip(steps, steps[1:])
        ):
            raise ConfigError("wql steps must be strictly increasing and >= 1")
        if not 0.0 < self.msis_zeta < 1.0:
            raise ConfigError(f"msis_zeta must lie in (0, 1), got {self.msis_zeta}")
        if self.seasonal_lag < 1:
            raise ConfigError(f"seasonal_lag must be >= 1, got {self.seasonal_lag}")
        if not 0.0 < self.energy_beta < 2.0:
            raise ConfigError(f"energy_beta must lie in (0, 2), got {self.energy_beta}")
        object.__setattr__(self, "quantile_levels", levels)
        object.__setattr__(self, "wql_steps", steps)


def quantile_loss(z, z_hat, alpha):
    """Pinball loss (z - z_hat)(alpha - 1{z - z_hat < 0})."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    diff = np.asarray(z, dtype=np.float64) - np.asarray(z_hat, dtype=np.float64)
    out = diff * (alpha - (diff < 0))
    return float(out) if out.ndim == 0 else out


def empirical_quantile(paths, level):
    """Order statistic of rank ceil(level * S), 1-indexed, along axis 0."""
    paths = np.asarray(paths, dtype=np.float64)
    s = paths.shape[0]
    if s < 1:
        raise ConfigError("need at least one sample path")
    if not 0.0 < level < 1.0:
        raise ConfigError(f"quantile level must lie in (0, 1), got {level}")
    rank = math.ceil(level * s)
    out = np.sort(paths, axis=0)[rank - 1]
    return float(out) if out.ndim == 0 else out


def _as_panel(targets, sample_paths):
    targets = np.asarray(targets, dtype=np.float64)
    paths = np.asarray(sample_paths, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[None, :]
    if paths.ndim == 2:
        paths = paths[None, :, :]
    if targets.ndim != 2 or paths.ndim != 3:
        raise ConfigError("expect targets (series, steps) and paths (series, samples, steps)")
    if paths.shape[0] != targets.shape[0] or paths.shape[2] != targets.shape[1]:
        raise ConfigError(
            f"paths shape {paths.shape} inconsistent with targets {targets.shape}"
        )
    return targets, paths


def wql_per_level(targets, sample_paths, levels=DEFAULT_LEVELS):
    """Weighted quantile loss per level, pooled over series and steps."""
    targets, paths = _as_panel(targets, sample_paths)
    denom = float(np.sum(np.abs(targets)))
    if denom == 0.0:
        raise ZeroDenominator("sum |target| is zero; weighted quantile loss undefined")
    out = np.empty(len(levels))
    for k, alpha in enumerate(levels):
        q = empirical_quantile(np.swapaxes(paths, 0, 1), alpha)  # (series, steps)
        out[k] = 2.0 * float(np.sum(quantile_loss(targets, q, alpha))) / denom
    return out


def mean_wql(targets, sample_paths, levels=DEFAULT_LEVELS):
    return float(np.mean(wql_per_level(targets, sample_paths, levels)))


def per_step_wql(targets, sample_paths, step, levels=DEFAULT_LEVELS):
    """Weighted quantile loss restricted to one 1-based horizon step."""
    targets, paths = _as_panel(targets, sample_paths)
    if not 1 <= step <= targets.shape[1]:
        raise ConfigError(f"step {step} outside horizon 1..{targets.shape[1]}")
    i = step - 1
    return mean_wql(targets[:, i : i + 1], paths[:, :, i : i + 1], levels)


def sum_crps(targets, sample_paths):
    """CRPS of the horizon sums, estimated from all paths, averaged over series."""
    targets, paths = _as_panel(targets, sample_paths)
    if paths.shape[1] < 2:
        raise ConfigError("need at least 2 sample paths")
    path_sums = paths.sum(axis=2)  # (series, samples)
    target_sums = targets.sum(axis=1)
    s = path_sums.shape[1]
    spread = np.abs(path_sums[:, :, None] - path_sums[:, None, :]).sum(axis=(1, 2))
    closeness = np.abs(path_sums - target_sums[:, None]).sum(axis=1)
    per_series = -spread / (2.0 * s * s) + closeness / s
    return float(per_series.mean())


def _history_rows(history):
    if isinstance(history, np.ndarray) and history.ndim == 2:
        return [history[i] for i in range(history.shape[0])]
    return [np.asarray(h, dtype=np.float64) for h in history]


def msis(targets, sample_paths, history, zeta=0.05, f=1):
    """Scaled interval score of the central (1 - zeta) interval.

    ``history`` holds each series' past observations for the seasonal error;
    every series needs more than ``f`` of them, pooled into one denominator.
    """
    targets, paths = _as_panel(targets, sample_paths)
    if not 0.0 < zeta < 1.0:
        raise ConfigError(f"zeta must lie in (0, 1), got {zeta}")
    if f < 1:
        raise ConfigError(f"seasonal lag must be >= 1, got {f}")
    rows = _history_rows(history)
    if len(rows) != targets.shape[0]:
        raise ConfigError(
            f"{len(rows)} history rows for {targets.shape[0]} series"
        )
    num = 0.0
    terms = 0
    for h in rows:
        if h.ndim != 1 or h.size <= f:
            raise ConfigError(f"history length must exceed the lag {f}")
        num += float(np.sum(np.abs(h[:-f] - h[f:])))
        terms += h.size - f
    se = num / terms
    if se == 0.0:
        raise ZeroSeasonalError("seasonal error is zero; MSIS undefined")
    by_sample = np.swapaxes(paths, 0, 1)
    lower = empirical_quantile(by_sample, zeta / 2.0)
    upper = empirical_quantile(by_sample, 1.0 - zeta / 2.0)
    width = upper - lower
    below = np.where(targets < lower, lower - targets, 0.0)
    above = np.where(targets > upper, targets - upper, 0.0)
    score = width + (2.0 / zeta) * (below + above)
    return float(score.mean()) / se


def energy_score_metric(targets, sample_paths, beta=1.0):
    """Per-series energy score averaged over series.

    The spread term uses the first floor(S/2) paths against the rest; the
    closeness term uses every path.  Shares the training-loss implementation
    so reported scores and optimized scores are the same function.
    """
    targets, paths = _as_panel(targets, sample_paths)
    s = paths.shape[1]
    if s < 2:
        raise ConfigError("need at least 2 sample paths")
    half = s // 2
    scores = [
        training.energy_score_loss(
            paths[i, :half], paths[i, half:], paths[i], targets[i], beta
        )
        for i in range(paths.shape[0])
    ]
    return float(np.mean(scores))


def pooled_correlation(sample_paths):
    """Correlation matrix of paths pooled across series.

    Paths are standardized per series and per step before pooling, so every
    series contributes its correlation structure regardless of level or
    scale.
    """
    paths = np.asarray(sample_paths, dtype=np.float64)
    if paths.ndim == 2:
        paths = paths[None, :, :]
    if paths.ndim != 3 or paths.shape[1] < 2:
        raise ConfigError("need (series, samples >= 2, steps) sample paths")
    n = paths.shape[2]
    mean = paths.mean(axis=1, keepdims=True)
    std = paths.std(axis=1, keepdims=True)
    if np.any(std == 0.0):
        raise DegenerateVariance("a per-series step has zero sample variance")
    pooled = ((paths - mean) / std).reshape(-1, n)
    return (pooled.T @ pooled) / pooled.shape[0]


def corr_mae(sample_paths, true_corr):
    """MAE between the pooled sample correlation matrix and a reference."""
    corr = pooled_correlation(sample_paths)
    true_corr = np.asarray(true_corr, dtype=np.float64)
    if true_corr.shape != corr.shape:
        raise ConfigError(
            f"reference correlation must be {corr.shape}, got {true_corr.shape}"
        )
    return float(np.mean(np.abs(corr - true_corr)))


# ---------------------------------------------------------------------------
# aggregate report


@dataclass
class EvaluationReport:
    mean_wql: float
    wql_levels: dict
    wql_steps: dict
    sum_crps: float
    energy_score: float
    msis: float | None = None
    corr_mae: float | None = None

    def to_dict(self):
        """Flat JSON document with fixed key names; absent metrics omitted."""
        out = {"mean_wql": self.mean_wql}
        for level, value in self.wql_levels.items():
            out[f"wql_level_{level:g}"] = value
        for step, value in self.wql_steps.items():
            out[f"wql_step_{step}"] = value
        out["sum_crps"] = self.sum_crps
        if self.msis is not None:
            out["msis"] = self.msis
        out["energy_score"] = self.energy_score
        if self.corr_mae is not None:
            out["corr_mae"] = self.corr_mae
        return out


def evaluate_forecasts(targets, sample_paths, config=None, history=None,
                       true_corr=None):
    """All metrics for one forecast panel.

    MSIS needs ``history``; the correlation MAE needs ``true_corr``; either
    is omitted from the report when its input is missing.
    """
    config = MetricConfig() if config is None else config
    targets, paths = _as_panel(targets, sample_paths)
    levels = config.quantile_levels
    per_level = wql_per_level(targets, paths, levels)
    horizon = targets.shape[1]
    steps = {
        step: per_step_wql(targets, paths, step, levels)
        for step in config.wql_steps
        if step <= horizon
    }
    report = EvaluationReport(
        mean_wql=float(np.mean(per_level)),
        wql_levels={a: float(v) for a, v in zip(levels, per_level)},
        wql_steps=steps,
        sum_crps=sum_crps(targets, paths),
        energy_score=energy_score_metric(targets, paths, config.energy_beta),
    )
    if history is not None:
        report.msis = msis(
            targets, paths, history, config.msis_zeta, config.seasonal_lag
        )
    if true_corr is not None:
        report.corr_mae = corr_mae(paths, true_corr)
    return report
