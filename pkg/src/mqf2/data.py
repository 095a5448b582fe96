"""Dataset io, splitting, calendar covariates, and synthetic generators.

On-disk format: one JSON object per line ({"start", "target", optional
"feat_dynamic_real", optional "item_id"}) next to a sidecar ``metadata.json``
holding the frequency and prediction length.  Timestamps are naive
proleptic-Gregorian with fixed-width steps; no timezone rules enter any
computation, which keeps runs bit-reproducible across platforms.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    FactorizationFailure,
    LengthMismatch,
    MissingMetadata,
    ParseError,
    SeriesTooShort,
    UnknownFrequency,
)
from .seeding import rng_for

FREQUENCIES = ("H", "D", "W", "M", "Q", "Y")

METADATA_NAME = "metadata.json"


@dataclass
class Series:
    item_id: str
    start: str
    target: np.ndarray
    covariates: np.ndarray | None = None

    def __len__(self):
        return len(self.target)


@dataclass
class TimeSeriesDataset:
    series: list
    freq: str
    prediction_length: int

    def __len__(self):
        return len(self.series)


# ---------------------------------------------------------------------------
# json-lines io


def _metadata_path(path):
    return Path(path).parent / METADATA_NAME


def load_jsonlines(path):
    """Read a dataset file plus its sidecar metadata."""
    path = Path(path)
    meta_path = _metadata_path(path)
    if not meta_path.exists():
        raise MissingMetadata(f"no {METADATA_NAME} next to {path}")
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    if "freq" not in meta or "prediction_length" not in meta:
        raise MissingMetadata(
            f"{meta_path} must define 'freq' and 'prediction_length'"
        )
    freq = meta["freq"]
    if freq not in FREQUENCIES:
        raise UnknownFrequency(f"unsupported frequency {freq!r} in {meta_path}")
    tau = int(meta["prediction_length"])
    if tau < 1:
        raise MissingMetadata(f"{meta_path}: prediction_length must be >= 1")

    series = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(
                    f"{path}:{lineno}: invalid JSON ({exc.msg})", line_number=lineno
                ) from exc
            if not isinstance(obj, dict) or "start" not in obj or "target" not in obj:
                raise ParseError(
                    f"{path}:{lineno}: each line needs 'start' and 'target'",
                    line_number=lineno,
                )
            target = np.asarray(obj["target"], dtype=np.float64)
            if target.ndim != 1 or target.size < 1:
                raise ParseError(
                    f"{path}:{lineno}: target must be a non-empty flat array",
                    line_number=lineno,
                )
            covariates = None
            if "feat_dynamic_real" in obj and obj["feat_dynamic_real"] is not None:
                # stored feature-major (one row per covariate), held time-major
                feats = np.asarray(obj["feat_dynamic_real"], dtype=np.float64)
                if feats.ndim != 2:
                    raise ParseError(
                        f"{path}:{lineno}: feat_dynamic_real must be a list of rows",
                        line_number=lineno,
                    )
                if feats.shape[1] != target.size:
                    raise LengthMismatch(
                        f"{path}:{lineno}: covariate length {feats.shape[1]} "
                        f"!= target length {target.size}"
                    )
                covariates = feats.T.copy()
            item_id = str(obj.get("item_id", f"series_{lineno - 1}"))
            series.append(Series(item_id, str(obj["start"]), target, covariates))
    return TimeSeriesDataset(series, freq, tau)


def save_jsonlines(dataset, path):
    """Write the dataset and its sidecar metadata; inverse of load."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for s in dataset.series:
            obj = {"item_id": s.item_id, "start": s.start, "target": list(s.target)}
            if s.covariates is not None:
                obj["feat_dynamic_real"] = [list(col) for col in s.covariates.T]
            fh.write(json.dumps(obj, separators=(",", ":")))
            fh.write("\n")
    with open(_metadata_path(path), "w", encoding="utf-8") as fh:
        json.dump(
            {"freq": dataset.freq, "prediction_length": dataset.prediction_length},
            fh,
            separators=(",", ":"),
        )
        fh.write("\n")


def split(dataset, tau=None):
    """Hold out the final ``tau`` points of every series.

    Returns (train, test): train drops the holdout, test keeps full series so
    metrics can read both the history and the target window.
    """
    tau = dataset.prediction_length if tau is None else int(tau)
    short = [s.item_id for s in dataset.series if len(s) <= tau]
    if short:
        raise SeriesTooShort(
            f"{len(short)} series shorter than holdout {tau} + 1: {short[:5]}",
            ids=short,
        )
    train = [
        Series(
            s.item_id,
            s.start,
            s.target[:-tau].copy(),
            None if s.covariates is None else s.covariates[:-tau].copy(),
        )
        for s in dataset.series
    ]
    return (
        TimeSeriesDataset(train, dataset.freq, tau),
        TimeSeriesDataset(dataset.series, dataset.freq, tau),
    )


# ---------------------------------------------------------------------------
# calendar covariates


def _parse_start(start):
    try:
        return dt.datetime.fromisoformat(start)
    except ValueError as exc:
        raise ParseError(f"unparseable timestamp {start!r}") from exc


def feature_dim(freq):
    """Covariate count produced by :func:`calendar_features` for ``freq``."""
    try:
        return {"H": 2, "D": 2, "W": 1, "M": 1, "Q": 1, "Y": 0}[freq]
    except KeyError:
        raise UnknownFrequency(f"unsupported frequency {freq!r}") from None


def calendar_features(freq, start, length):
    """Time covariates in [0, 1] for ``length`` steps from ``start``.

    Hourly: hour-of-day and day-of-week.  Daily: day-of-week and
    day-of-month.  Weekly: week-of-year.  Monthly: month-of-year.
    Quarterly: quarter-of-year.  Yearly: none.  Ordinal features are
    zero-based before normalization so every value stays inside [0, 1].
    """
    n_feat = feature_dim(freq)
    length = int(length)
    out = np.empty((length, n_feat))
    if n_feat == 0:
        return out
    t0 = _parse_start(start)
    if freq == "H":
        for i in range(length):
            ts = t0 + dt.timedelta(hours=i)
            out[i, 0] = ts.hour / 23.0
            out[i, 1] = ts.weekday() / 6.0
    elif freq == "D":
        for i in range(length):
            ts = t0 + dt.timedelta(days=i)
            out[i, 0] = ts.weekday() / 6.0
            out[i, 1] = (ts.day - 1) / 30.0
    elif freq == "W":
        for i in range(length):
            ts = t0 + dt.timedelta(weeks=i)
            out[i, 0] = (ts.isocalendar().week - 1) / 52.0
    elif freq == "M":
        month0 = t0.month - 1
        for i in range(length):
            out[i, 0] = ((month0 + i) % 12) / 11.0
    elif freq == "Q":
        quarter0 = (t0.month - 1) // 3
        for i in range(length):
            out[i, 0] = ((quarter0 + i) % 4) / 3.0
    return out


# ---------------------------------------------------------------------------
# synthetic generators


@dataclass(frozen=True)
class GpConfig:
    num_series: int = 500
    length: int = 24
    rbf_lengthscale: float = 5.0
    rbf_variance: float = 0.5
    periodic_period: float = 12.0
    periodic_lengthscale: float = 1.0
    periodic_variance: float = 0.5
    noise_jitter: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        for name in (
            "rbf_lengthscale",
            "rbf_variance",
            "periodic_period",
            "periodic_lengthscale",
            "periodic_variance",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if self.noise_jitter < 1e-8:
            raise ConfigError("noise_jitter must be >= 1e-8")
        if self.num_series < 1 or self.length < 2:
            raise ConfigError("need num_series >= 1 and length >= 2")


def gp_kernel(config):
    """Covariance matrix over the step grid 0..length-1."""
    t = np.arange(config.length, dtype=np.float64)
    d = t[:, None] - t[None, :]
    rbf = config.rbf_variance * np.exp(-(d**2) / (2.0 * config.rbf_lengthscale**2))
    per = config.periodic_variance * np.exp(
        -2.0
        * np.sin(np.pi * d / config.periodic_period) ** 2
        / config.periodic_lengthscale**2
    )
    return rbf + per + config.noise_jitter * np.eye(config.length)


def gp_truth_correlation(config):
    k = gp_kernel(config)
    sd = np.sqrt(np.diag(k))
    return k / np.outer(sd, sd)


def gp_synthesize(config):
    """Zero-mean draws from the configured kernel as an hourly dataset with
    the full window as prediction horizon."""
    k = gp_kernel(config)
    try:
        chol = np.linalg.cholesky(k)
    except np.linalg.LinAlgError as exc:
        raise FactorizationFailure(
            f"kernel factorization failed at jitter {config.noise_jitter}; raise it"
        ) from exc
    rng = rng_for(config.seed, "data")
    draws = rng.standard_normal((config.num_series, config.length)) @ chol.T
    series = [
        Series(f"gp_{i:04d}", "2020-01-01 00:00:00", draws[i].copy())
        for i in range(config.num_series)
    ]
    return TimeSeriesDataset(series, "H", config.length)


def iid_gaussian_dataset(num_series, context_length, mean, std, seed):
    """Series of ``context_length`` zeros followed by one independent
    N(mean, std^2) value; yearly frequency so no covariates exist and the
    conditioning window is exactly zero."""
    rng = rng_for(seed, "data")
    values = mean + std * rng.standard_normal(num_series)
    series = []
    for i in range(num_series):
        target = np.zeros(context_length + 1)
        target[-1] = values[i]
        series.append(Series(f"iid_{i:04d}", "2000-01-01 00:00:00", target))
    return TimeSeriesDataset(series, "Y", 1)


# ---------------------------------------------------------------------------
# correlation matrix io


def export_corr(matrix, path):
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ConfigError("correlation matrix must be 2-D")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        for row in matrix:
            writer.writerow([repr(float(v)) for v in row])


def read_corr(path):
    with open(path, newline="", encoding="ascii") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return np.array(rows, dtype=np.float64)
