"""The quantile-map model: sampling, inversion, densities, diagnostics.

A model couples a convex potential network with a recurrent encoder and a
mode.  In energy-score mode the potential's gradient maps reference draws to
forecast paths (forward sampling).  In likelihood mode the same gradient runs
the other way, observation to reference, which makes the log-density exact
and turns forecasting into inversion of the map.  Either way the map is the
gradient of a strongly convex function, so it is monotone and invertible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import encoder as enc
from . import graph as gr
from . import lbfgs
from . import picnn
from .errors import ConfigError, DataFormatError, NonConvergence
from .picnn import _as_rows
from .seeding import rng_for

MODES = ("es", "ml")
CHECKPOINT_VERSION = 1

# rows per joint inversion solve; bounds the summed objective so the line
# search keeps per-row residual resolution well below tolerance
_INVERT_CHUNK = 4096


@dataclass
class QuantileModel:
    picnn_config: picnn.PicnnConfig
    encoder_config: enc.EncoderConfig
    mode: str
    params: dict = field(repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.picnn_config.context_dim != self.encoder_config.hidden_size:
            raise ConfigError(
                "potential context_dim must equal encoder hidden_size: "
                f"{self.picnn_config.context_dim} != {self.encoder_config.hidden_size}"
            )

    @property
    def horizon(self):
        return self.picnn_config.input_dim


def param_shapes(picnn_config, encoder_config):
    return {**picnn.param_shapes(picnn_config), **enc.param_shapes(encoder_config)}


def new_model(picnn_config, encoder_config, mode, rng):
    """Fresh model with independently initialized potential and encoder."""
    params = {
        **picnn.init_params(picnn_config, rng),
        **enc.init_params(encoder_config, rng),
    }
    return QuantileModel(picnn_config, encoder_config, mode, params)


def validate_params(model):
    """Raise unless the parameter dict matches the declared shapes exactly."""
    want = param_shapes(model.picnn_config, model.encoder_config)
    have = set(model.params)
    if have != set(want):
        missing = sorted(set(want) - have)
        extra = sorted(have - set(want))
        raise ConfigError(f"parameter names mismatch: missing {missing}, extra {extra}")
    for name, shape in want.items():
        arr = np.asarray(model.params[name])
        if arr.shape != shape:
            raise ConfigError(f"{name} expects shape {shape}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ConfigError(f"{name} contains non-finite values")


def context_vector(model, window):
    """Encoder context h for one conditioning window (or a batch)."""
    return enc.encode(model.params, model.encoder_config, window)


# ---------------------------------------------------------------------------
# forward sampling


def sample_forward(model, h, num_samples, seed):
    """Map ``num_samples`` standard-normal reference draws through the
    potential gradient, in draw order.

    This is the forecast sampler in energy-score mode.  In likelihood mode
    the map points the other way, so the output is a diagnostic image of the
    reference distribution, not the forecast; use :func:`sample_paths` for
    mode-correct forecasting.
    """
    rng = seed if isinstance(seed, np.random.Generator) else rng_for(seed, "sampling")
    draws = rng.standard_normal((int(num_samples), model.horizon))
    return picnn.grad_potential(model.params, model.picnn_config, draws, h)


def sample_paths(model, h, num_samples, seed, tol=1e-6, max_iter=200):
    """Forecast paths for one context: forward map in energy-score mode,
    inversion of reference draws in likelihood mode.

    ``tol`` and ``max_iter`` only affect the likelihood route; a sharply
    curved potential can need more than the default iteration budget.
    """
    if model.mode == "es":
        return sample_forward(model, h, num_samples, seed)
    rng = seed if isinstance(seed, np.random.Generator) else rng_for(seed, "sampling")
    draws = rng.standard_normal((int(num_samples), model.horizon))
    return invert(model, draws, h, tol=tol, max_iter=max_iter)


# ---------------------------------------------------------------------------
# inversion


def _invert_program(config, n_rows, shared_context):
    leaves = picnn.param_leaves(config)
    alpha = gr.leaf("alpha", (n_rows, config.input_dim))
    h = gr.leaf("h", (1 if shared_context else n_rows, config.context_dim))
    y = gr.leaf("y", (n_rows, config.input_dim))
    u = picnn.embed_nodes(config, h, leaves)
    pot = picnn.potential_nodes(config, alpha, u, leaves)
    obj = gr.reduce_sum(pot) - gr.reduce_sum(alpha * y)
    g = gr.gradient(obj, [alpha])["alpha"]
    return gr.Program([obj, g])


_invert_cache = {}


def _invert_prog(config, n_rows, shared_context):
    key = (config, n_rows, shared_context)
    prog = _invert_cache.get(key)
    if prog is None:
        prog = _invert_cache[key] = _invert_program(config, n_rows, shared_context)
    return prog


def _solve_rows(model, yv, hv, shared, thresholds, max_iter):
    """Jointly minimize sum_b G(z_b, h_b) - z_b . y_b; the objective is
    separable over rows, so one flat solve handles the whole batch."""
    config = model.picnn_config
    n_rows, n = yv.shape
    prog = _invert_prog(config, n_rows, shared)
    bind = {**model.params, "h": hv, "y": yv}

    def fun_grad(x):
        bind["alpha"] = x.reshape(n_rows, n)
        # far-out trial points of the line search may overflow; it treats a
        # non-finite value as a rejected step, so do not warn
        with np.errstate(over="ignore", invalid="ignore"):
            f, g = prog(bind)
        return float(f), np.ravel(g)

    def row_residuals(x):
        bind["alpha"] = x.reshape(n_rows, n)
        with np.errstate(over="ignore", invalid="ignore"):
            _, g = prog(bind)
        return np.max(np.abs(g), axis=1)

    def converged(x, g):
        per_row = np.max(np.abs(g.reshape(n_rows, n)), axis=1)
        return bool(np.all(per_row <= thresholds))

    # start from the better of y and y/gamma per row; exact for the pure
    # quadratic potential at either extreme of the learned weights
    gamma = picnn.effective_gamma(config, model.params)
    candidates = [yv, yv / gamma]
    resids = [row_residuals(c.ravel()) for c in candidates]
    pick = np.argmin(np.stack(resids, axis=0), axis=0)
    z0 = np.where(pick[:, None] == 0, candidates[0], candidates[1])

    res = lbfgs.minimize(fun_grad, z0.ravel(), converged, max_iter=max_iter)
    z = res.x.reshape(n_rows, n)
    return z, row_residuals(res.x), res.iterations


def invert(model, y, h, tol=1e-6, max_iter=200):
    """Preimage of ``y`` under the potential gradient at context ``h``.

    Solves min_z G(z, h) - z.y, whose unique stationary point satisfies
    grad G(z) = y by strong convexity.  Accepts a single vector or a batch
    of rows (with one shared or per-row contexts).  The returned iterate
    satisfies ||grad G(z) - y||_inf <= tol * (1 + ||y||_inf) per row; the
    solver internally aims two orders below that, re-solves any stragglers
    individually, and raises NonConvergence only if a row still misses the
    contract.
    """
    config = model.picnn_config
    yv, single_y = _as_rows(y, config.input_dim, "target")
    hv, single_h = _as_rows(h, config.context_dim, "context")
    if not single_h and hv.shape[0] != yv.shape[0]:
        raise ConfigError("row counts of target and context differ")

    thresholds = tol * (1.0 + np.max(np.abs(yv), axis=1))
    z = np.empty_like(yv)
    resid = np.empty(yv.shape[0])
    for lo in range(0, yv.shape[0], _INVERT_CHUNK):
        hi = min(lo + _INVERT_CHUNK, yv.shape[0])
        hc = hv if single_h else hv[lo:hi]
        z[lo:hi], resid[lo:hi], _ = _solve_rows(
            model, yv[lo:hi], hc, single_h, 0.01 * thresholds[lo:hi], max_iter
        )

    bad = np.flatnonzero(resid > thresholds)
    for b in bad:
        hb = hv if single_h else hv[b : b + 1]
        zb, rb, its = _solve_rows(
            model, yv[b : b + 1], hb, single_h, 0.01 * thresholds[b : b + 1], max_iter
        )
        z[b], resid[b] = zb[0], rb[0]
        if resid[b] > thresholds[b]:
            raise NonConvergence(
                f"inversion missed tolerance on row {b}: "
                f"residual {resid[b]:.3e} > {thresholds[b]:.3e}",
                residual=float(resid[b]),
                iterations=its,
            )
    return z[0] if single_y else z


# ---------------------------------------------------------------------------
# exact log-density (likelihood mode)


def _density_program(config, n_rows, shared_context):
    n = config.input_dim
    leaves = picnn.param_leaves(config)
    alpha = gr.leaf("alpha", (n_rows, n))
    h = gr.leaf("h", (1 if shared_context else n_rows, config.context_dim))
    u = picnn.embed_nodes(config, h, leaves)
    pot = picnn.potential_nodes(config, alpha, u, leaves)
    g = gr.gradient(gr.reduce_sum(pot), [alpha])["alpha"]
    # rows are independent, so differentiating the summed i-th component
    # recovers every row's i-th Hessian row in one pass
    hess_rows = [
        gr.gradient(gr.reduce_sum(gr.index_axis(g, 1, i)), [alpha])["alpha"]
        for i in range(n)
    ]
    hess = gr.stack(hess_rows, axis=1)
    logp = (
        gr.constant(-0.5 * n * np.log(2.0 * np.pi))
        + gr.constant(-0.5) * gr.sq_norm_last(g)
        + gr.logdet_spd(hess)
    )
    return gr.Program([logp])


_density_cache = {}


def _density_prog(config, n_rows, shared_context):
    key = (config, n_rows, shared_context)
    prog = _density_cache.get(key)
    if prog is None:
        prog = _density_cache[key] = _density_program(config, n_rows, shared_context)
    return prog


def log_density(model, z, h):
    """Exact log p(z | h) by change of variables through the map.

    The potential gradient sends the observation to the reference Gaussian,
    so log p(z) = log phi_n(g(z, h)) + log det H(z, h) with H the potential's
    Hessian in z, symmetric positive definite by strong convexity.
    """
    config = model.picnn_config
    n = config.input_dim
    if n > gr.HESSIAN_DIM_CAP:
        raise ConfigError(
            f"exact log-density supports dimension <= {gr.HESSIAN_DIM_CAP}, got {n}"
        )
    zv, single_z = _as_rows(z, n, "observation")
    hv, single_h = _as_rows(h, config.context_dim, "context")
    if not single_h and hv.shape[0] != zv.shape[0]:
        raise ConfigError("row counts of observation and context differ")
    prog = _density_prog(config, zv.shape[0], single_h)
    (lp,) = prog({**model.params, "alpha": zv, "h": hv})
    return float(lp[0]) if single_z else lp


# ---------------------------------------------------------------------------
# monotone-inverse diagnostic


@dataclass
class InverseMonotoneReport:
    symmetry_errors: np.ndarray
    min_eigenvalues: np.ndarray
    delta: float
    symmetry_threshold: float
    eigenvalue_threshold: float

    @property
    def per_sample_pass(self):
        return (self.symmetry_errors <= self.symmetry_threshold) & (
            self.min_eigenvalues >= self.eigenvalue_threshold
        )

    @property
    def passed(self):
        return bool(np.all(self.per_sample_pass))


def check_inverse_monotone(
    model, y_samples, h=None, delta=1e-3, symmetry_threshold=1e-3,
    eigenvalue_threshold=-1e-6,
):
    """Numerically verify that the inverse map is the gradient of a convex
    function: its finite-difference Jacobian must be symmetric with
    nonnegative spectrum at every probed point."""
    config = model.picnn_config
    n = config.input_dim
    ys, _ = _as_rows(y_samples, n, "probe point")
    if h is None:
        h = np.zeros(config.context_dim)
    k = ys.shape[0]
    eye = np.eye(n)
    # all 2kn perturbed inversions go through one batched solve
    probes = np.concatenate(
        [
            (ys[:, None, :] + delta * eye[None, :, :]).reshape(k * n, n),
            (ys[:, None, :] - delta * eye[None, :, :]).reshape(k * n, n),
        ]
    )
    z = invert(model, probes, h)
    z_plus = z[: k * n].reshape(k, n, n)
    z_minus = z[k * n :].reshape(k, n, n)

    sym = np.empty(k)
    mineig = np.empty(k)
    for i in range(k):
        jac = (z_plus[i] - z_minus[i]).T / (2.0 * delta)
        sym[i] = float(np.max(np.abs(jac - jac.T)))
        mineig[i] = float(np.min(np.linalg.eigvalsh(0.5 * (jac + jac.T))))
    return InverseMonotoneReport(
        sym, mineig, delta, symmetry_threshold, eigenvalue_threshold
    )


# ---------------------------------------------------------------------------
# checkpoints


def _config_doc(model):
    p, e = model.picnn_config, model.encoder_config
    return {
        "potential": {
            "input_dim": p.input_dim,
            "context_dim": p.context_dim,
            "hidden_width": p.hidden_width,
            "num_layers": p.num_layers,
            "gamma_floor": p.gamma_floor,
        },
        "encoder": {
            "context_length": e.context_length,
            "feature_dim": e.feature_dim,
            "hidden_size": e.hidden_size,
            "num_layers": e.num_layers,
        },
    }


def save_checkpoint(model, path):
    """Write the model as JSON.  Python serializes floats by shortest
    round-tripping repr, so save -> load -> save is byte-identical."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "mode": model.mode,
        **_config_doc(model),
        "params": {
            name: {"shape": list(arr.shape), "values": np.ravel(arr).tolist()}
            for name, arr in sorted(model.params.items())
        },
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def _bypass_dataclass(cls, fields):
    obj = object.__new__(cls)
    for key, value in fields.items():
        object.__setattr__(obj, key, value)
    return obj


def load_checkpoint(path, validate=True):
    """Read a checkpoint.  With ``validate=False`` the configuration checks
    are bypassed so diagnostic tooling can inspect corrupted files."""
    try:
        with open(path, encoding="ascii") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"checkpoint {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise DataFormatError(f"checkpoint {path}: top level must be an object")
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise DataFormatError(
            f"checkpoint {path}: format_version {version!r}, expected {CHECKPOINT_VERSION}"
        )
    try:
        pot = doc["potential"]
        rnn = doc["encoder"]
        mode = doc["mode"]
        params = {
            name: np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
            for name, entry in doc["params"].items()
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"checkpoint {path}: malformed field ({exc})") from exc

    if validate:
        try:
            picnn_config = picnn.PicnnConfig(**pot)
            encoder_config = enc.EncoderConfig(**rnn)
            model = QuantileModel(picnn_config, encoder_config, mode, params)
            validate_params(model)
        except (ConfigError, TypeError) as exc:
            raise DataFormatError(f"checkpoint {path}: {exc}") from exc
        return model
    picnn_config = _bypass_dataclass(picnn.PicnnConfig, pot)
    encoder_config = _bypass_dataclass(enc.EncoderConfig, rnn)
    model = _bypass_dataclass(
        QuantileModel,
        {
            "picnn_config": picnn_config,
            "encoder_config": encoder_config,
            "mode": mode,
            "params": params,
        },
    )
    return model
