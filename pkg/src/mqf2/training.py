"""Training objectives, the windowed instance sampler, and the optimizer loop.

Two objectives share one model family: a sample-based energy score over
forward-mapped reference draws, and an exact negative log-likelihood through
the inverse map's change of variables.  Both are differentiated end to end
through the encoder and the potential network on a single expression graph,
so the score's dependence on parameters through the gradient map needs no
special handling.

All losses are computed on mean-scaled targets.  The likelihood picks up the
constant n*log(s) per instance so reported values refer to original units;
the energy score is reported in scaled units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import data as datamod
from . import encoder as enc
from . import graph as gr
from . import model as modelmod
from . import picnn
from .encoder import scale_window
from .errors import ConfigError, NonFiniteLoss, SeriesTooShort
from .seeding import rng_for

__all__ = [
    "TrainConfig",
    "TrainingInstance",
    "TrainingInstances",
    "energy_score_loss",
    "nll_loss",
    "make_instances",
    "es_loss_program",
    "ml_loss_program",
    "train",
    "IndependentBaseline",
    "baseline_independent",
]


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "es"
    beta: float = 1.0
    es_samples: int = 50
    batch_size: int = 32
    epochs: int = 50
    learning_rate: float = 1e-3
    grad_clip: float = 10.0
    seed: int = 0
    # windows drawn per epoch; None means one per series in the dataset
    instances_per_epoch: int | None = None

    def __post_init__(self):
        if self.mode not in modelmod.MODES:
            raise ConfigError(f"mode must be one of {modelmod.MODES}, got {self.mode!r}")
        if not 0.0 < self.beta < 2.0:
            raise ConfigError(f"beta must lie in (0, 2), got {self.beta}")
        if self.es_samples < 2:
            raise ConfigError(f"es_samples must be >= 2, got {self.es_samples}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0.0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not self.grad_clip > 0.0:
            raise ConfigError(f"grad_clip must be > 0, got {self.grad_clip}")
        if self.instances_per_epoch is not None and self.instances_per_epoch < 1:
            raise ConfigError("instances_per_epoch must be >= 1 when given")


# ---------------------------------------------------------------------------
# energy score


def _pair_sum(a, b, beta):
    """Sum over all pairs of ||a_i - b_j||^beta along the trailing two axes.

    ``a`` is (..., Sa, n) and ``b`` (..., Sb, n); leading axes must match.
    """
    lead = a.shape[:-2]
    sa, n = a.shape[-2:]
    sb = b.shape[-2]
    left = gr.reshape(a, lead + (sa, 1, n))
    right = gr.reshape(b, lead + (1, sb, n))
    return gr.reduce_sum(gr.norm_pow_last(left - right, beta), axis=(-2, -1))


def energy_score_nodes(samples_a, samples_b, samples_c, target, beta):
    """Score graph: spread over A x B pairs against closeness of C to target.

    Sample nodes are (..., S, n), the target (..., n); returns a node with
    the leading axes only.  Negative spread rewards diverse forecasts, the
    closeness term anchors them to the realized value.
    """
    sa = samples_a.shape[-2]
    sb = samples_b.shape[-2]
    sc = samples_c.shape[-2]
    lead = target.shape[:-1]
    n = target.shape[-1]
    spread = _pair_sum(samples_a, samples_b, beta)
    gap = samples_c - gr.reshape(target, lead + (1, n))
    closeness = gr.reduce_sum(gr.norm_pow_last(gap, beta), axis=-1)
    return (
        gr.constant(-0.5 / (sa * sb)) * spread
        + gr.constant(1.0 / sc) * closeness
    )


_score_cache = {}


def _score_program(sa, sb, sc, n, beta):
    key = (sa, sb, sc, n, float(beta))
    prog = _score_cache.get(key)
    if prog is None:
        a = gr.leaf("a", (sa, n))
        b = gr.leaf("b", (sb, n))
        c = gr.leaf("c", (sc, n))
        z = gr.leaf("z", (n,))
        prog = gr.Program(energy_score_nodes(a, b, c, z, beta))
        _score_cache[key] = prog
    return prog


def _sample_set(x, what):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1:
        raise ConfigError(f"{what} must be a non-empty set of vectors")
    return x


def energy_score_loss(samples_a, samples_b, samples_c, z, beta=1.0):
    """Scalar score of three forecast sample sets against one target."""
    a = _sample_set(samples_a, "samples_a")
    b = _sample_set(samples_b, "samples_b")
    c = _sample_set(samples_c, "samples_c")
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    n = z.shape[0]
    for name, s in (("samples_a", a), ("samples_b", b), ("samples_c", c)):
        if s.shape[1] != n:
            raise ConfigError(f"{name} has dimension {s.shape[1]}, target has {n}")
    prog = _score_program(a.shape[0], b.shape[0], c.shape[0], n, beta)
    return float(prog({"a": a, "b": b, "c": c, "z": z}))


def nll_loss(model, z, h):
    """Negative log-density of the target under the inverse map."""
    return -modelmod.log_density(model, z, h)


# ---------------------------------------------------------------------------
# instance sampling


@dataclass
class TrainingInstance:
    window: np.ndarray  # (context_length, 1 + feature_dim), scaled target first
    target: np.ndarray  # (n,) in original units
    scale: float


@dataclass
class TrainingInstances:
    instances: list
    skipped_series: int

    def __len__(self):
        return len(self.instances)

    def __getitem__(self, i):
        return self.instances[i]


def _admissible_starts(length, context_length, n):
    """Range of target-window starts for one series, or None if unusable.

    Long series slide an unpadded context; series shorter than context + n
    but at least n long left-pad the context with zero rows, so a dataset
    whose whole window is the forecast target still trains (conditioning on
    no history).  Series shorter than the target window are skipped.
    """
    if length >= context_length + n:
        return context_length, length - n + 1
    if length >= n:
        return 0, length - n + 1
    return None


def conditioning_window(target, feats, n_feat, j, context_length):
    """Scaled context window for a target starting at position ``j``.

    Fewer than ``context_length`` preceding observations left-pad the window
    with fully zero rows (target and covariate columns alike).  Returns the
    (context_length, 1 + n_feat) window and its mean scale.
    """
    past = np.zeros(context_length)
    real = max(0, context_length - j)  # rows of zero padding at the front
    past[real:] = target[max(0, j - context_length) : j]
    scaled, scale = scale_window(past)
    window = np.zeros((context_length, 1 + n_feat))
    window[:, 0] = scaled
    if n_feat and j > 0:
        window[real:, 1:] = feats[max(0, j - context_length) : j]
    return window, scale


def make_instances(dataset, context_length, n, count, seed):
    """Draw ``count`` training windows: a uniform series, then a uniform
    admissible target start within it.  ``seed`` may be a Generator to draw
    from an existing stream."""
    if context_length < 1 or n < 1 or count < 1:
        raise ConfigError("context_length, n, and count must all be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else rng_for(seed, "training")
    n_feat = datamod.feature_dim(dataset.freq)
    usable = []
    skipped = 0
    for s in dataset.series:
        starts = _admissible_starts(len(s), context_length, n)
        if starts is None:
            skipped += 1
        else:
            usable.append((s, starts))
    if not usable:
        raise SeriesTooShort(
            f"no series admits a {n}-step target window",
            ids=[s.item_id for s in dataset.series],
        )
    features = {}

    def series_features(s):
        feats = features.get(s.item_id)
        if feats is None:
            feats = datamod.calendar_features(dataset.freq, s.start, len(s))
            features[s.item_id] = feats
        return feats

    instances = []
    which = rng.integers(0, len(usable), size=count)
    for k in range(count):
        s, (lo, hi) = usable[which[k]]
        j = int(rng.integers(lo, hi))
        feats = series_features(s) if n_feat and j > 0 else None
        window, scale = conditioning_window(
            s.target, feats, n_feat, j, context_length
        )
        instances.append(TrainingInstance(window, s.target[j : j + n].copy(), scale))
    return TrainingInstances(instances, skipped)


# ---------------------------------------------------------------------------
# batched loss programs

# Programs are pure functions of their leaves, so they are cached across
# training runs keyed by every value baked into the graph.
_loss_cache = {}


def _context_nodes(encoder_config, batch_size, leaves):
    steps = [
        gr.leaf(f"x{t}", (batch_size, encoder_config.input_dim))
        for t in range(encoder_config.context_length)
    ]
    return enc.encode_nodes(encoder_config, steps, leaves)


def _sorted_params(picnn_config, encoder_config):
    return sorted(modelmod.param_shapes(picnn_config, encoder_config))


def es_loss_program(picnn_config, encoder_config, batch_size, es_samples, beta):
    """Batched energy-score loss and parameter gradients as one program.

    Leaves: every parameter, ``x0..x{C-1}`` context rows (batch, input_dim),
    ``alpha`` reference draws (batch * 2S, n), ``z`` scaled targets
    (batch, n).  Roots: [loss, grad per parameter in sorted name order].
    """
    key = ("es", picnn_config, encoder_config, batch_size, es_samples, float(beta))
    prog = _loss_cache.get(key)
    if prog is not None:
        return prog
    n = picnn_config.input_dim
    two_s = 2 * es_samples
    leaves = {
        **picnn.param_leaves(picnn_config),
        **enc.param_leaves(encoder_config),
    }
    h = _context_nodes(encoder_config, batch_size, leaves)
    u = picnn.embed_nodes(picnn_config, h, leaves)
    alpha = gr.leaf("alpha", (batch_size * two_s, n))
    pot = picnn.potential_nodes(
        picnn_config, alpha, gr.repeat_rows(u, two_s), leaves
    )
    w = gr.gradient(gr.reduce_sum(pot), [alpha])["alpha"]
    paths = gr.reshape(w, (batch_size, two_s, n))
    first = gr.slice_axis(paths, 1, 0, es_samples)
    second = gr.slice_axis(paths, 1, es_samples, two_s)
    z = gr.leaf("z", (batch_size, n))
    scores = energy_score_nodes(first, second, paths, z, beta)
    loss = gr.reduce_mean(scores)
    grads = gr.gradient(loss, _sorted_params(picnn_config, encoder_config))
    prog = gr.Program([loss] + [grads[name] for name in sorted(grads)])
    _loss_cache[key] = prog
    return prog


def ml_loss_program(picnn_config, encoder_config, batch_size):
    """Batched negative log-likelihood and parameter gradients.

    Leaves: parameters, context rows, and ``z`` scaled targets (batch, n).
    The per-instance n*log(scale) constant is added outside the graph.
    Roots as in :func:`es_loss_program`.
    """
    key = ("ml", picnn_config, encoder_config, batch_size)
    prog = _loss_cache.get(key)
    if prog is not None:
        return prog
    n = picnn_config.input_dim
    leaves = {
        **picnn.param_leaves(picnn_config),
        **enc.param_leaves(encoder_config),
    }
    h = _context_nodes(encoder_config, batch_size, leaves)
    u = picnn.embed_nodes(picnn_config, h, leaves)
    z = gr.leaf("z", (batch_size, n))
    pot = picnn.potential_nodes(picnn_config, z, u, leaves)
    g = gr.gradient(gr.reduce_sum(pot), [z])["z"]
    # rows are independent, so the summed i-th component's gradient is the
    # i-th Hessian row of every instance at once
    hess_rows = [
        gr.gradient(gr.reduce_sum(gr.index_axis(g, 1, i)), [z])["z"] for i in range(n)
    ]
    hess = gr.stack(hess_rows, axis=1)
    logp = (
        gr.constant(-0.5 * n * math.log(2.0 * math.pi))
        + gr.constant(-0.5) * gr.sq_norm_last(g)
        + gr.logdet_spd(hess)
    )
    loss = gr.constant(-1.0) * gr.reduce_mean(logp)
    grads = gr.gradient(loss, _sorted_params(picnn_config, encoder_config))
    prog = gr.Program([loss] + [grads[name] for name in sorted(grads)])
    _loss_cache[key] = prog
    return prog


def _batch_bindings(params, encoder_config, batch, draws=None):
    bindings = dict(params)
    context_length = encoder_config.context_length
    windows = np.stack([inst.window for inst in batch])
    for t in range(context_length):
        bindings[f"x{t}"] = windows[:, t, :]
    scales = np.array([inst.scale for inst in batch])
    targets = np.stack([inst.target for inst in batch])
    bindings["z"] = targets / scales[:, None]
    if draws is not None:
        bindings["alpha"] = draws
    return bindings, scales


# ---------------------------------------------------------------------------
# optimizer loop


def _clip_global(grads, max_norm):
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm:
        factor = max_norm / total
        grads = [g * factor for g in grads]
    return grads


def train(dataset, encoder_config, picnn_config, config,
          checkpoint_path=None, checkpoint_every=0, initial_model=None):
    """Fit a model to the dataset; returns (model, per-epoch mean loss).

    Optionally writes the checkpoint every ``checkpoint_every`` epochs (and
    always at the end) when ``checkpoint_path`` is given.  ``initial_model``
    warm-starts from existing parameters (optimizer moments start fresh);
    its mode and configurations must match the arguments.
    """
    n = picnn_config.input_dim
    if n != dataset.prediction_length:
        raise ConfigError(
            f"potential input_dim {n} != dataset prediction_length "
            f"{dataset.prediction_length}"
        )
    n_feat = datamod.feature_dim(dataset.freq)
    if encoder_config.feature_dim != n_feat:
        raise ConfigError(
            f"encoder feature_dim {encoder_config.feature_dim} != "
            f"{n_feat} covariates of frequency {dataset.freq!r}"
        )

    if initial_model is None:
        model = modelmod.new_model(
            picnn_config, encoder_config, config.mode, rng_for(config.seed, "init")
        )
    else:
        if (
            initial_model.mode != config.mode
            or initial_model.picnn_config != picnn_config
            or initial_model.encoder_config != encoder_config
        ):
            raise ConfigError("initial_model disagrees with the requested setup")
        model = modelmod.QuantileModel(
            picnn_config=picnn_config,
            encoder_config=encoder_config,
            mode=config.mode,
            params={k: np.array(p) for k, p in initial_model.params.items()},
        )
    rng_instances = rng_for(config.seed, "training")
    rng_draws = rng_for(config.seed, "sampling")

    per_epoch = config.instances_per_epoch
    if per_epoch is None:
        per_epoch = max(config.batch_size, len(dataset.series))
    steps_per_epoch = max(1, per_epoch // config.batch_size)
    batch_size = config.batch_size
    two_s = 2 * config.es_samples

    if config.mode == "es":
        prog = es_loss_program(
            picnn_config, encoder_config, batch_size, config.es_samples, config.beta
        )
    else:
        prog = ml_loss_program(picnn_config, encoder_config, batch_size)
    names = _sorted_params(picnn_config, encoder_config)

    m = {name: np.zeros_like(np.asarray(model.params[name])) for name in names}
    v = {name: np.zeros_like(np.asarray(model.params[name])) for name in names}
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0
    history = []

    for epoch in range(config.epochs):
        batches = make_instances(
            dataset,
            encoder_config.context_length,
            n,
            steps_per_epoch * batch_size,
            rng_instances,
        )
        epoch_losses = []
        for b in range(steps_per_epoch):
            batch = batches[b * batch_size : (b + 1) * batch_size]
            draws = (
                rng_draws.standard_normal((batch_size * two_s, n))
                if config.mode == "es"
                else None
            )
            bindings, scales = _batch_bindings(
                model.params, encoder_config, batch, draws
            )
            out = prog(bindings)
            loss = float(out[0])
            grads = out[1:]
            if config.mode == "ml":
                # constant from mean scaling; restores original-unit NLL
                loss += n * float(np.mean(np.log(scales)))
            if not math.isfinite(loss) or not all(
                np.all(np.isfinite(g)) for g in grads
            ):
                raise NonFiniteLoss(
                    f"non-finite loss or gradient at epoch {epoch}, batch {b}",
                    epoch=epoch,
                    batch_index=b,
                )
            grads = _clip_global(grads, config.grad_clip)
            step += 1
            corr1 = 1.0 - b1**step
            corr2 = 1.0 - b2**step
            for name, g in zip(names, grads):
                m[name] = b1 * m[name] + (1.0 - b1) * g
                v[name] = b2 * v[name] + (1.0 - b2) * g * g
                update = (m[name] / corr1) / (np.sqrt(v[name] / corr2) + eps)
                model.params[name] = model.params[name] - config.learning_rate * update
            epoch_losses.append(loss)
        history.append(float(np.mean(epoch_losses)))
        if (
            checkpoint_path is not None
            and checkpoint_every > 0
            and (epoch + 1) % checkpoint_every == 0
        ):
            modelmod.save_checkpoint(model, checkpoint_path)
    if checkpoint_path is not None:
        modelmod.save_checkpoint(model, checkpoint_path)
    return model, history


# ---------------------------------------------------------------------------
# independent-marginal baseline


@dataclass
class IndependentBaseline:
    """Per-step Gaussian forecaster that ignores all cross-step structure."""

    means: np.ndarray
    stds: np.ndarray

    def sample(self, num_samples, seed):
        rng = seed if isinstance(seed, np.random.Generator) else rng_for(seed, "sampling")
        draws = rng.standard_normal((int(num_samples), self.means.shape[0]))
        return self.means[None, :] + self.stds[None, :] * draws


def baseline_independent(dataset, n):
    """Empirical per-step moments over the final ``n`` points of each series."""
    if not dataset.series:
        raise ConfigError("dataset has no series")
    short = [s.item_id for s in dataset.series if len(s) < n]
    if short:
        raise SeriesTooShort(
            f"{len(short)} series shorter than the {n}-step window", ids=short
        )
    tails = np.stack([s.target[-n:] for s in dataset.series])
    return IndependentBaseline(tails.mean(axis=0), tails.std(axis=0))
