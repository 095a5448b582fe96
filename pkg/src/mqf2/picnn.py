"""Partially convex potential network.

The potential G(alpha, h) is convex in the quantile input alpha for every
context h, and unconstrained in h.  Convexity is structural: the alpha-path
enters each layer linearly, hidden states are re-weighted by non-negative
matrices (softplus-reparametrized), gates on the hidden path are clamped
non-negative, and every hidden activation is convex and non-decreasing.  A
trainable quadratic term (gamma/2)||alpha||^2 with gamma bounded away from
zero makes G strongly convex, so its gradient map is invertible.

Layer recurrence, all rows of a batch at once (R rows, width w)::

    u      = softplus(h @ We + be)                        context embedding
    v_1    = softplus((alpha * (u @ Wau + ba)) @ Wa + u @ Wu + b)
    v_i+1  = softplus(Wv-path + alpha-path + u-path)      hidden layers
    out    = same combination, identity activation, width 1

where the v-path is (v_i * relu(u @ Wvu + bv)) @ softplus(Wv_raw).  The
first layer has no v-path; the output layer is linear.

Weights are stored raw; effective non-negative weights and the effective
gamma = gamma_floor + softplus(raw_gamma) are computed inside the graph so
any optimizer update preserves the constraints exactly.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from . import graph as gr
from .errors import ConfigError

__all__ = [
    "PicnnConfig",
    "param_shapes",
    "param_leaves",
    "init_params",
    "constant_map_params",
    "effective_gamma",
    "gamma_node",
    "embed_nodes",
    "potential_nodes",
    "context_embed",
    "potential",
    "grad_potential",
]


@dataclass(frozen=True)
class PicnnConfig:
    """Shape of the potential network.

    ``input_dim`` is the quantile-vector dimension (the forecast horizon),
    ``context_dim`` the encoder state size, ``num_layers`` the count of
    hidden (softplus) layers before the linear scalar output layer.
    """

    input_dim: int
    context_dim: int
    hidden_width: int = 40
    num_layers: int = 2
    gamma_floor: float = 0.01

    def __post_init__(self):
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.context_dim < 1:
            raise ConfigError(f"context_dim must be >= 1, got {self.context_dim}")
        if self.hidden_width < 1:
            raise ConfigError(f"hidden_width must be >= 1, got {self.hidden_width}")
        if self.num_layers < 2:
            raise ConfigError(f"num_layers must be >= 2, got {self.num_layers}")
        if not self.gamma_floor > 0.0:
            raise ConfigError(f"gamma_floor must be > 0, got {self.gamma_floor}")


def _layer_sizes(config):
    """(name, in_width, out_width, has_v_path) for every layer in order."""
    w = config.hidden_width
    layers = [("h1", None, w, False)]
    for i in range(2, config.num_layers + 1):
        layers.append((f"h{i}", w, w, True))
    layers.append(("out", w, 1, True))
    return layers


def param_shapes(config):
    """Leaf name to shape, in deterministic order; prefix ``picnn.``."""
    n, d, w = config.input_dim, config.context_dim, config.hidden_width
    shapes = {"picnn.embed.w": (d, w), "picnn.embed.b": (w,)}
    for name, w_in, w_out, has_v in _layer_sizes(config):
        p = f"picnn.{name}"
        if has_v:
            shapes[f"{p}.w_v_raw"] = (w_in, w_out)
            shapes[f"{p}.w_vu"] = (w, w_in)
            shapes[f"{p}.b_v"] = (w_in,)
        shapes[f"{p}.w_alpha"] = (n, w_out)
        shapes[f"{p}.w_alpha_u"] = (w, n)
        shapes[f"{p}.b_alpha"] = (n,)
        shapes[f"{p}.w_u"] = (w, w_out)
        shapes[f"{p}.b"] = (w_out,)
    shapes["picnn.raw_gamma"] = ()
    return shapes


def param_leaves(config):
    return {name: gr.leaf(name, shape) for name, shape in param_shapes(config).items()}


def _inv_softplus(y):
    # softplus(x) = y  =>  x = log(expm1(y)); stable for small y
    return math.log(math.expm1(y))


def init_params(config, rng):
    """Fan-in uniform raw weights, zero biases, effective gamma near 0.1."""
    params = {}
    for name, shape in param_shapes(config).items():
        kind = name.rsplit(".", 1)[-1]
        if name == "picnn.raw_gamma":
            gap = max(0.1 - config.gamma_floor, 1e-3)
            params[name] = np.asarray(_inv_softplus(gap))
        elif kind == "b" or kind.startswith("b_"):
            params[name] = np.zeros(shape)
        else:
            bound = 1.0 / math.sqrt(shape[0])
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def constant_map_params(config, gamma=1.0):
    """All raw weights zero; effective gamma set to ``gamma`` exactly.

    With every weight zero the network part of G is constant in alpha, so
    the gradient map is alpha -> gamma * alpha.  Useful as an analytically
    known fixture.
    """
    if not gamma > config.gamma_floor:
        raise ConfigError(
            f"gamma {gamma} must exceed gamma_floor {config.gamma_floor}"
        )
    params = {name: np.zeros(shape) for name, shape in param_shapes(config).items()}
    params["picnn.raw_gamma"] = np.asarray(_inv_softplus(gamma - config.gamma_floor))
    return params


def gamma_node(config, leaves):
    return gr.softplus(leaves["picnn.raw_gamma"]) + config.gamma_floor


def effective_gamma(config, params):
    return float(np.logaddexp(0.0, params["picnn.raw_gamma"])) + config.gamma_floor


def embed_nodes(config, h, leaves):
    """Context embedding u = softplus(h @ We + be); h is a (R, d) node."""
    return gr.softplus(gr.matmul(h, leaves["picnn.embed.w"]) + leaves["picnn.embed.b"])


def potential_nodes(config, alpha, u, leaves):
    """The potential as a graph over batched rows.

    ``alpha`` is an (R, n) node, ``u`` an (R_u, width) node with R_u either
    R or 1 (a shared context broadcasts over rows).  Returns the (R,) node
    of potential values including the strong-convexity term.
    """
    n = config.input_dim
    if len(alpha.shape) != 2 or alpha.shape[1] != n:
        raise ConfigError(f"alpha must be (rows, {n}), got {alpha.shape}")
    if len(u.shape) != 2 or u.shape[1] != config.hidden_width:
        raise ConfigError(f"u must be (rows, {config.hidden_width}), got {u.shape}")
    rows = alpha.shape[0]
    v = None
    for name, _, _, has_v in _layer_sizes(config):
        p = f"picnn.{name}"
        alpha_gate = gr.matmul(u, leaves[f"{p}.w_alpha_u"]) + leaves[f"{p}.b_alpha"]
        z = gr.matmul(alpha * alpha_gate, leaves[f"{p}.w_alpha"])
        z = z + gr.matmul(u, leaves[f"{p}.w_u"]) + leaves[f"{p}.b"]
        if has_v:
            v_gate = gr.relu(gr.matmul(u, leaves[f"{p}.w_vu"]) + leaves[f"{p}.b_v"])
            z = z + gr.matmul(v * v_gate, gr.softplus(leaves[f"{p}.w_v_raw"]))
        v = gr.softplus(z) if name != "out" else z
    out = gr.reshape(v, (rows,))
    gamma = gamma_node(config, leaves)
    return out + gamma * 0.5 * gr.sq_norm_last(alpha)


# ---------------------------------------------------------------------------
# array-facing wrappers (single vectors or batches of rows)


def _as_rows(x, dim, what):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ConfigError(f"{what} must have dimension {dim}, got shape {x.shape}")
    return x, single


def context_embed(params, config, h):
    """u = softplus(We^T h + be) for one context vector or a batch of rows."""
    hv, single = _as_rows(h, config.context_dim, "context")
    leaves = param_leaves(config)
    hleaf = gr.leaf("h", hv.shape)
    u = embed_nodes(config, hleaf, leaves)
    out = gr.evaluate(u, {**params, "h": hv})
    return out[0] if single else out


@functools.lru_cache(maxsize=64)
def _potential_program(config, n_rows, shared_context, with_grad):
    leaves = param_leaves(config)
    alpha = gr.leaf("alpha", (n_rows, config.input_dim))
    h = gr.leaf("h", (1 if shared_context else n_rows, config.context_dim))
    u = embed_nodes(config, h, leaves)
    pot = potential_nodes(config, alpha, u, leaves)
    if not with_grad:
        return gr.Program(pot)
    g = gr.gradient(gr.reduce_sum(pot), [alpha])["alpha"]
    return gr.Program([pot, g])


def potential(params, config, alpha, h):
    """G(alpha, h) as a float (1-D inputs) or per-row vector (2-D alpha)."""
    av, single_a = _as_rows(alpha, config.input_dim, "alpha")
    hv, single_h = _as_rows(h, config.context_dim, "context")
    if not single_h and hv.shape[0] != av.shape[0]:
        raise ConfigError("row counts of alpha and context differ")
    prog = _potential_program(config, av.shape[0], single_h, with_grad=False)
    out = prog({**params, "alpha": av, "h": hv})
    return float(out[0]) if single_a else out


def grad_potential(params, config, alpha, h):
    """g = grad_alpha G(alpha, h); rows of gradients for batched alpha.

    Built by reverse-mode differentiation of the potential graph, so the
    result is itself a differentiable graph when used via the node-level
    builders; this wrapper evaluates it to an array.
    """
    av, single_a = _as_rows(alpha, config.input_dim, "alpha")
    hv, single_h = _as_rows(h, config.context_dim, "context")
    if not single_h and hv.shape[0] != av.shape[0]:
        raise ConfigError("row counts of alpha and context differ")
    prog = _potential_program(config, av.shape[0], single_h, with_grad=True)
    _, g = prog({**params, "alpha": av, "h": hv})
    return g[0] if single_a else g
