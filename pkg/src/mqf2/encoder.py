"""Recurrent context encoder with mean scaling.

A stack of gated recurrent cells reads the conditioning window left to right
and hands the final hidden state of the top layer to the potential network.
Each step consumes the scaled target value plus calendar covariates.  Windows
are mean-scaled so the encoder sees comparable magnitudes across series of
very different levels; forecasts are multiplied back by the same scale.

Cell equations per step (update gate q, reset gate r, candidate c)::

    r = sigmoid(x @ Wr + h @ Ur + br)
    q = sigmoid(x @ Wq + h @ Uq + bq)
    c = tanh(x @ Wc + (r * h) @ Uc + bc)
    h' = q * h + (1 - q) * c

With all-zero weights and inputs the state stays exactly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import graph as gr
from .errors import ConfigError

__all__ = [
    "EncoderConfig",
    "param_shapes",
    "param_leaves",
    "init_params",
    "scale_window",
    "encode_nodes",
    "encode",
]

_GATES = ("r", "q", "c")


@dataclass(frozen=True)
class EncoderConfig:
    context_length: int
    feature_dim: int
    hidden_size: int = 40
    num_layers: int = 2

    def __post_init__(self):
        if self.context_length < 1:
            raise ConfigError(f"context_length must be >= 1, got {self.context_length}")
        if self.feature_dim < 0:
            raise ConfigError(f"feature_dim must be >= 0, got {self.feature_dim}")
        if self.hidden_size < 1:
            raise ConfigError(f"hidden_size must be >= 1, got {self.hidden_size}")
        if self.num_layers < 1:
            raise ConfigError(f"num_layers must be >= 1, got {self.num_layers}")

    @property
    def input_dim(self):
        """Scaled target plus covariates."""
        return 1 + self.feature_dim


def param_shapes(config):
    shapes = {}
    hid = config.hidden_size
    for layer in range(config.num_layers):
        x_dim = config.input_dim if layer == 0 else hid
        for gate in _GATES:
            shapes[f"enc.l{layer}.w_{gate}"] = (x_dim, hid)
            shapes[f"enc.l{layer}.u_{gate}"] = (hid, hid)
            shapes[f"enc.l{layer}.b_{gate}"] = (hid,)
    return shapes


def param_leaves(config):
    return {name: gr.leaf(name, shape) for name, shape in param_shapes(config).items()}


def init_params(config, rng):
    """Fan-in uniform weights, zero biases, in deterministic name order."""
    params = {}
    for name, shape in param_shapes(config).items():
        if name.rsplit(".", 1)[-1].startswith("b_"):
            params[name] = np.zeros(shape)
        else:
            bound = 1.0 / math.sqrt(shape[0])
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def scale_window(past):
    """Mean scaling: s = 1 + mean(|past|), scaled = past / s.

    The offset keeps s >= 1 so all-zero windows pass through unchanged, and
    predictions in scaled units are mapped back by multiplying by s.
    """
    past = np.asarray(past, dtype=np.float64)
    if past.size == 0:
        raise ConfigError("cannot scale an empty window")
    s = 1.0 + float(np.mean(np.abs(past)))
    return past / s, s


def encode_nodes(config, steps, leaves):
    """Graph of the encoder over ``steps``, a list of (batch, input_dim) nodes.

    Returns the (batch, hidden_size) node for the final state of the top
    layer.  The zero initial state is embedded as a constant.
    """
    if len(steps) != config.context_length:
        raise ConfigError(
            f"expected {config.context_length} steps, got {len(steps)}"
        )
    batch = steps[0].shape[0]
    hid = config.hidden_size
    sequence = steps
    h = None
    for layer in range(config.num_layers):
        p = f"enc.l{layer}"
        h = gr.constant(np.zeros((batch, hid)))
        outputs = []
        for x in sequence:
            r = gr.sigmoid(
                gr.matmul(x, leaves[f"{p}.w_r"])
                + gr.matmul(h, leaves[f"{p}.u_r"])
                + leaves[f"{p}.b_r"]
            )
            q = gr.sigmoid(
                gr.matmul(x, leaves[f"{p}.w_q"])
                + gr.matmul(h, leaves[f"{p}.u_q"])
                + leaves[f"{p}.b_q"]
            )
            c = gr.tanh(
                gr.matmul(x, leaves[f"{p}.w_c"])
                + gr.matmul(r * h, leaves[f"{p}.u_c"])
                + leaves[f"{p}.b_c"]
            )
            h = q * h + (1.0 - q) * c
            outputs.append(h)
        sequence = outputs
    return h


def _window_rows(config, window):
    window = np.asarray(window, dtype=np.float64)
    if window.ndim == 2:
        window = window[None, :, :]
    if window.ndim != 3 or window.shape[1:] != (config.context_length, config.input_dim):
        raise ConfigError(
            "window must be (context_length, 1 + feature_dim) ="
            f" ({config.context_length}, {config.input_dim}), got {window.shape}"
        )
    return window


def encode(params, config, window):
    """Context vector(s) for one window or a batch of windows.

    ``window`` is (context_length, input_dim) or (batch, context_length,
    input_dim) with the scaled target in column 0 and covariates after it.
    """
    rows = _window_rows(config, window)
    single = np.asarray(window).ndim == 2
    batch = rows.shape[0]
    leaves = param_leaves(config)
    steps = [gr.leaf(f"x{t}", (batch, config.input_dim)) for t in range(config.context_length)]
    h = encode_nodes(config, steps, leaves)
    bindings = dict(params)
    for t, step in enumerate(steps):
        bindings[step.attrs["name"]] = rows[:, t, :]
    out = gr.evaluate(h, bindings)
    return out[0] if single else out
