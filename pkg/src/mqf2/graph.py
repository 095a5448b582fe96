"""Expression graphs with reverse-mode differentiation.

The package needs derivatives of derivatives: the forecaster's sampling map is
itself a gradient, and training differentiates losses of that map with respect
to network parameters.  Taping frameworks that replay recorded arithmetic make
this awkward, so this module takes the other route: a graph node is a symbolic
value, and :func:`gradient` returns *new graph nodes* for the requested
partial derivatives.  Differentiating twice is then just calling
:func:`gradient` on a larger graph, and exact Hessians fall out of ``n``
gradient passes.

Usage sketch::

    x = leaf("x", (3,))
    a = constant(np.eye(3))
    y = reduce_sum(x * (x @ a))
    grads = gradient(y, [x])          # {"x": <node of shape (3,)>}
    gx = evaluate(grads["x"], {"x": np.ones(3)})

Values are ``float64`` ndarrays throughout.  A node's shape is fixed at
construction from its inputs' shapes; mismatches raise :class:`GraphError`
immediately rather than at evaluation time.  Construction is cheap and graphs
are reusable: build once, evaluate under many bindings (see :class:`Program`).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import HessianNotPD

__all__ = [
    "GraphError",
    "Node",
    "leaf",
    "constant",
    "exp",
    "log",
    "sqrt",
    "tanh",
    "sigmoid",
    "softplus",
    "relu",
    "pow_const",
    "matmul",
    "swap_last2",
    "reshape",
    "broadcast_to",
    "reduce_sum",
    "reduce_mean",
    "slice_axis",
    "index_axis",
    "stack",
    "repeat_rows",
    "logdet_spd",
    "sq_norm_last",
    "norm_pow_last",
    "topological",
    "evaluate",
    "gradient",
    "hessian",
    "Program",
]

HESSIAN_DIM_CAP = 64


class GraphError(ValueError):
    """Graph misconstruction: bad shapes, unbound leaves, invalid roots."""


# ---------------------------------------------------------------------------
# nodes


class Node:
    """One symbolic value in an expression graph.

    Nodes are immutable once built.  ``op`` names the primitive, ``inputs``
    are the argument nodes, ``attrs`` holds static parameters (axis numbers,
    slice bounds, exponents) that are part of the operation, not data.
    """

    __slots__ = ("op", "inputs", "shape", "attrs")

    def __init__(self, op, inputs, shape, attrs=None):
        self.op = op
        self.inputs = tuple(inputs)
        self.shape = tuple(int(s) for s in shape)
        self.attrs = attrs or {}

    def __repr__(self):
        if self.op == "leaf":
            return f"Node(leaf {self.attrs['name']!r}, shape={self.shape})"
        return f"Node({self.op}, shape={self.shape})"

    @property
    def size(self):
        return int(np.prod(self.shape)) if self.shape else 1

    # arithmetic sugar; scalars are promoted to constant nodes
    def __add__(self, other):
        return add(self, _as_node(other))

    def __radd__(self, other):
        return add(_as_node(other), self)

    def __sub__(self, other):
        return sub(self, _as_node(other))

    def __rsub__(self, other):
        return sub(_as_node(other), self)

    def __mul__(self, other):
        return mul(self, _as_node(other))

    def __rmul__(self, other):
        return mul(_as_node(other), self)

    def __truediv__(self, other):
        return div(self, _as_node(other))

    def __rtruediv__(self, other):
        return div(_as_node(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return pow_const(self, p)

    def __matmul__(self, other):
        return matmul(self, other)


def leaf(name, shape):
    """Named placeholder bound to an array at evaluation time."""
    if not isinstance(name, str) or not name:
        raise GraphError("leaf name must be a non-empty string")
    return Node("leaf", (), tuple(shape), {"name": name})


def constant(value):
    """Embed a fixed array or scalar into the graph."""
    arr = np.asarray(value, dtype=np.float64)
    arr.setflags(write=False)
    return Node("const", (), arr.shape, {"value": arr})


def _as_node(x):
    if isinstance(x, Node):
        return x
    return constant(x)


def _zeros_like(node):
    return constant(np.zeros(node.shape))


# ---------------------------------------------------------------------------
# primitive registry

_EVAL = {}
_VJP = {}


def _primitive(op, evaluate_fn, vjp_fn):
    _EVAL[op] = evaluate_fn
    _VJP[op] = vjp_fn


def _broadcast_shape(*shapes):
    try:
        return np.broadcast_shapes(*shapes)
    except ValueError as exc:
        raise GraphError(f"shapes {shapes} do not broadcast") from exc


def _elementwise_binary(op, a, b):
    return Node(op, (a, b), _broadcast_shape(a.shape, b.shape))


def _sum_to(node, shape):
    """Reduce ``node`` back to ``shape``; exact inverse of broadcasting."""
    if node.shape == tuple(shape):
        return node
    return Node("sum_to", (node,), shape, {"shape": tuple(shape)})


def _sum_to_value(val, shape):
    while val.ndim > len(shape):
        val = val.sum(axis=0)
    for axis, (have, want) in enumerate(zip(val.shape, shape)):
        if want == 1 and have != 1:
            val = val.sum(axis=axis, keepdims=True)
    return val


# --- elementwise arithmetic


def add(a, b):
    return _elementwise_binary("add", _as_node(a), _as_node(b))


def sub(a, b):
    return _elementwise_binary("sub", _as_node(a), _as_node(b))


def mul(a, b):
    return _elementwise_binary("mul", _as_node(a), _as_node(b))


def div(a, b):
    return _elementwise_binary("div", _as_node(a), _as_node(b))


def neg(a):
    a = _as_node(a)
    return Node("neg", (a,), a.shape)


_primitive(
    "add",
    lambda vals, node: vals[0] + vals[1],
    lambda node, g: (_sum_to(g, node.inputs[0].shape), _sum_to(g, node.inputs[1].shape)),
)
_primitive(
    "sub",
    lambda vals, node: vals[0] - vals[1],
    lambda node, g: (_sum_to(g, node.inputs[0].shape), _sum_to(neg(g), node.inputs[1].shape)),
)
_primitive(
    "mul",
    lambda vals, node: vals[0] * vals[1],
    lambda node, g: (
        _sum_to(mul(g, node.inputs[1]), node.inputs[0].shape),
        _sum_to(mul(g, node.inputs[0]), node.inputs[1].shape),
    ),
)
_primitive(
    "div",
    lambda vals, node: vals[0] / vals[1],
    lambda node, g: (
        _sum_to(div(g, node.inputs[1]), node.inputs[0].shape),
        _sum_to(neg(div(mul(g, node), node.inputs[1])), node.inputs[1].shape),
    ),
)
_primitive("neg", lambda vals, node: -vals[0], lambda node, g: (neg(g),))


# --- elementwise nonlinear


def _unary(op, a):
    a = _as_node(a)
    return Node(op, (a,), a.shape)


def exp(a):
    return _unary("exp", a)


def log(a):
    return _unary("log", a)


def sqrt(a):
    return _unary("sqrt", a)


def tanh(a):
    return _unary("tanh", a)


def sigmoid(a):
    return _unary("sigmoid", a)


def softplus(a):
    """log(1 + e^x), evaluated without overflow for large |x|."""
    return _unary("softplus", a)


def relu(a):
    return _unary("relu", a)


def _step(a):
    """Indicator of positivity; derivative treated as zero everywhere."""
    return _unary("step", a)


def pow_const(a, p):
    a = _as_node(a)
    return Node("pow_const", (a,), a.shape, {"p": float(p)})


_primitive("exp", lambda vals, node: np.exp(vals[0]), lambda node, g: (mul(g, node),))
_primitive("log", lambda vals, node: np.log(vals[0]), lambda node, g: (div(g, node.inputs[0]),))
_primitive(
    "sqrt", lambda vals, node: np.sqrt(vals[0]), lambda node, g: (div(mul(g, constant(0.5)), node),)
)
_primitive(
    "tanh",
    lambda vals, node: np.tanh(vals[0]),
    lambda node, g: (mul(g, sub(constant(1.0), mul(node, node))),),
)
# sigmoid via tanh keeps the kernel overflow-free on both tails
_primitive(
    "sigmoid",
    lambda vals, node: 0.5 * (1.0 + np.tanh(0.5 * vals[0])),
    lambda node, g: (mul(g, mul(node, sub(constant(1.0), node))),),
)
_primitive(
    "softplus",
    lambda vals, node: np.logaddexp(0.0, vals[0]),
    lambda node, g: (mul(g, sigmoid(node.inputs[0])),),
)
# relu subgradient at the origin is taken as 0
_primitive(
    "relu",
    lambda vals, node: np.maximum(vals[0], 0.0),
    lambda node, g: (mul(g, _step(node.inputs[0])),),
)
_primitive("step", lambda vals, node: (vals[0] > 0.0).astype(np.float64), lambda node, g: (None,))
_primitive(
    "pow_const",
    lambda vals, node: vals[0] ** node.attrs["p"],
    lambda node, g: (
        mul(g, mul(constant(node.attrs["p"]), pow_const(node.inputs[0], node.attrs["p"] - 1.0))),
    ),
)


# --- shape manipulation


def reshape(a, shape):
    a = _as_node(a)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.size:
        raise GraphError(f"cannot reshape {a.shape} to {shape}")
    return Node("reshape", (a,), shape, {"shape": shape})


def broadcast_to(a, shape):
    a = _as_node(a)
    shape = tuple(int(s) for s in shape)
    if _broadcast_shape(a.shape, shape) != shape:
        raise GraphError(f"cannot broadcast {a.shape} to {shape}")
    return Node("broadcast_to", (a,), shape, {"shape": shape})


def _normalize_axis(axis, ndim):
    axis = axis if axis >= 0 else axis + ndim
    if not 0 <= axis < ndim:
        raise GraphError(f"axis {axis} out of range for ndim {ndim}")
    return axis


def reduce_sum(a, axis=None, keepdims=False):
    a = _as_node(a)
    if axis is None:
        axes = tuple(range(len(a.shape)))
    elif isinstance(axis, (tuple, list)):
        axes = tuple(_normalize_axis(ax, len(a.shape)) for ax in axis)
    else:
        axes = (_normalize_axis(axis, len(a.shape)),)
    if keepdims:
        shape = tuple(1 if i in axes else s for i, s in enumerate(a.shape))
    else:
        shape = tuple(s for i, s in enumerate(a.shape) if i not in axes)
    return Node("reduce_sum", (a,), shape, {"axes": axes, "keepdims": keepdims})


def reduce_mean(a, axis=None, keepdims=False):
    a = _as_node(a)
    total = reduce_sum(a, axis=axis, keepdims=keepdims)
    count = a.size // (total.size if total.size else 1)
    return mul(total, constant(1.0 / count))


def slice_axis(a, axis, start, stop):
    a = _as_node(a)
    axis = _normalize_axis(axis, len(a.shape))
    start, stop = int(start), int(stop)
    if not 0 <= start <= stop <= a.shape[axis]:
        raise GraphError(f"slice [{start}:{stop}] invalid for axis {axis} of {a.shape}")
    shape = tuple(stop - start if i == axis else s for i, s in enumerate(a.shape))
    return Node("slice_axis", (a,), shape, {"axis": axis, "start": start, "stop": stop})


def index_axis(a, axis, i):
    """Select index ``i`` along ``axis``, dropping that axis."""
    a = _as_node(a)
    axis = _normalize_axis(axis, len(a.shape))
    i = int(i)
    if not 0 <= i < a.shape[axis]:
        raise GraphError(f"index {i} out of range for axis {axis} of {a.shape}")
    shape = tuple(s for j, s in enumerate(a.shape) if j != axis)
    return Node("index_axis", (a,), shape, {"axis": axis, "i": i})


def _scatter_axis(g, axis, i, shape):
    return Node("scatter_axis", (g,), shape, {"axis": axis, "i": i, "shape": tuple(shape)})


def _pad_axis(g, axis, start, shape):
    return Node("pad_axis", (g,), shape, {"axis": axis, "start": start, "shape": tuple(shape)})


def stack(nodes, axis=0):
    nodes = [_as_node(n) for n in nodes]
    if not nodes:
        raise GraphError("stack needs at least one node")
    base = nodes[0].shape
    for n in nodes[1:]:
        if n.shape != base:
            raise GraphError(f"stack shape mismatch: {n.shape} vs {base}")
    ndim = len(base) + 1
    axis = axis if axis >= 0 else axis + ndim
    if not 0 <= axis < ndim:
        raise GraphError(f"stack axis {axis} out of range")
    shape = base[:axis] + (len(nodes),) + base[axis:]
    return Node("stack", tuple(nodes), shape, {"axis": axis})


def repeat_rows(a, r):
    """Repeat each row of a 2-D node ``r`` times consecutively."""
    a = _as_node(a)
    if len(a.shape) != 2:
        raise GraphError("repeat_rows expects a 2-D node")
    r = int(r)
    if r < 1:
        raise GraphError("repeat count must be positive")
    return Node("repeat_rows", (a,), (a.shape[0] * r, a.shape[1]), {"r": r})


_primitive(
    "reshape",
    lambda vals, node: vals[0].reshape(node.attrs["shape"]),
    lambda node, g: (reshape(g, node.inputs[0].shape),),
)
_primitive(
    "broadcast_to",
    lambda vals, node: np.broadcast_to(vals[0], node.attrs["shape"]),
    lambda node, g: (_sum_to(g, node.inputs[0].shape),),
)
_primitive(
    "sum_to",
    lambda vals, node: _sum_to_value(vals[0], node.attrs["shape"]),
    lambda node, g: (broadcast_to(g, node.inputs[0].shape),),
)


def _reduce_sum_vjp(node, g):
    (a,) = node.inputs
    if not node.attrs["keepdims"]:
        kept = tuple(
            1 if i in node.attrs["axes"] else s for i, s in enumerate(a.shape)
        )
        g = reshape(g, kept)
    return (broadcast_to(g, a.shape),)


_primitive(
    "reduce_sum",
    lambda vals, node: vals[0].sum(axis=node.attrs["axes"], keepdims=node.attrs["keepdims"]),
    _reduce_sum_vjp,
)


def _slice_key(axis, start, stop, ndim):
    key = [slice(None)] * ndim
    key[axis] = slice(start, stop)
    return tuple(key)


_primitive(
    "slice_axis",
    lambda vals, node: vals[0][
        _slice_key(node.attrs["axis"], node.attrs["start"], node.attrs["stop"], vals[0].ndim)
    ],
    lambda node, g: (
        _pad_axis(g, node.attrs["axis"], node.attrs["start"], node.inputs[0].shape),
    ),
)


def _pad_axis_eval(vals, node):
    out = np.zeros(node.attrs["shape"])
    axis, start = node.attrs["axis"], node.attrs["start"]
    out[_slice_key(axis, start, start + vals[0].shape[axis], out.ndim)] = vals[0]
    return out


_primitive(
    "pad_axis",
    _pad_axis_eval,
    lambda node, g: (
        slice_axis(
            g,
            node.attrs["axis"],
            node.attrs["start"],
            node.attrs["start"] + node.inputs[0].shape[node.attrs["axis"]],
        ),
    ),
)
_primitive(
    "index_axis",
    lambda vals, node: np.take(vals[0], node.attrs["i"], axis=node.attrs["axis"]),
    lambda node, g: (
        _scatter_axis(g, node.attrs["axis"], node.attrs["i"], node.inputs[0].shape),
    ),
)


def _scatter_axis_eval(vals, node):
    out = np.zeros(node.attrs["shape"])
    key = [slice(None)] * out.ndim
    key[node.attrs["axis"]] = node.attrs["i"]
    out[tuple(key)] = vals[0]
    return out


_primitive(
    "scatter_axis",
    _scatter_axis_eval,
    lambda node, g: (index_axis(g, node.attrs["axis"], node.attrs["i"]),),
)
_primitive(
    "stack",
    lambda vals, node: np.stack(vals, axis=node.attrs["axis"]),
    lambda node, g: tuple(
        index_axis(g, node.attrs["axis"], k) for k in range(len(node.inputs))
    ),
)
_primitive(
    "repeat_rows",
    lambda vals, node: np.repeat(vals[0], node.attrs["r"], axis=0),
    lambda node, g: (
        reduce_sum(
            reshape(g, (node.inputs[0].shape[0], node.attrs["r"], node.shape[1])), axis=1
        ),
    ),
)


# --- matrix products


def matmul(a, b):
    a, b = _as_node(a), _as_node(b)
    if len(a.shape) < 2 or len(b.shape) < 2:
        raise GraphError("matmul expects nodes with ndim >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise GraphError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    if a.shape[:-2] != b.shape[:-2]:
        raise GraphError(f"matmul batch dims differ: {a.shape} @ {b.shape}")
    shape = a.shape[:-2] + (a.shape[-2], b.shape[-1])
    return Node("matmul", (a, b), shape)


def swap_last2(a):
    a = _as_node(a)
    if len(a.shape) < 2:
        raise GraphError("swap_last2 expects ndim >= 2")
    shape = a.shape[:-2] + (a.shape[-1], a.shape[-2])
    return Node("swap_last2", (a,), shape)


_primitive(
    "matmul",
    lambda vals, node: np.matmul(vals[0], vals[1]),
    lambda node, g: (
        matmul(g, swap_last2(node.inputs[1])),
        matmul(swap_last2(node.inputs[0]), g),
    ),
)
_primitive(
    "swap_last2",
    lambda vals, node: np.swapaxes(vals[0], -1, -2),
    lambda node, g: (swap_last2(g),),
)


# --- symmetric positive definite log-determinant


def logdet_spd(a):
    """Log-determinant of SPD matrices along the last two axes.

    Evaluation factorizes with Cholesky and raises :class:`HessianNotPD`
    when the factorization fails.  The adjoint is the matrix inverse.
    """
    a = _as_node(a)
    if len(a.shape) < 2 or a.shape[-1] != a.shape[-2]:
        raise GraphError("logdet_spd expects square matrices on the last two axes")
    return Node("logdet_spd", (a,), a.shape[:-2])


def _spd_inverse(a):
    return Node("spd_inverse", (a,), a.shape)


def _chol_lower(val):
    try:
        return np.linalg.cholesky(val)
    except np.linalg.LinAlgError as exc:
        raise HessianNotPD(
            "Cholesky factorization failed; matrix is not positive definite"
        ) from exc


def _logdet_spd_eval(vals, node):
    chol = _chol_lower(vals[0])
    diag = np.diagonal(chol, axis1=-2, axis2=-1)
    return 2.0 * np.log(diag).sum(axis=-1)


def _spd_inverse_eval(vals, node):
    chol = _chol_lower(vals[0])
    eye = np.broadcast_to(np.eye(vals[0].shape[-1]), vals[0].shape)
    # solve L L^T X = I by two triangular solves, batched
    half = np.linalg.solve(chol, eye)
    return np.linalg.solve(np.swapaxes(chol, -1, -2), half)


def _logdet_spd_vjp(node, g):
    (a,) = node.inputs
    inv = _spd_inverse(a)
    gmat = reshape(g, node.shape + (1, 1)) if node.shape else reshape(g, (1, 1))
    gmat = broadcast_to(gmat, a.shape)
    return (mul(gmat, inv),)


def _spd_inverse_vjp(node, g):
    # d<G, A^-1> = <-A^-T G A^-T, dA>; the node itself is A^-1 and symmetric,
    # so the adjoint is -A^-1 G A^-1 with no transpose on G
    return (neg(matmul(matmul(node, g), node)),)


_primitive("logdet_spd", _logdet_spd_eval, _logdet_spd_vjp)
_primitive("spd_inverse", _spd_inverse_eval, _spd_inverse_vjp)


# ---------------------------------------------------------------------------
# norm helpers

_NORM_EPS = 1e-24


def sq_norm_last(a):
    """Squared Euclidean norm along the last axis."""
    a = _as_node(a)
    return reduce_sum(mul(a, a), axis=-1)


def norm_pow_last(a, beta):
    """``||x||_2 ** beta`` along the last axis.

    A vanishing regularizer (1e-24, below float64 resolution for norms above
    1e-8) inside the root keeps every derivative finite when two points
    coincide; the value at zero distance is at most 1e-12 instead of exactly 0.
    """
    return pow_const(add(sq_norm_last(a), constant(_NORM_EPS)), 0.5 * beta)


# ---------------------------------------------------------------------------
# evaluation


def topological(roots):
    """All nodes reachable from ``roots``, inputs before consumers."""
    if isinstance(roots, Node):
        roots = [roots]
    order = []
    seen = set()
    stack = [(r, False) for r in reversed(roots)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for inp in reversed(node.inputs):
            if id(inp) not in seen:
                stack.append((inp, False))
    return order


class Program:
    """A compiled evaluation plan for a fixed set of root nodes.

    Compiling walks the graph once; calling runs the kernels in topological
    order under a fresh binding.  Reuse the program when evaluating the same
    graph many times (training steps, solver iterations): compilation cost is
    paid once and evaluation is a flat loop.
    """

    def __init__(self, roots):
        self.single = isinstance(roots, Node)
        self.roots = [roots] if self.single else list(roots)
        order = topological(self.roots)
        slots = {id(n): i for i, n in enumerate(order)}
        self._root_slots = [slots[id(r)] for r in self.roots]
        self._n_slots = len(order)
        self._leaves = []
        self._consts = []
        self._steps = []
        by_name = {}
        for node in order:
            i = slots[id(node)]
            if node.op == "leaf":
                name = node.attrs["name"]
                prior = by_name.setdefault(name, node)
                if prior is not node:
                    raise GraphError(f"two distinct leaf nodes share the name {name!r}")
                self._leaves.append((name, node.shape, i))
            elif node.op == "const":
                self._consts.append((node.attrs["value"], i))
            else:
                kernel = _EVAL[node.op]
                in_slots = tuple(slots[id(p)] for p in node.inputs)
                self._steps.append((kernel, in_slots, node, i))

    @property
    def leaf_names(self):
        return sorted({name for name, _, _ in self._leaves})

    def __call__(self, bindings):
        vals = [None] * self._n_slots
        for value, i in self._consts:
            vals[i] = value
        for name, shape, i in self._leaves:
            if name not in bindings:
                raise GraphError(f"leaf {name!r} is not bound")
            arr = np.asarray(bindings[name], dtype=np.float64)
            if arr.shape != shape:
                raise GraphError(
                    f"leaf {name!r} expects shape {shape}, got {arr.shape}"
                )
            vals[i] = arr
        for kernel, in_slots, node, i in self._steps:
            vals[i] = kernel([vals[j] for j in in_slots], node)
        out = [vals[i] for i in self._root_slots]
        return out[0] if self.single else out


def evaluate(roots, bindings):
    """One-shot evaluation; compile a :class:`Program` for repeated use."""
    return Program(roots)(bindings)


# ---------------------------------------------------------------------------
# differentiation


def _resolve_wrt(roots, wrt):
    """Map the requested leaves to (name, node) pairs, validating uniqueness."""
    leaves_in_graph = {}
    for node in topological(roots):
        if node.op == "leaf":
            name = node.attrs["name"]
            prior = leaves_in_graph.setdefault(name, node)
            if prior is not node:
                raise GraphError(f"two distinct leaf nodes share the name {name!r}")
    resolved = []
    for w in wrt:
        if isinstance(w, Node):
            if w.op != "leaf":
                raise GraphError("gradient targets must be leaf nodes")
            resolved.append((w.attrs["name"], w))
        elif isinstance(w, str):
            # a named leaf the root never touches has identically zero gradient
            resolved.append((w, leaves_in_graph.get(w)))
        else:
            raise GraphError(f"cannot interpret gradient target {w!r}")
    names = [name for name, _ in resolved]
    if len(set(names)) != len(names):
        raise GraphError("gradient targets contain duplicate names")
    return resolved


def gradient(root, wrt):
    """Reverse-mode gradients of a scalar ``root`` as new graph nodes.

    Parameters
    ----------
    root : Node
        Scalar node (shape ``()``).
    wrt : sequence of Node or str
        Leaf nodes, or leaf names occurring in the graph under ``root``.

    Returns
    -------
    dict mapping leaf name to a node of the leaf's shape.  Leaves the root
    does not depend on map to zero constants.  The returned nodes share the
    forward graph, so they can be evaluated together with ``root`` and
    differentiated again.
    """
    if root.shape != ():
        raise GraphError(f"gradient root must be scalar, got shape {root.shape}")
    resolved = _resolve_wrt([root], wrt)
    order = topological([root])
    adjoint = {id(root): constant(1.0)}
    for node in reversed(order):
        g = adjoint.get(id(node))
        if g is None or node.op in ("leaf", "const"):
            continue
        contribs = _VJP[node.op](node, g)
        for inp, contrib in zip(node.inputs, contribs):
            if contrib is None:
                continue
            if contrib.shape != inp.shape:
                raise GraphError(
                    f"vjp shape bug: {node.op} produced {contrib.shape} for {inp.shape}"
                )
            prior = adjoint.get(id(inp))
            adjoint[id(inp)] = contrib if prior is None else add(prior, contrib)
    out = {}
    for name, node in resolved:
        if node is None:
            out[name] = constant(0.0)
        else:
            out[name] = adjoint.get(id(node)) or _zeros_like(node)
    return out


def hessian(root, wrt, dim_cap=HESSIAN_DIM_CAP):
    """Exact Hessian of scalar ``root`` with respect to one vector leaf.

    Built as ``n`` reverse passes over the gradient graph and stacked into an
    ``(n, n)`` node with row ``i`` holding the gradient of the ``i``-th first
    derivative.  Intended for modest ``n``; refuse beyond ``dim_cap``.
    """
    if isinstance(wrt, str):
        resolved = _resolve_wrt([root], [wrt])
        wrt = resolved[0][1]
        if wrt is None:
            raise GraphError("hessian target leaf does not occur in the graph")
    if wrt.op != "leaf" or len(wrt.shape) != 1:
        raise GraphError("hessian target must be a 1-D leaf node")
    n = wrt.shape[0]
    if n > dim_cap:
        raise GraphError(f"hessian dimension {n} exceeds cap {dim_cap}")
    name = wrt.attrs["name"]
    first = gradient(root, [wrt])[name]
    rows = [gradient(index_axis(first, 0, i), [wrt])[name] for i in range(n)]
    return stack(rows, axis=0)
