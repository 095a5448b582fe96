"""Limited-memory BFGS with a strong Wolfe line search.

Written against smooth, strongly convex objectives (the inversion problem of
the quantile map), where these are textbook-safe settings: memory 10, strong
Wolfe constants c1 = 1e-4 and c2 = 0.9, curvature pairs guarded against
degenerate updates.  The caller supplies the convergence test so that
domain-specific residual rules (per-row gradient norms) plug in directly.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

__all__ = ["LbfgsResult", "minimize"]


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    n_evals: int
    converged: bool


def _two_loop(g, pairs):
    """Approximate H^{-1} g from stored (s, y, rho) displacement pairs."""
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic interpolant on [a, b]; None if degenerate."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0.0:
        return None
    d2 = np.sqrt(disc) * np.sign(b - a)
    denom = db - da + 2.0 * d2
    if denom == 0.0:
        return None
    t = b - (b - a) * (db + d2 - d1) / denom
    return t if np.isfinite(t) else None


def _zoom(phi, lo, f_lo, d_lo, hi, f_hi, d_hi, f0, d0, c1, c2, max_iter=25):
    """Narrow a bracketing interval to a strong Wolfe point."""
    evals = 0
    for _ in range(max_iter):
        lo_, hi_ = (lo, hi) if lo < hi else (hi, lo)
        width = hi_ - lo_
        t = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
        if t is None or not lo_ + 0.1 * width <= t <= hi_ - 0.1 * width:
            t = 0.5 * (lo + hi)
        f_t, d_t = phi(t)
        evals += 1
        if not np.isfinite(f_t) or f_t > f0 + c1 * t * d0 or f_t >= f_lo:
            hi, f_hi, d_hi = t, f_t, d_t
        else:
            if abs(d_t) <= -c2 * d0:
                return t, f_t, d_t, evals
            if d_t * (hi - lo) >= 0.0:
                hi, f_hi, d_hi = lo, f_lo, d_lo
            lo, f_lo, d_lo = t, f_t, d_t
        if abs(hi - lo) <= 1e-16 * max(1.0, abs(hi)):
            break
    return lo, f_lo, d_lo, evals


def _line_search(phi, f0, d0, alpha0, c1, c2, alpha_max=1e6, max_expand=20):
    """Strong Wolfe search; returns (alpha, f, dphi, evals) or None."""
    a_prev, f_prev, d_prev = 0.0, f0, d0
    alpha = alpha0
    evals = 0
    for i in range(max_expand):
        f_a, d_a = phi(alpha)
        evals += 1
        if not np.isfinite(f_a) or f_a > f0 + c1 * alpha * d0 or (f_a >= f_prev and i > 0):
            t, f_t, d_t, z = _zoom(
                phi, a_prev, f_prev, d_prev, alpha, f_a, d_a, f0, d0, c1, c2
            )
            return t, f_t, d_t, evals + z
        if abs(d_a) <= -c2 * d0:
            return alpha, f_a, d_a, evals
        if d_a >= 0.0:
            t, f_t, d_t, z = _zoom(
                phi, alpha, f_a, d_a, a_prev, f_prev, d_prev, f0, d0, c1, c2
            )
            return t, f_t, d_t, evals + z
        a_prev, f_prev, d_prev = alpha, f_a, d_a
        alpha = min(2.0 * alpha, alpha_max)
        if alpha == a_prev:
            break
    return None


def minimize(fun_grad, x0, converged, memory=10, max_iter=200, c1=1e-4, c2=0.9):
    """Minimize ``fun_grad`` from ``x0`` until ``converged(x, g)`` holds.

    Parameters
    ----------
    fun_grad : callable
        Maps a 1-D point to ``(value, gradient)``.
    x0 : array
        Starting point; not modified.
    converged : callable
        ``converged(x, g) -> bool``, checked at the start and after every
        accepted step.
    memory : int
        Number of stored displacement pairs.
    max_iter : int
        Iteration cap; the result reports ``converged=False`` when hit.
    """
    x = np.array(x0, dtype=np.float64)
    f, g = fun_grad(x)
    n_evals = 1
    if converged(x, g):
        return LbfgsResult(x, f, g, 0, n_evals, True)
    pairs = deque(maxlen=memory)
    it = 0
    for it in range(1, max_iter + 1):
        d = -_two_loop(g, pairs)
        d_dot_g = d @ g
        if d_dot_g >= 0.0:
            # stored curvature is unusable; restart from steepest descent
            pairs.clear()
            d = -g
            d_dot_g = d @ g

        grad_at = {}

        def phi(alpha, _d=d, _cache=grad_at):
            fv, gv = fun_grad(x + alpha * _d)
            _cache[alpha] = gv
            return fv, gv @ _d

        alpha0 = 1.0 if pairs else min(1.0, 1.0 / max(1.0, float(np.linalg.norm(g))))
        hit = _line_search(phi, f, d_dot_g, alpha0, c1, c2)
        if hit is None:
            break
        alpha, f_new, _, evals = hit
        n_evals += evals
        if alpha <= 0.0:
            break
        x_new = x + alpha * d
        g_new = grad_at[alpha]
        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            pairs.append((s, y, 1.0 / sy))
        x, f, g = x_new, f_new, g_new
        if converged(x, g):
            return LbfgsResult(x, f, g, it, n_evals, True)
    return LbfgsResult(x, f, g, it, n_evals, False)
