"""Shared numerical oracles for the test suite.

Finite differences here are the independent check against which analytic
derivatives are judged; they deliberately avoid the package's own
differentiation machinery.
"""

import numpy as np


def central_diff_grad(f, x, h=1e-5):
    """Central-difference gradient of scalar ``f`` at ``x``, one entry at a time."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    flat = out.reshape(-1)
    xflat = x.reshape(-1)
    for i in range(xflat.size):
        xp = xflat.copy()
        xm = xflat.copy()
        xp[i] += h
        xm[i] -= h
        flat[i] = (f(xp.reshape(x.shape)) - f(xm.reshape(x.shape))) / (2.0 * h)
    return out


def central_diff_jacobian(f, x, h=1e-5):
    """Jacobian of vector-valued ``f`` at ``x`` by central differences."""
    x = np.asarray(x, dtype=np.float64)
    f0 = np.asarray(f(x))
    jac = np.zeros((f0.size, x.size))
    xflat = x.reshape(-1)
    for i in range(xflat.size):
        xp = xflat.copy()
        xm = xflat.copy()
        xp[i] += h
        xm[i] -= h
        jac[:, i] = (
            np.asarray(f(xp.reshape(x.shape))).reshape(-1)
            - np.asarray(f(xm.reshape(x.shape))).reshape(-1)
        ) / (2.0 * h)
    return jac


def relative_error(got, want):
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    denom = max(1.0, float(np.max(np.abs(want))) if want.size else 0.0)
    diff = float(np.max(np.abs(got - want))) if want.size else 0.0
    return diff / denom


def shifted_sampler_wins(score_fn, trials, num_samples, targets_per_trial,
                         dim=2, shift=1.0, base_seed=0):
    """Count trials where the true N(0, I) sampler scores below a mean-shifted
    one under ``score_fn(samples_a, samples_b, samples_c, target)``.

    Per trial, both samplers are scored on the same batch of true-distribution
    targets with fresh disjoint-half sample sets; a strictly proper score
    should favor the true sampler in nearly every trial.
    """
    wins = 0
    for t in range(trials):
        rng = np.random.default_rng(base_seed + 7919 * (t + 1))
        targets = rng.standard_normal((targets_per_trial, dim))
        totals = [0.0, 0.0]
        for z in targets:
            for k, offset in enumerate((0.0, shift)):
                a = rng.standard_normal((num_samples, dim)) + offset
                b = rng.standard_normal((num_samples, dim)) + offset
                totals[k] += score_fn(a, b, np.concatenate([a, b]), z)
        if totals[0] < totals[1]:
            wins += 1
    return wins
