"""What the evaluation report contains and why each number is trusted.

Every metric has a hand-checkable definition; this tour reproduces the
worked examples and the invariances the test suite pins, then assembles
a full report from synthetic forecasts.
"""

import numpy as np

from mqf2 import metrics

print("pinball loss: quantile_loss(z, z_hat, alpha)")
print(f"  under-forecast at alpha 0.9: {metrics.quantile_loss(2.0, 1.0, 0.9)}")
print(f"  over-forecast at alpha 0.9:  {metrics.quantile_loss(0.0, 1.0, 0.9):.1f}")

print("\nsum-CRPS from two sample paths with sums 0 and 2, target sum 1:")
print(f"  {metrics.sum_crps(np.array([[1.0]]), np.array([[[0.0], [2.0]]])):.1f}")

print("\nMSIS with a 50% interval [0, 2], target 3, unit seasonal error:")
value = metrics.msis(
    np.array([[3.0]]),
    np.array([[[0.0], [0.0], [2.0], [2.0]]]),
    [np.array([0.0, 1.0])],
    zeta=0.5,
    f=1,
)
print(f"  width 2 + (2/0.5) * overshoot 1 = {value:.1f}")

print("\nscale invariance: wQL and MSIS are unitless")
rng = np.random.default_rng(0)
t = rng.normal(5, 2, size=(4, 6))
p = rng.normal(5, 2, size=(4, 30, 6))
hist = rng.normal(5, 2, size=(4, 8))
print(f"  wQL  x1: {metrics.mean_wql(t, p):.6f}")
print(f"  wQL  x7: {metrics.mean_wql(7 * t, 7 * p):.6f}")
print(f"  MSIS x1: {metrics.msis(t, p, hist, zeta=0.1, f=2):.6f}")
print(f"  MSIS x7: {metrics.msis(7 * t, 7 * p, 7 * hist, zeta=0.1, f=2):.6f}")

print("\na full report over random forecasts:")
report = metrics.evaluate_forecasts(t, p, history=hist)
for key, value in sorted(report.to_dict().items()):
    print(f"  {key:<16} {value:.4f}")
