"""Learning the map between two Gaussians.

Targets are i.i.d. N(5, 2^2) with an all-zero conditioning window, so the
optimal transport from the N(0, 1) reference is the affine map
g(y) = 5 + 2y.  A small energy-score run recovers it closely; this is the
one setting with a closed-form answer to compare against.
"""

import numpy as np

from mqf2 import data, model, picnn, training
from mqf2 import encoder as enc

dataset = data.iid_gaussian_dataset(512, 8, 5.0, 2.0, seed=1)
ec = enc.EncoderConfig(context_length=8, feature_dim=0, hidden_size=10, num_layers=2)
pc = picnn.PicnnConfig(input_dim=1, context_dim=10, hidden_width=10, num_layers=2)

config = training.TrainConfig(mode="es", epochs=10, instances_per_epoch=3200, seed=0)
print("training a 1-D energy-score model (short demo budget)...")
m, losses = training.train(dataset, ec, pc, config)
print(f"loss {losses[0]:.4f} -> {losses[-1]:.4f} over {len(losses)} epochs")

h = model.context_vector(m, np.zeros((8, 1)))
grid = np.arange(-2.0, 2.01, 0.5)
mapped = picnn.grad_potential(m.params, pc, grid[:, None], h)[:, 0]
print("\n  y      g(y)    5 + 2y   error")
for y, g in zip(grid, mapped):
    print(f"  {y:+.1f}  {g:7.3f}  {5 + 2 * y:7.3f}  {g - (5 + 2 * y):+.3f}")

paths = model.sample_paths(m, h, 4000, seed=7)
print(f"\nsampled mean {paths.mean():.3f} (target 5), std {paths.std():.3f} (target 2)")
