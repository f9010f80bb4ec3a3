#!/usr/bin/env python3
"""Mixup/CutMix whose strength anneals away over training.

For augmentation the roles flip: the *augmented* stream is the focused data
and the original images are the full data.  Two mechanisms phase the
augmentation out as alpha ramps up:

  1. per batch, with probability alpha the original batch passes through;
  2. otherwise the interpolation strength lambda is annealed toward 1 (the
     identity) via lambda' = (1 - alpha) * lambda + alpha.
"""

import numpy as np

from featcont.augment import anneal_lambda, augmented_epoch

print("lambda' = (1 - alpha) * lambda + alpha")
print("alpha:         " + "".join(f"{a:8.2f}" for a in np.linspace(0, 1, 6)))
for lam in (0.2, 0.5, 0.8):
    row = [anneal_lambda(lam, a) for a in np.linspace(0, 1, 6)]
    print(f"lambda={lam:.1f}: " + "".join(f"{v:8.3f}" for v in row))

# Feed one epoch of constant batches through the wrapper and measure how many
# come out untouched at each alpha.
rng = np.random.default_rng(0)
batches = [(rng.random((16, 3, 28, 28)), rng.integers(0, 10, 16)) for _ in range(400)]

print("\nfraction of batches passed through unchanged (expect ~alpha):")
for alpha in (0.0, 0.25, 0.5, 0.9, 1.0):
    untouched = 0
    lam_values = []
    for mb, (orig, _) in zip(augmented_epoch(batches, alpha, "mixup", seed=3, epoch=0), batches):
        if np.array_equal(mb.images, orig) and np.all(mb.lam == 1.0):
            untouched += 1
        else:
            lam_values.append(mb.lam[0])
    mean_lam = np.mean(lam_values) if lam_values else float("nan")
    print(f"  alpha={alpha:4.2f}: original {untouched / len(batches):5.3f},"
          f" mean lambda' of augmented batches {mean_lam:.3f}")

# CutMix reports the exact unmixed-pixel fraction per item:
from featcont.augment import cutmix
from featcont.rng import KeyedRng

images = rng.random((8, 3, 28, 28))
labels = rng.integers(0, 10, 8)
mb = cutmix(images, labels, np.roll(np.arange(8), 1), lam=0.7, rng=KeyedRng(5))
changed = (mb.images != images).any(axis=(0, 1)).sum()
print(f"\ncutmix: patch covers {changed} of 784 pixels, lambda_eff = {mb.lam[0]:.4f}"
      f" = 1 - {changed}/784 = {1 - changed / 784:.4f}")
