#!/usr/bin/env python3
"""Build the color-biased digit sets and visualize them.

Training images of class i are tinted with colors drawn around a
class-specific hue; test images use the palette's global mean color instead,
so color predicts the label on the training set and is useless on the test
set.  The focused variant of every image is its grayscale version.

Writes four PPM inspection grids next to this script.
"""

from pathlib import Path

import numpy as np

from featcont import datasets as ds

OUT = Path(__file__).resolve().parent

raw = ds.synthetic_digits(3000, seed=7)
palette = ds.make_palette(seed=0, sigma2=0.020)
train, test = ds.build_colored_mnist(raw, palette, train_size=2000, test_size=1000, seed=1)

print("palette class means (RGB):")
for i, mean in enumerate(palette.means):
    print(f"  class {i}: ({mean[0]:.2f}, {mean[1]:.2f}, {mean[2]:.2f})")
print(f"test-set mean color: {np.round(palette.mean_color(), 3)}")

# How strong is the color shortcut?  Classify by nearest class-mean color:
print(f"\nnearest-mean-color classifier on biased train: {ds.nearest_mean_color_accuracy(train.pairs, palette):.3f}")
print(f"nearest-mean-color classifier on unbiased test: {ds.nearest_mean_color_accuracy(test.pairs, palette):.3f}")

# Inspection grids in the style of a dataset figure: biased train images,
# their grayscale focused variants, unbiased test images, and their focused
# variants.
grids = {
    "train_biased.ppm": train.pairs.x1[:100],
    "train_focused.ppm": train.pairs.x0[:100],
    "test_unbiased.ppm": test.pairs.x1[:100],
    "test_focused.ppm": test.pairs.x0[:100],
}
for name, stack in grids.items():
    ds.write_ppm(ds.image_grid(np.asarray(stack, dtype=np.float64), cols=10), OUT / name)
    print(f"wrote {OUT / name}")

# The pairing is exact: the focused variant IS the grayscale of the full one.
assert np.array_equal(ds.to_grayscale(train.pairs.x1), train.pairs.x0)
