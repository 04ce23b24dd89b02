"""Quality scores and uncertainty: how one predicted instance is measured.

Walks through class quality (max softmax), mask quality (mean confident
foreground probability), the coupled score, and the per-pixel uncertainty
map, on small grids where every number can be checked by hand.
"""

import numpy as np

from plquality import (
    ClassLogits,
    MaskLogitGrid,
    binarize,
    class_quality,
    coupled_score,
    mask_quality,
    sigmoid,
    uncertainty_map,
)

# Class quality: the maximum softmax probability over the class logits.
logits = ClassLogits(np.array([2.0, 1.0, 0.0]))
c = class_quality(logits)
print(f"class logits {logits.values.tolist()} -> class quality {c:.5f}")

# Mask quality: pixels whose sigmoid exceeds 0.5 count as foreground; the
# quality is the mean of their probabilities. Everything else is ignored.
grid = MaskLogitGrid(np.array([[4.0, -4.0], [0.1, -0.1]]))
probs = sigmoid(grid.values)
print("\nmask logits:\n", grid.values)
print("per-pixel probabilities:\n", np.round(probs, 5))
m = mask_quality(grid)
print(f"mask quality (mean of {{0.98201, 0.52498}}) = {m:.5f}")
print("binarized foreground:\n", binarize(grid).bits)

# The coupled score multiplies the two. The same 0.72 can hide very
# different failure modes, which is why the filter decouples them.
print(f"\ncoupled 0.9 * 0.8   = {coupled_score(0.9, 0.8):.3f}  (good class, weak mask)")
print(f"coupled 0.75 * 0.96 = {coupled_score(0.75, 0.96):.3f}  (weak class, good mask)")

# Uncertainty is maximal where the logit crosses zero and vanishes where
# the model is confident in either direction.
sweep = MaskLogitGrid(np.linspace(-6, 6, 7)[None, :])
u = uncertainty_map(sweep)
print("\nlogit sweep :", np.round(sweep.values[0], 1))
print("uncertainty :", np.round(u.values[0], 4))
