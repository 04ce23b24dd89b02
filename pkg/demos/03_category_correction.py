"""Dynamic category correction: an external classifier rescues early labels.

Simulates a teacher that systematically confuses two classes and shows how
the cosine-decayed fusion weight lets a mocked zero-shot classifier fix the
labels early in training, then hands control back to the teacher.
"""

import numpy as np

from plquality import (
    ClassifierQuery,
    Distribution,
    FusionState,
    MockExternalClassifier,
    fuse,
    fusion_weight,
)

NUM_CLASSES = 3
it_max = 1000

# The fusion weight: starts at 0.5, decays along a half cosine to 0.
print("iteration :", [0, 250, 500, 750, 1000])
print(
    "weight    :",
    [round(fusion_weight(FusionState(it, it_max)), 4) for it in (0, 250, 500, 750, 1000)],
)

# A teacher that places 60% of its mass on the wrong class (class 0)
# and 30% on the true one (class 2) -- the bear-vs-dog situation.
teacher = Distribution(np.array([0.6, 0.1, 0.3]))
mock = MockExternalClassifier(num_classes=NUM_CLASSES, accuracy=0.9, confusion="residual")
external = mock.classify(ClassifierQuery("demo/0", NUM_CLASSES, patch_class=2))
print("\nteacher distribution :", teacher.probs.tolist(), "-> argmax", teacher.argmax())
print("external distribution:", np.round(external.probs, 3).tolist(), "-> argmax", external.argmax())

print(f"\n{'iteration':>9} {'weight':>7} {'fused distribution':>28} {'label':>6}")
for it in (0, 125, 250, 500, 750, 1000):
    w = fusion_weight(FusionState(it, it_max))
    fused = fuse(teacher, external, w)
    print(f"{it:9d} {w:7.4f} {np.round(fused.probs, 3).tolist()!s:>28} {fused.argmax():>6}")

print(
    "\nEarly on (w near 0.5) the external opinion overturns the confused"
    "\nteacher; by the end of the schedule (w = 0) the teacher, which has"
    "\nhad time to improve, is trusted verbatim."
)
