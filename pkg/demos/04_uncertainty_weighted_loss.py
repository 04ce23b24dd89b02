"""The uncertainty-weighted mask loss and its gradient, verified numerically.

Shows the annihilation/damping behavior of the (1 - u) factor and runs the
central finite-difference check against the analytic gradient of the linear
per-pixel model.
"""

import numpy as np

from plquality import (
    BinaryMask,
    LinearPixelModel,
    PseudoLabel,
    UncertaintyMap,
    finite_difference_check,
    pmua_gradient,
    pmua_mask_loss,
)

rng = np.random.default_rng(7)
shape, dim = (8, 8), 4
features = rng.normal(size=(*shape, dim))
mask = BinaryMask(rng.random(shape) > 0.5)
theta = rng.normal(scale=0.5, size=dim)
model = LinearPixelModel(theta)
probs = model.predict_probs(features)

print("loss and gradient norm as uniform uncertainty rises:")
print(f"{'u':>5} {'loss':>10} {'|grad|':>10}")
for u in (0.0, 0.25, 0.5, 0.75, 1.0):
    label = PseudoLabel(class_id=0, mask=mask, uncertainty=UncertaintyMap(np.full(shape, u)))
    loss = pmua_mask_loss([probs], {0: label})
    grad = pmua_gradient(model, [features], {0: label})
    print(f"{u:5.2f} {loss:10.5f} {np.linalg.norm(grad):10.6f}")
print("at u = 1 every pixel is ignored: the loss and the gradient vanish.")

# Finite-difference verification on a random non-uniform uncertainty map.
label = PseudoLabel(
    class_id=0, mask=mask, uncertainty=UncertaintyMap(rng.uniform(0.0, 1.0, size=shape))
)


def loss_at(t):
    return pmua_mask_loss([LinearPixelModel(t).predict_probs(features)], {0: label})


grad = pmua_gradient(model, [features], {0: label})
for step in (1e-4, 1e-5, 1e-6):
    err = finite_difference_check(loss_at, grad, theta, step=step)
    print(f"central difference step {step:.0e}: max relative error {err:.3e}")
