"""Spot-check a hand-written conv gradient against finite differences.

The full verification suite lives in tests/; this is the same idea at
narrative size.
"""

import numpy as np

import tongueage.layers as L

rng = np.random.default_rng(0)
x = rng.uniform(-1, 1, (5, 5, 2))
params = L.LayerParams(rng.uniform(-1, 1, (3, 3, 2, 3)), rng.uniform(-1, 1, 3))
upstream = rng.uniform(-1, 1, (5, 5, 3))


def loss():
    return float(np.sum(L.conv2d_forward(x, params, "same") * upstream))


grad_x, grad_w, grad_b = L.conv2d_backward(x, params, upstream, "same")

step = 1e-5
worst = 0.0
for arr, grad in ((x, grad_x), (params.weights, grad_w), (params.bias, grad_b)):
    flat, gflat = arr.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        hi = loss()
        flat[i] = keep - step
        lo = loss()
        flat[i] = keep
        numeric = (hi - lo) / (2 * step)
        worst = max(worst, abs(numeric - gflat[i]))

print(f"checked {x.size + params.weights.size + params.bias.size} partial "
      f"derivatives, worst |analytic - numeric| = {worst:.3e}")
assert worst < 1e-6
print("analytic gradients agree with central finite differences")
