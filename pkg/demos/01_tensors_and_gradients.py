"""Tour of the tape-based tensor engine behind every model in this package.

Run:  python3 demos/01_tensors_and_gradients.py
"""

import numpy as np

from esgnn.autodiff import (
    Tape,
    Tensor,
    backward,
    matmul,
    mul,
    reduce_sum,
    relu,
    segment_max,
    softmax_cross_entropy,
)

rng = np.random.default_rng(0)

# Gradients are only recorded inside a Tape context. Outside one, the same
# ops run as plain numpy with no bookkeeping.
w = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
x = Tensor(rng.normal(size=(4, 3)))

with Tape() as tape:
    hidden = relu(matmul(x, w))
    loss = reduce_sum(mul(hidden, hidden))
w.zero_grad()
backward(loss, tape)
print("loss:", float(loss.data))
print("dloss/dw:\n", w.grad)

# The engine was built for graphs, so segment reductions are first class:
# rows sharing a segment id are max-pooled into one output row, and only
# the winning rows receive gradient.
values = Tensor(np.array([[1.0], [5.0], [2.0], [7.0]]), requires_grad=True)
ids = np.array([0, 0, 1, 1])
with Tape() as tape:
    pooled = segment_max(values, ids, n_segments=2)
    total = reduce_sum(pooled)
values.zero_grad()
backward(total, tape)
print("\nsegment max:", pooled.data.ravel(), "winner mask:", values.grad.ravel())

# Cross entropy takes raw logits; row 0's target is class 0.
logits = Tensor(np.array([[1.0, 2.0, 3.0]]), requires_grad=True)
with Tape() as tape:
    ce = softmax_cross_entropy(logits, np.array([0]))
logits.zero_grad()
backward(ce, tape)
print("\ncross entropy:", float(ce.data))
print("gradient (softmax minus one-hot):", logits.grad)

# Every backward rule in the library is held to central finite differences.
# The same check, by hand, for the loss at the top:
eps = 1e-5
approx = np.zeros_like(w.data)
for i in range(w.data.shape[0]):
    for j in range(w.data.shape[1]):
        for sign in (+1, -1):
            w.data[i, j] += sign * eps
            h = np.maximum(x.data @ w.data, 0.0)
            approx[i, j] += sign * (h * h).sum() / (2 * eps)
            w.data[i, j] -= sign * eps
print("\nmax |analytic - finite difference|:", np.abs(w.grad - approx).max())
