"""
Reverse-mode autodiff in plain numpy
====================================

Build a small expression, differentiate it, and compare against central
finite differences. Every layer in the encoder and generator is made of
these ops.
"""
import numpy as np

import redpanda.numerics as nx

rng = np.random.default_rng(0)

# a tiny conv layer followed by a normalised linear head
x = nx.Tensor(rng.normal(size=(2, 6, 6, 3)))
w = nx.Tensor(rng.normal(size=(3, 3, 3, 4)) * 0.3, requires_grad=True)
head = nx.Tensor(rng.normal(size=(36, 5)) * 0.3, requires_grad=True)


def forward(w, head):
    h = nx.leaky_relu(nx.conv2d(x, w, stride=2))          # (2, 3, 3, 4)
    z = nx.l2_normalize(h.reshape(2, -1) @ head, axis=1)  # unit codes
    return nx.sum_(nx.slice_rows(z, 0, 1) * nx.slice_rows(z, 1, 2))


loss = forward(w, head)
print("cosine between the two codes:", round(loss.item(), 6))

grads = nx.backward(loss)
numeric = nx.numerical_grad(lambda wa, ha: forward(nx.Tensor(wa), nx.Tensor(ha)).item(),
                            [w.data.copy(), head.data.copy()], step=1e-6)
print("rel err conv kernel:", nx.max_rel_error(grads[w], numeric[0]))
print("rel err head       :", nx.max_rel_error(grads[head], numeric[1]))

# gradients are overwritten, never accumulated, and a graph is single-use
try:
    nx.backward(loss)
except nx.GraphError as exc:
    print("second backward:", exc)

# Adam on a quadratic bowl
p = nx.Tensor(np.array([3.0, -2.0]), requires_grad=True)
opt = nx.Adam([p], lr=0.1)
for step in range(200):
    nx.backward(nx.sum_(nx.square(p)))
    opt.step()
print("Adam minimum:", np.round(p.data, 4))
