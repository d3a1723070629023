"""
A tour of the differentiation engine
====================================

The library trains physics-informed models with derivatives computed
three ways at once: reverse-mode gradients for the optimizer,
second-order forward jets for the PDE operators, and reverse-over-forward
for gradients of residual losses. This script walks through each layer.
"""

import numpy as np

import deepbayo.autodiff as ad
from deepbayo.autodiff import Jet2, Parameter, Tape

# ---------------------------------------------------------------------------
# reverse mode: a tape of array-valued nodes
# ---------------------------------------------------------------------------

# Parameters are named arrays. Watching one on a tape makes it a node;
# arithmetic on nodes records closure-based vector-Jacobian products.
w = Parameter("w", np.array([0.5, -1.0, 2.0]))
tape = Tape()
x = tape.constant(np.array([1.0, 2.0, 3.0]))
loss = ad.mean(ad.square(ad.g_tanh(tape.watch(w) * x)))
grads = ad.backward(loss)

print("loss                 ", float(loss.value))
print("dloss/dw             ", grads.of(w))

# closed form for comparison: d/dw mean(tanh(wx)^2) per component
wx = w.value * np.array([1.0, 2.0, 3.0])
closed = 2.0 * np.tanh(wx) / np.cosh(wx) ** 2 * np.array([1.0, 2.0, 3.0]) / 3.0
print("closed form          ", closed)

# ---------------------------------------------------------------------------
# forward jets: value, directional derivative, second derivative
# ---------------------------------------------------------------------------

# jet_eval seeds a unit direction and pushes (v, v', v'') through the
# computation. For f(x) = 1 / (1 + x^2) at x = 1 the exact answers are
# f = 0.5, f' = -0.5, f'' = 0.5.
jet = ad.jet_eval(lambda js: 1.0 / (js[0] * js[0] + 1.0),
                  np.array([1.0]), np.array([1.0]))
print("\njet of 1/(1+x^2) at 1:", float(jet.v.value[0]),
      float(jet.d.value[0]), float(jet.dd.value[0]))

# The laplacian helper sums per-axis second derivatives. The squared
# norm in three dimensions has laplacian 6 everywhere.
lap = ad.laplacian(
    lambda jets: ad.g_square(jets[0]) + ad.g_square(jets[1])
    + ad.g_square(jets[2]),
    np.array([[0.3, -0.2, 0.9]]))
print("laplacian of |x|^2   ", float(lap.value[0]))

# ---------------------------------------------------------------------------
# nested: gradients of second derivatives
# ---------------------------------------------------------------------------

# Residual losses need d/dparams of u_xx. Jets carry tape nodes in their
# slots, so reverse mode runs straight through a forward jet. Here:
# d/dp of d^2/dx^2 sin(p x) evaluated at x = 0.6.
p = Parameter("p", 1.3)
x0 = 0.6
tape = Tape()
jet = ad.jet_eval(lambda js: ad.g_sin(tape.watch(p) * js[0]),
                  np.array([x0]), np.array([1.0]), tape=tape)
grads = ad.backward(ad.mean(jet.dd))
pv = 1.3
closed = -2 * pv * np.sin(pv * x0) - pv * pv * x0 * np.cos(pv * x0)
print("\nnested derivative    ", float(grads.of(p)))
print("closed form          ", closed)

# ---------------------------------------------------------------------------
# the finite-difference audit
# ---------------------------------------------------------------------------

# grad_check compares every parameter gradient against central
# differences. The same harness backs the `deep-bayo gradcheck` command.
rng = np.random.default_rng(0)
w1 = Parameter("w1", rng.standard_normal((3, 5)) * 0.5)
w2 = Parameter("w2", rng.standard_normal((5, 1)) * 0.5)
data = rng.standard_normal((4, 3))


def mlp_loss(tape):
    h = ad.g_tanh(ad.matmul(tape.constant(data), tape.watch(w1)))
    return ad.mean(ad.square(ad.matmul(h, tape.watch(w2))))


report = ad.grad_check(mlp_loss, [w1, w2], tol=1e-5)
print("\ngrad check            max rel error", report.max_rel_error,
      "passed", report.passed)
