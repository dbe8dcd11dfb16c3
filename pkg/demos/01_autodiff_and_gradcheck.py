"""
Reverse-mode autodiff on numpy, checked against finite differences
====================================================================

Every model in the package is built from a handful of differentiable
primitives.  This walk-through builds a small graph by hand, runs the
backward pass, and then lets the gradient checker confirm the adjoints of a
whole attention model.
"""

# %%
# A tiny graph: f(W, x) = sum(tanh(W x))
import numpy as np

from fwqa import Tensor, backward, grad_check, check_model
from fwqa import tensor as T

rng = np.random.default_rng(0)
W = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
x = Tensor(rng.normal(size=(4, 1)), requires_grad=True)

f = T.tsum(T.tanh(W @ x))
gW, gx = backward(f, [W, x])
print("f =", float(f.data))
print("df/dx =", gx.ravel())

# %%
# The closed form is easy here: df/dW = (1 - tanh(Wx)^2) x^T
y = np.tanh(W.data @ x.data)
print("closed form matches:", np.allclose(gW, (1 - y ** 2) @ x.data.T))

# %%
# The same comparison, done numerically for every coordinate.  Central
# differences are taken in extended precision, so the relative error is
# limited by the analytic side rather than by cancellation.
rep = grad_check(lambda W, x: T.tsum(T.tanh(W @ x)), [W, x], h=1e-5, tol=1e-6)
print(f"max relative error {rep.max_rel_error:.2e} over {rep.n_checked} coordinates")

# %%
# A full model: cross-entropy of one 8-way question under the
# forgettable-watcher at toy sizes (about 1400 parameters).
rep = check_model("forgettable", tol=1e-4)
print(f"forgettable: passed={rep.passed}, max relative error {rep.max_rel_error:.2e}")
