import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fwqa import tensor as T
from fwqa.gradcheck import grad_check, relative_error
from fwqa.tensor import ShapeError, Tensor, backward, no_grad
from op_cases import op_cases


def leaf(x):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)


def naive_matmul(A, B):
    m, k = A.shape
    k2, n = B.shape
    assert k == k2
    C = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for p in range(k):
                s += A[i, p] * B[p, j]
            C[i, j] = s
    return C


# -- matmul --------------------------------------------------------------------

def test_matmul_identity_and_scalar():
    B = [[3.0, 4.0], [5.0, 6.0]]
    np.testing.assert_array_equal((Tensor(np.eye(2)) @ Tensor(B)).data, B)
    assert (Tensor([[2.0]]) @ Tensor([[5.0]])).data.tolist() == [[10.0]]


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(0)
    A, B = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    np.testing.assert_allclose((Tensor(A) @ Tensor(B)).data, naive_matmul(A, B), rtol=0, atol=1e-12)


def test_matmul_adjoints():
    rng = np.random.default_rng(1)
    A, B, G = leaf(rng.normal(size=(3, 4))), leaf(rng.normal(size=(4, 2))), rng.normal(size=(3, 2))
    dA, dB = backward(T.tsum(T.mul(A @ B, Tensor(G))), [A, B])
    np.testing.assert_allclose(dA, G @ B.data.T, atol=1e-12)
    np.testing.assert_allclose(dB, A.data.T @ G, atol=1e-12)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((4, 2)))


def test_batched_matmul_against_weight():
    rng = np.random.default_rng(2)
    X, W = leaf(rng.normal(size=(2, 3, 4))), leaf(rng.normal(size=(4, 5)))
    rep = grad_check(lambda x, w: T.tsum(T.tanh(x @ w)), [X, W], h=1e-5, tol=1e-7)
    assert rep.passed, rep


# -- elementwise ---------------------------------------------------------------

def test_elementwise_values():
    assert T.tanh(Tensor(0.0)).item() == 0.0
    assert T.relu(Tensor(-3.0)).item() == 0.0
    assert T.sigmoid(Tensor(0.0)).item() == 0.5
    assert T.concat([Tensor([1.0, 2.0]), Tensor([3.0])]).data.tolist() == [1.0, 2.0, 3.0]
    assert T.elementwise("scale", Tensor([1.0, -2.0]), c=3.0).data.tolist() == [3.0, -6.0]
    with pytest.raises(ValueError):
        T.elementwise("cosh", Tensor(1.0))


def test_elementwise_shape_errors():
    with pytest.raises(ShapeError):
        T.add(Tensor(np.ones(3)), Tensor(np.ones(4)))
    with pytest.raises(ShapeError):
        T.mul(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))
    with pytest.raises(ShapeError):
        T.concat([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3)))], axis=1)


def test_tanh_gradient_matches_finite_difference():
    x = leaf(0.7)
    (g,) = backward(T.tanh(x), [x])
    h = 1e-6
    fd = (math.tanh(0.7 + h) - math.tanh(0.7 - h)) / (2 * h)
    assert abs(g - fd) < 1e-8
    assert abs(g - (1 - math.tanh(0.7) ** 2)) < 1e-15


def test_sigmoid_stable_at_extremes():
    y = T.sigmoid(Tensor([-800.0, 800.0])).data
    assert np.all(np.isfinite(y)) and y[0] == 0.0 and y[1] == 1.0


# -- softmax -------------------------------------------------------------------

def test_softmax_uniform_and_analytic():
    for c in (-7.0, 0.0, 3.5, 1e3):
        np.testing.assert_array_equal(T.softmax(Tensor([c] * 4)).data, [0.25] * 4)
    np.testing.assert_allclose(T.softmax(Tensor([0.0, math.log(2)])).data, [1 / 3, 2 / 3], atol=1e-15)


def test_softmax_matches_high_precision():
    mpmath.mp.dps = 40
    rng = np.random.default_rng(3)
    for _ in range(20):
        v = rng.normal(scale=3.0, size=8)
        ex = [mpmath.exp(mpmath.mpf(float(x))) for x in v]
        z = mpmath.fsum(ex)
        oracle = np.array([float(e / z) for e in ex])
        np.testing.assert_allclose(T.softmax(Tensor(v)).data, oracle, rtol=0, atol=1e-12)


def test_softmax_empty_and_fully_masked():
    with pytest.raises(ValueError):
        T.softmax(Tensor(np.zeros(0)))
    with pytest.raises(ValueError):
        T.softmax(Tensor(np.zeros((2, 3))), mask=np.array([[1, 1, 0], [0, 0, 0]], dtype=bool))


def test_softmax_mask_zeroes_entries():
    p = T.softmax(Tensor([1.0, 2.0, 3.0]), mask=np.array([True, False, True])).data
    assert p[1] == 0.0
    np.testing.assert_allclose(p[[0, 2]], np.exp([1.0, 3.0]) / np.exp([1.0, 3.0]).sum(), atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-50, 50)),
       st.floats(-100, 100))
def test_softmax_sums_to_one_and_shift_invariant(v, c):
    p = T.softmax(Tensor(v)).data
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.all(p >= 0)
    np.testing.assert_allclose(T.softmax(Tensor(v + c)).data, p, rtol=0, atol=1e-12)


def test_log_softmax_consistent():
    v = np.random.default_rng(4).normal(size=(3, 8))
    np.testing.assert_allclose(np.exp(T.log_softmax(Tensor(v)).data), T.softmax(Tensor(v)).data, atol=1e-15)


# -- backward --------------------------------------------------------------------

def test_backward_product_rule():
    x, y = leaf(2.0), leaf(3.0)
    dx, dy = backward(x * y, [x, y])
    assert dx == 3.0 and dy == 2.0


def test_backward_reused_leaf_accumulates():
    x = leaf(3.0)
    (dx,) = backward(x + x * x, [x])
    assert dx == 7.0


def test_backward_recomputes_from_zero():
    x = leaf(3.0)
    f = x * x
    backward(f, [x])
    (dx,) = backward(f, [x])
    assert dx == 6.0


def test_backward_non_scalar_root():
    with pytest.raises(ValueError):
        backward(leaf([1.0, 2.0]) * 2.0)


def test_unreachable_leaf_gets_zero():
    x, z = leaf([1.0, 2.0]), leaf([[5.0]])
    gx, gz = backward(T.tsum(x * x), [x, z])
    np.testing.assert_array_equal(gz, [[0.0]])
    np.testing.assert_array_equal(gx, [2.0, 4.0])


def test_sum_tanh_matvec_finite_differences():
    rng = np.random.default_rng(5)
    W, x = leaf(rng.normal(scale=0.5, size=(4, 3))), leaf(rng.normal(size=(3, 1)))
    rep = grad_check(lambda W, x: T.tsum(T.tanh(W @ x)), [W, x], h=1e-5, tol=1e-6)
    assert rep.passed and rep.max_rel_error < 1e-6


def test_shared_subexpression_equals_expanded_graph():
    rng = np.random.default_rng(6)
    a0, b0 = rng.normal(size=(3, 3)), rng.normal(size=(3,))

    a, b = leaf(a0), leaf(b0)
    s = T.tanh(a @ b)                       # computed once, used three times
    shared = T.tsum(s * s + s * 2.0 + T.sigmoid(s))
    ga, gb = backward(shared, [a, b])

    a2, b2 = leaf(a0), leaf(b0)
    s1, s2, s3, s4 = (T.tanh(a2 @ b2) for _ in range(4))
    expanded = T.tsum(s1 * s2 + s3 * 2.0 + T.sigmoid(s4))
    ea, eb = backward(expanded, [a2, b2])
    np.testing.assert_allclose(ga, ea, rtol=0, atol=1e-12)
    np.testing.assert_allclose(gb, eb, rtol=0, atol=1e-12)


def test_deep_chain_does_not_recurse():
    x = leaf(0.5)
    y = x
    for _ in range(5000):
        y = y * 1.0
    (g,) = backward(y, [x])
    assert g == 1.0


def test_no_grad_records_nothing():
    x = leaf([1.0])
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad and y._parents == ()


# -- every registered op against finite differences -------------------------------

def test_every_op_matches_finite_differences_over_1000_seeds():
    worst = {}
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        for name, (fn, data) in op_cases(rng).items():
            rep = grad_check(fn, [leaf(d) for d in data], h=1e-5, tol=1e-6)
            worst[name] = max(worst.get(name, 0.0), rep.max_rel_error)
    bad = {k: v for k, v in worst.items() if v >= 1e-6}
    assert not bad, bad


# -- grad_check itself ------------------------------------------------------------

def test_grad_check_quadratic():
    x = leaf(np.random.default_rng(7).normal(size=6))
    rep = grad_check(lambda x: T.scale(T.tsum(x * x), 0.5), x, tol=1e-7)
    assert rep.passed and rep.n_checked == 6


def test_grad_check_detects_corrupted_adjoint():
    def bad_square(x):
        def bw(g):
            x._accum(g * 3.0 * x.data)   # true adjoint is 2x
        return Tensor.from_op(x.data * x.data, (x,), bw, "bad_square")

    x = leaf([0.3, -1.2])
    rep = grad_check(lambda x: T.tsum(bad_square(x)), x, tol=1e-4)
    assert not rep.passed and rep.max_rel_error > 0.3


def test_grad_check_restores_point_and_validates_h():
    x0 = np.array([0.25, -0.5])
    x = leaf(x0.copy())
    grad_check(lambda x: T.tsum(T.tanh(x)), x)
    np.testing.assert_array_equal(x.data, x0)
    assert x.data.dtype == np.float64
    with pytest.raises(ValueError):
        grad_check(lambda x: T.tsum(x), x, h=0.0)


def test_relative_error_floor():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1e-12, 0.0) == pytest.approx(1e-4)
    assert relative_error(2.0, 1.0) == 0.5


def test_finite_outputs_for_bounded_inputs():
    rng = np.random.default_rng(8)
    x = Tensor(rng.uniform(-30, 30, size=(4, 6)))
    for out in (T.tanh(x), T.sigmoid(x), T.softmax(x), T.log_softmax(x), T.relu(x)):
        assert np.all(np.isfinite(out.data))
