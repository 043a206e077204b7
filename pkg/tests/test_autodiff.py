import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cegan.autodiff import ShapeError, Tape, backward, forward, grad_check


def central_diff(fn, x, step=1e-5):
    """Independent oracle: numeric gradient of a plain numpy scalar function."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        hi, lo = x.copy(), x.copy()
        hi[idx] += step
        lo[idx] -= step
        g[idx] = (fn(hi) - fn(lo)) / (2 * step)
    return g


def test_sigmoid_at_zero():
    t = Tape()
    x = t.leaf("x", 0.0)
    y = t.sigmoid(x)
    assert y.value == 0.5
    assert backward(t, y)["x"] == pytest.approx(0.25, abs=1e-15)


def test_mean_of_vector():
    t = Tape()
    assert t.mean(t.leaf("v", [1.0, 2.0, 3.0, 4.0])).value == 2.5


def test_log_derivative():
    t = Tape()
    y = t.log(t.leaf("x", 2.0))
    assert backward(t, y)["x"] == pytest.approx(0.5, abs=1e-15)


def test_two_layer_mlp_by_hand():
    # a1 = [1,2]@W1 + b1 = [2, 3.5]; relu keeps both; C = 2 - 7 + 0.25
    t = Tape()
    x = t.const([[1.0, 2.0]])
    W1 = t.leaf("W1", [[1.0, -1.0], [0.5, 2.0]])
    b1 = t.leaf("b1", [0.0, 0.5])
    W2 = t.leaf("W2", [[1.0], [-2.0]])
    b2 = t.leaf("b2", [0.25])
    h = t.relu(t.add_bias(t.matmul(x, W1), b1))
    out = t.sum(t.add_bias(t.matmul(h, W2), b2))
    assert out.value == pytest.approx(-4.75, abs=1e-14)
    g = backward(t, out)
    np.testing.assert_allclose(g["W2"], [[2.0], [3.5]])
    np.testing.assert_allclose(g["b1"], [1.0, -2.0])
    np.testing.assert_allclose(g["W1"], [[1.0, -2.0], [2.0, -4.0]])


def test_mse_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=8), rng.normal(size=8)
    t = Tape()
    loss = t.mean(t.square(t.sub(t.leaf("a", a), t.const(b))))
    analytic = backward(t, loss)["a"]
    numeric = central_diff(lambda v: np.mean((v - b) ** 2), a)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-9)


def test_grad_check_quadratic():
    p = np.random.default_rng(0).normal(size=12)
    assert grad_check(lambda t, x: t.sum(t.square(x)), p, 1e-5) < 1e-7


# every supported op, against an independent numpy evaluation of the same function
UNARY = {
    "sigmoid": (lambda t, x: t.sigmoid(x), lambda v: 1 / (1 + np.exp(-v)), (-4, 4)),
    "tanh": (lambda t, x: t.tanh(x), np.tanh, (-3, 3)),
    "relu": (lambda t, x: t.relu(x), lambda v: np.maximum(v, 0), (-3, 3)),
    "log": (lambda t, x: t.log(x), np.log, (0.2, 3)),
    "square": (lambda t, x: t.square(x), np.square, (-3, 3)),
    "sqrt": (lambda t, x: t.sqrt(x), np.sqrt, (0.2, 3)),
    "scale": (lambda t, x: t.scale(x, -1.7), lambda v: -1.7 * v, (-3, 3)),
    "add_scalar": (lambda t, x: t.add_scalar(x, 0.3), lambda v: v + 0.3, (-3, 3)),
    "clamp_min": (lambda t, x: t.clamp_min(x, 0.1), lambda v: np.maximum(v, 0.1), (-3, 3)),
    "transpose": (lambda t, x: t.transpose(x), lambda v: v.T, (-3, 3)),
    "sum_rows": (lambda t, x: t.sum_rows(x), lambda v: v.sum(axis=1), (-3, 3)),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_ops_match_finite_differences(name):
    build, ref, (lo, hi) = UNARY[name]
    rng = np.random.default_rng(sum(map(ord, name)))
    for _ in range(100):
        x = rng.uniform(lo, hi, size=(3, 4))
        if name in ("relu", "clamp_min"):
            kink = 0.0 if name == "relu" else 0.1
            x[np.abs(x - kink) < 1e-3] += 0.01
        w = rng.normal(size=ref(x).shape)
        t = Tape()
        root = t.sum(t.mul(build(t, t.leaf("x", x)), t.const(w)))
        analytic = backward(t, root)["x"]
        numeric = central_diff(lambda v: float(np.sum(ref(v) * w)), x)
        err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
        assert err.max() < 1e-4


BINARY = {
    "add": (lambda t, a, b: t.add(a, b), lambda a, b: a + b, (3, 4), (3, 4)),
    "sub": (lambda t, a, b: t.sub(a, b), lambda a, b: a - b, (3, 4), (3, 4)),
    "mul": (lambda t, a, b: t.mul(a, b), lambda a, b: a * b, (3, 4), (3, 4)),
    "matmul": (lambda t, a, b: t.matmul(a, b), lambda a, b: a @ b, (3, 4), (4, 2)),
    "add_bias": (lambda t, a, b: t.add_bias(a, b), lambda a, b: a + b, (3, 4), (4,)),
}


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_ops_match_finite_differences(name):
    build, ref, sa, sb = BINARY[name]
    rng = np.random.default_rng(sum(map(ord, name)))
    for _ in range(100):
        a, b = rng.normal(size=sa), rng.normal(size=sb)
        w = rng.normal(size=ref(a, b).shape)
        t = Tape()
        root = t.mean(t.mul(build(t, t.leaf("a", a), t.leaf("b", b)), t.const(w)))
        g = backward(t, root)
        na = central_diff(lambda v: float(np.mean(ref(v, b) * w)), a)
        nb = central_diff(lambda v: float(np.mean(ref(a, v) * w)), b)
        np.testing.assert_allclose(g["a"], na, atol=1e-8)
        np.testing.assert_allclose(g["b"], nb, atol=1e-8)


@settings(max_examples=50, deadline=None)
@given(c=st.floats(-100, 100).filter(lambda c: abs(c) > 1e-3), seed=st.integers(0, 2**31))
def test_backward_is_linear_in_seed(c, seed):
    rng = np.random.default_rng(seed)
    t = Tape()
    x = t.leaf("x", rng.normal(size=(4, 3)))
    W = t.leaf("W", rng.normal(size=(3, 2)))
    root = t.mean(t.tanh(t.matmul(x, W)))
    g1 = {k: v.copy() for k, v in backward(t, root).items()}
    gc = backward(t, root, seed=c)
    for k in g1:
        np.testing.assert_allclose(gc[k], c * g1[k], rtol=1e-12, atol=0)


@pytest.mark.parametrize("c", [2.0, 0.25, -8.0, 1024.0])
def test_power_of_two_seed_scales_exactly(c):
    rng = np.random.default_rng(11)
    t = Tape()
    x = t.leaf("x", rng.normal(size=(4, 3)))
    root = t.mean(t.log(t.add_scalar(t.square(t.tanh(x)), 1.0)))
    g1 = backward(t, root)["x"].copy()
    assert (backward(t, root, seed=c)["x"] == c * g1).all()


def test_repeat_forward_backward_is_bit_identical():
    rng = np.random.default_rng(1)
    t = Tape()
    x = t.leaf("x", rng.normal(size=(5, 3)))
    W = t.leaf("W", rng.normal(size=(3, 2)))
    root = t.mean(t.sigmoid(t.matmul(x, W)))
    first = {k: v.copy() for k, v in backward(t, root).items()}
    bindings = {"x": x.value.copy(), "W": W.value.copy()}
    for _ in range(3):
        v = forward(t, bindings, root)
        g = backward(t, root)
        assert v.tobytes() == root.value.tobytes()
        for k in first:
            assert g[k].tobytes() == first[k].tobytes()


def test_forward_rebinding_recomputes():
    t = Tape()
    x = t.leaf("x", [1.0, 2.0])
    root = t.sum(t.square(x))
    assert float(root.value) == 5.0
    assert float(forward(t, {"x": [3.0, 4.0]})) == 25.0
    np.testing.assert_allclose(backward(t, root)["x"], [6.0, 8.0])


def test_shape_mismatch_names_the_node():
    t = Tape()
    a = t.leaf("a", np.zeros((2, 3)))
    b = t.leaf("b", np.zeros((4, 2)))
    with pytest.raises(ShapeError, match="node #2"):
        t.matmul(a, b)
    with pytest.raises(ShapeError):
        t.add_bias(a, t.leaf("c", np.zeros(2)))


def test_log_of_non_positive_rejected():
    t = Tape()
    with pytest.raises(ValueError, match="non-positive"):
        t.log(t.leaf("x", [1.0, 0.0]))


def test_non_scalar_root_rejected():
    t = Tape()
    x = t.leaf("x", [1.0, 2.0])
    with pytest.raises(ValueError, match="scalar"):
        backward(t, t.square(x))


def test_unbound_leaf_name_rejected():
    t = Tape()
    t.sum(t.leaf("x", [1.0]))
    with pytest.raises(KeyError):
        forward(t, {"y": [1.0]})


def test_unused_leaf_gets_zero_gradient_and_constants_none():
    t = Tape()
    x = t.leaf("x", [1.0, 2.0])
    t.leaf("unused", [5.0])
    root = t.sum(t.mul(x, t.const([3.0, 4.0])))
    g = backward(t, root)
    np.testing.assert_array_equal(g["unused"], [0.0])
    assert set(g) == {"x", "unused"}
    assert math.isclose(float(root.value), 11.0)


def test_reset_clears_tape():
    t = Tape()
    t.sum(t.leaf("x", [1.0]))
    t.reset()
    assert len(t) == 0
