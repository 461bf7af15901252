import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hyperpred import autodiff as ad
from hyperpred.autodiff import Value
from hyperpred.errors import NumericalError, ParameterError, ShapeError
from hyperpred.gradcheck import OP_CASES, check_case


def param(x):
    return Value(np.asarray(x, dtype=float), requires_grad=True)


finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


# ---------------------------------------------------------------------------
# tape mechanics
# ---------------------------------------------------------------------------


def test_backward_needs_scalar_root():
    x = param([1.0, 2.0])
    with pytest.raises(ShapeError):
        (x * 2.0).backward()


def test_shared_subexpression_accumulates():
    x = param(3.0)
    y = x * x + x  # dy/dx = 2x + 1
    y.backward()
    assert x.grad == pytest.approx(7.0)


def test_detach_blocks_gradient():
    x = param(2.0)
    y = x.detach() * x
    y.backward()
    assert x.grad == pytest.approx(2.0)


def test_constants_get_no_gradient():
    x = param([1.0, 2.0])
    c = ad.as_value(np.array([3.0, 4.0]))
    ad.sum(x * c).backward()
    assert not c.requires_grad
    np.testing.assert_array_equal(x.grad, [3.0, 4.0])


def test_deep_chain_does_not_recurse():
    x = param(1.0)
    y = x
    for _ in range(5000):
        y = y + 0.0
    y.backward()
    assert x.grad == 1.0


def test_backward_is_linear():
    rng = np.random.default_rng(0)
    a, b = param(rng.normal(size=(3, 4))), param(rng.normal(size=(4, 2)))

    def f():
        return ad.sum(ad.sigmoid(a @ b))

    def g():
        return ad.sum(ad.softplus(a) * 2.0) + ad.sum(b * b)

    grads = {}
    for name, fn in [("f", f), ("g", g), ("combo", lambda: 0.7 * f() - 1.3 * g())]:
        a.zero_grad(), b.zero_grad()
        fn().backward()
        grads[name] = (a.grad.copy(), b.grad.copy())
    for i in range(2):
        np.testing.assert_allclose(grads["combo"][i], 0.7 * grads["f"][i] - 1.3 * grads["g"][i], atol=1e-10)


def test_forward_is_bitwise_deterministic():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 3, 8))
    w, b = rng.normal(size=(4, 3, 3)), rng.normal(size=4)
    s, t = rng.uniform(0.5, 2, size=(2, 4)), rng.normal(size=(2, 4))
    outs = [ad.adain(ad.conv1d(x, w, b), s, t).data.tobytes() for _ in range(2)]
    assert outs[0] == outs[1]


# ---------------------------------------------------------------------------
# matmul
# ---------------------------------------------------------------------------


def test_matmul_identity():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(ad.matmul(a, np.eye(2)).data, a)


def test_matmul_hand_value():
    assert ad.matmul([[1.0, 2.0]], [[3.0], [4.0]]).data.tolist() == [[11.0]]


def test_matmul_grad_is_column_pattern():
    a = param(np.random.default_rng(0).normal(size=(3, 2)))
    ad.sum(ad.matmul(a, np.ones((2, 1)))).backward()
    np.testing.assert_array_equal(a.grad, np.ones((3, 1)) @ np.ones((1, 2)))


def test_matmul_shape_error_reports_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_spmm_matches_dense():
    rng = np.random.default_rng(0)
    m = sp.random(5, 4, density=0.4, random_state=1, format="csr")
    b = rng.normal(size=(4, 3))
    np.testing.assert_allclose(ad.spmm(m, b).data, m.toarray() @ b)


# ---------------------------------------------------------------------------
# conv1d / avgpool1d / upsample1d
# ---------------------------------------------------------------------------


def test_conv1d_hand_value():
    out = ad.conv1d([[1.0, 1.0, 1.0]], [[[1.0, 1.0, 1.0]]], [0.0])
    assert out.data.tolist() == [[2.0, 3.0, 2.0]]


@given(arrays(np.float64, (2, 7), elements=finite))
def test_conv1d_identity_kernel(x):
    kernel = np.zeros((2, 2, 3))
    kernel[0, 0, 1] = kernel[1, 1, 1] = 1.0
    np.testing.assert_array_equal(ad.conv1d(x, kernel, np.zeros(2)).data, x)


def test_conv1d_zero_input_gives_bias():
    out = ad.conv1d(np.zeros((2, 5)), np.ones((3, 2, 3)), [0.5, -1.0, 2.0])
    np.testing.assert_array_equal(out.data, np.repeat([[0.5], [-1.0], [2.0]], 5, axis=1))


def test_conv1d_batched_matches_single():
    rng = np.random.default_rng(0)
    x, w, b = rng.normal(size=(3, 2, 6)), rng.normal(size=(4, 2, 3)), rng.normal(size=4)
    batched = ad.conv1d(x, w, b).data
    for i in range(3):
        np.testing.assert_allclose(batched[i], ad.conv1d(x[i], w, b).data, atol=1e-14)


@pytest.mark.parametrize(
    "x, kernels, bias",
    [
        (np.ones((2, 0)), np.ones((1, 2, 3)), np.ones(1)),
        (np.ones((2, 4)), np.ones((1, 2, 5)), np.ones(1)),
        (np.ones((3, 4)), np.ones((1, 2, 3)), np.ones(1)),
        (np.ones((2, 4)), np.ones((1, 2, 3)), np.ones(2)),
    ],
)
def test_conv1d_shape_errors(x, kernels, bias):
    with pytest.raises(ShapeError):
        ad.conv1d(x, kernels, bias)


@pytest.mark.parametrize(
    "x, window, expected",
    [([[2.0, 4.0, 6.0, 8.0]], 2, [[3.0, 7.0]]), ([[1.0, 2.0, 3.0]], 2, [[1.5, 3.0]])],
)
def test_avgpool1d_values(x, window, expected):
    assert ad.avgpool1d(x, window).data.tolist() == expected


@given(arrays(np.float64, (3, 5), elements=finite))
def test_avgpool1d_window_one_is_identity(x):
    np.testing.assert_array_equal(ad.avgpool1d(x, 1).data, x)


@pytest.mark.parametrize("window", [0, -2])
def test_avgpool1d_rejects_bad_window(window):
    with pytest.raises(ParameterError):
        ad.avgpool1d(np.ones((1, 4)), window)


def test_avgpool1d_spreads_gradient_uniformly():
    x = param(np.arange(5.0)[None])
    ad.sum(ad.avgpool1d(x, 2)).backward()
    np.testing.assert_allclose(x.grad, [[0.5, 0.5, 0.5, 0.5, 1.0]])


def test_upsample1d_repeats():
    assert ad.upsample1d([[1.0, 2.0]], 2).data.tolist() == [[1.0, 1.0, 2.0, 2.0]]


# ---------------------------------------------------------------------------
# elementwise activations
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("x, expected", [(5.0, 5.0), (-1.0, -0.01), (0.0, 0.0)])
def test_leaky_relu_values(x, expected):
    assert ad.leaky_relu(x).item() == pytest.approx(expected)


def test_leaky_relu_kink_uses_negative_slope():
    x = param(0.0)
    ad.leaky_relu(x).backward()
    assert x.grad == pytest.approx(0.01)


def test_sigmoid_at_zero():
    x = param(0.0)
    y = ad.sigmoid(x)
    y.backward()
    assert y.item() == 0.5
    assert x.grad == pytest.approx(0.25)


def test_sigmoid_saturates_without_overflow():
    with np.errstate(over="raise", invalid="raise"):
        hi = ad.sigmoid(100.0).item()
        lo = ad.sigmoid(-100.0).item()
    assert abs(hi - 1.0) < 1e-12
    assert 0.0 <= lo < 1e-40


def test_softplus_is_stable():
    with np.errstate(over="raise", invalid="raise"):
        out = ad.softplus(np.array([-800.0, 0.0, 800.0])).data
    np.testing.assert_allclose(out, [0.0, np.log(2.0), 800.0])


# ---------------------------------------------------------------------------
# adain
# ---------------------------------------------------------------------------


def test_adain_hand_value():
    out = ad.adain([[1.0, 3.0]], [2.0], [0.0], eps=1e-12)
    np.testing.assert_allclose(out.data, [[-2.0, 2.0]], atol=1e-10)


def test_adain_identity_style():
    x = np.array([[1.0, 3.0]])  # mean 2, unit std
    out = ad.adain(x, [1.0], [2.0], eps=1e-14)
    np.testing.assert_allclose(out.data, x, atol=1e-10)


def test_adain_constant_input_gives_shift():
    out = ad.adain(np.full((2, 4), 3.0), [1.5, 2.0], [0.25, -1.0])
    np.testing.assert_array_equal(out.data, [[0.25] * 4, [-1.0] * 4])


def test_adain_rejects_nonpositive_eps():
    with pytest.raises(ParameterError):
        ad.adain(np.ones((1, 2)), [1.0], [0.0], eps=0.0)


# ---------------------------------------------------------------------------
# cosine similarity and candidate pooling
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "a, b, expected",
    [([1.0, 2.0], [1.0, 2.0], 1.0), ([1.0, 0.0], [0.0, 3.0], 0.0), ([1.0, 0.0], [1.0, 1.0], 0.70710678)],
)
def test_cosine_values(a, b, expected):
    assert ad.cosine_similarity(a, b).item() == pytest.approx(expected, abs=1e-8)


def test_cosine_zero_vector_is_finite():
    assert ad.cosine_similarity([0.0, 0.0], [1.0, 1.0]).item() == 0.0


def test_pool_candidates_maxmin():
    out = ad.pool_candidates(np.array([[1.0, 2.0], [3.0, 0.0], [9.0, 9.0]]), [(0, 1)])
    assert out.data.tolist() == [[2.0, 2.0]]


def test_pool_ties_route_to_first_member():
    nodes = param([[1.0], [1.0], [0.0]])
    ad.sum(ad.pool_candidates(nodes, [(0, 1, 2)])).backward()
    np.testing.assert_array_equal(nodes.grad, [[1.0], [0.0], [-1.0]])


def test_straight_through_forward_ignores_weights():
    rng = np.random.default_rng(0)
    nodes = rng.normal(size=(5, 3))
    w = param(rng.uniform(0.1, 0.9, size=(1, 5)))
    hard = ad.pool_candidates(nodes, [(0, 2, 4)]).data
    st_out = ad.pool_candidates(nodes, [(0, 2, 4)], w, straight_through=True)
    np.testing.assert_array_equal(st_out.data, hard)
    ad.sum(st_out).backward()
    assert np.any(w.grad != 0)


# ---------------------------------------------------------------------------
# finite-difference checks
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients_match_finite_differences(name):
    result = check_case(name, OP_CASES[name], points=10, seed=11)
    assert result.max_error < 1e-4, result


def test_gradient_check_sigmoid_at_zero():
    x = param(0.0)
    err = ad.gradient_check(lambda: ad.sigmoid(x), [x])
    assert err < 1e-8


def test_gradient_check_matmul():
    rng = np.random.default_rng(5)
    a, b = param(rng.normal(size=(3, 4))), param(rng.normal(size=(4, 2)))
    assert ad.gradient_check(lambda: ad.sum(a @ b), [a, b]) < 1e-6


def test_gradient_check_flags_wrong_backward():
    x = param([0.3, -0.7])

    def wrong_square(v):
        def _backward(node):
            v.grad += node.grad * v.data  # should be 2 * v
        return Value(v.data**2, (v,), "bad", _backward)

    assert ad.gradient_check(lambda: ad.sum(wrong_square(x)), [x]) > 0.1


def test_gradient_check_rejects_nonfinite_loss():
    x = param([1.0])
    with pytest.raises(NumericalError):
        ad.gradient_check(lambda: ad.sum(x * np.inf), [x])
