"""Autodiff engine: forward oracles, hand-derived gradients, finite differences."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aesgrad import errors
from aesgrad import tensor as T
from aesgrad.tensor import Tensor


def _t(data, requires_grad=False, dtype=np.float64):
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=requires_grad, dtype=dtype)


# --- forward oracles --------------------------------------------------------

def test_matmul_matches_numpy():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 5))
    out = T.matmul(_t(a), _t(b))
    np.testing.assert_allclose(out.data, a @ b, rtol=1e-12)


def test_matmul_vector_left_and_right():
    rng = np.random.default_rng(1)
    v, m = rng.standard_normal(4), rng.standard_normal((4, 3))
    np.testing.assert_allclose(T.matmul(_t(v), _t(m)).data, v @ m, rtol=1e-12)
    np.testing.assert_allclose(T.matmul(_t(m.T), _t(v)).data, m.T @ v, rtol=1e-12)


def test_matmul_shape_errors():
    with pytest.raises(errors.ShapeMismatchError):
        T.matmul(_t(np.ones((2, 3))), _t(np.ones((2, 3))))


def test_add_mul_broadcast_row():
    x = _t([[1.0, 2.0], [3.0, 4.0]])
    row = _t([10.0, 20.0])
    np.testing.assert_array_equal(T.add(x, row).data, [[11.0, 22.0], [13.0, 24.0]])
    np.testing.assert_array_equal(T.mul(x, row).data, [[10.0, 40.0], [30.0, 80.0]])
    with pytest.raises(errors.ShapeMismatchError):
        T.add(x, _t([1.0, 2.0, 3.0]))


def test_layer_norm_zero_mean_unit_variance():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((5, 8))
    y = T.layer_norm(_t(x)).data
    np.testing.assert_allclose(y.mean(axis=-1), 0.0, atol=1e-12)
    # variance is shrunk slightly by the eps in the denominator
    np.testing.assert_allclose(y.var(axis=-1), 1.0, atol=1e-4)
    manual = (x - x.mean(axis=-1, keepdims=True)) / np.sqrt(x.var(axis=-1, keepdims=True) + 1e-5)
    np.testing.assert_allclose(y, manual, rtol=1e-12)


def test_softmax_matches_scipy():
    scipy_special = pytest.importorskip("scipy.special")
    rng = np.random.default_rng(3)
    x = rng.standard_normal((4, 6)) * 10
    y = T.softmax(_t(x)).data
    np.testing.assert_allclose(y, scipy_special.softmax(x, axis=-1), rtol=1e-12)
    np.testing.assert_allclose(y.sum(axis=-1), 1.0, rtol=1e-12)


def test_softmax_is_shift_stable():
    x = np.array([1000.0, 1001.0, 999.0])
    y = T.softmax(_t(x)).data
    assert np.all(np.isfinite(y))
    np.testing.assert_allclose(y, T.softmax(_t(x - 1000.0)).data, rtol=1e-12)


def test_gelu_matches_tanh_form():
    x = np.linspace(-4, 4, 33)
    expected = 0.5 * x * (1 + np.tanh(np.sqrt(2 / np.pi) * (x + 0.044715 * x**3)))
    np.testing.assert_allclose(T.gelu(_t(x)).data, expected, rtol=1e-12)


def test_embedding_lookup_gathers_rows():
    table = _t([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    out = T.embedding_lookup(table, [2, 0, 2])
    np.testing.assert_array_equal(out.data, [[5.0, 6.0], [1.0, 2.0], [5.0, 6.0]])
    with pytest.raises(errors.ContractError):
        T.embedding_lookup(table, [3])


def test_mean_axes():
    x = _t([[1.0, 2.0], [3.0, 4.0]])
    assert T.mean(x).item() == pytest.approx(2.5)
    np.testing.assert_array_equal(T.mean(x, axis=0).data, [2.0, 3.0])
    with pytest.raises(errors.ShapeMismatchError):
        T.mean(x, axis=1)


def test_l2_normalize_unit_norm_and_degenerate():
    v = _t([3.0, 4.0])
    np.testing.assert_allclose(T.l2_normalize(v).data, [0.6, 0.8], rtol=1e-12)
    with pytest.raises(errors.DegenerateVectorError):
        T.l2_normalize(_t([0.0, 0.0]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(min_value=-1e3, max_value=1e3), min_size=2, max_size=16))
def test_l2_normalize_property(values):
    v = np.asarray(values, dtype=np.float64)
    if np.linalg.norm(v) < 1e-6:
        return
    y = T.l2_normalize(_t(v)).data
    assert np.linalg.norm(y) == pytest.approx(1.0, abs=1e-9)


def test_slice_concat_round_trip():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((3, 8))
    parts = [T.slice_cols(_t(x), i, i + 2) for i in range(0, 8, 2)]
    np.testing.assert_array_equal(T.concat_cols(parts).data, x)
    with pytest.raises(errors.ShapeMismatchError):
        T.slice_cols(_t(x), 4, 12)


def test_reshape_and_transpose():
    x = _t(np.arange(6.0).reshape(2, 3))
    np.testing.assert_array_equal(T.transpose(x).data, x.data.T)
    np.testing.assert_array_equal(T.reshape(x, (3, 2)).data, x.data.reshape(3, 2))
    with pytest.raises(errors.ShapeMismatchError):
        T.reshape(x, (4, 2))


# --- hand-derived gradients -------------------------------------------------

def test_dot_gradient_is_other_operand():
    a = _t([1.0, 2.0, 3.0], requires_grad=True)
    b = _t([4.0, 5.0, 6.0], requires_grad=True)
    with T.recording() as record:
        out = T.dot(a, b)
    grads = T.backward(record, out)
    np.testing.assert_array_equal(grads.wrt(a).data, b.data)
    np.testing.assert_array_equal(grads.wrt(b).data, a.data)


def test_embedding_lookup_accumulates_repeated_rows():
    """d/dtable of sum(lookup([0,0,2])) puts 2x the row-gradient on row 0."""
    table = _t(np.zeros((3, 2)), requires_grad=True)
    with T.recording() as record:
        rows = T.embedding_lookup(table, [0, 0, 2])
        out = T.mean(rows)  # mean over 6 entries -> each entry grad 1/6
    grads = T.backward(record, out)
    expected = np.array([[2 / 6, 2 / 6], [0.0, 0.0], [1 / 6, 1 / 6]])
    np.testing.assert_allclose(grads.wrt(table).data, expected, rtol=1e-12)


def test_linear_map_gradient_is_outer_product():
    """objective = e . (x W) gives dW = outer(x, e)."""
    rng = np.random.default_rng(5)
    x = rng.standard_normal(4)
    e = rng.standard_normal(3)
    w = _t(rng.standard_normal((4, 3)), requires_grad=True)
    with T.recording() as record:
        out = T.dot(T.matmul(_t(x), w), _t(e))
    grads = T.backward(record, out)
    np.testing.assert_allclose(grads.wrt(w).data, np.outer(x, e), rtol=1e-12)


def test_unreached_parameter_gets_zero_gradient():
    a = _t([1.0, 2.0], requires_grad=True)
    unused = _t([[5.0, 5.0]], requires_grad=True)
    with T.recording() as record:
        branch = T.mean(T.embedding_lookup(unused, [0]))  # separate island
        out = T.dot(a, a)
    del branch
    grads = T.backward(record, out)
    assert unused in grads
    np.testing.assert_array_equal(grads.wrt(unused).data, np.zeros((1, 2)))


def test_gradient_accumulates_across_reuse():
    a = _t([2.0], requires_grad=True)
    with T.recording() as record:
        out = T.dot(a, a)  # d/da (a.a) = 2a
    grads = T.backward(record, out)
    np.testing.assert_allclose(grads.wrt(a).data, [4.0], rtol=1e-12)


# --- finite differences -----------------------------------------------------

def _composite_params(seed):
    rng = np.random.default_rng(seed)
    w1 = _t(rng.standard_normal((5, 7)) * 0.3, requires_grad=True)
    b1 = _t(rng.standard_normal(7) * 0.1, requires_grad=True)
    w2 = _t(rng.standard_normal((7, 4)) * 0.3, requires_grad=True)
    gamma = _t(np.ones(4), requires_grad=True)
    x = rng.standard_normal((3, 5))
    e = rng.standard_normal(4)
    return [w1, b1, w2, gamma], x, e


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_grad_check_on_composite_network(seed):
    """MLP with layer norm, gelu, softmax attention-ish mixing: analytic vs numeric."""
    with T.precision(np.float64):
        params, x_data, e_data = _composite_params(seed)
        w1, b1, w2, gamma = params
        x, e = _t(x_data), _t(e_data)

        def forward():
            h = T.gelu(T.add(T.matmul(x, w1), b1))
            attn = T.softmax(T.matmul(h, T.transpose(h)))
            mixed = T.matmul(attn, h)
            y = T.mul(T.layer_norm(T.matmul(mixed, w2)), gamma)
            pooled = T.mean(y, axis=0)
            return T.dot(T.l2_normalize(pooled), e)

        err = T.grad_check(forward, params, step_h=1e-6, sample_size=200, seed=seed)
    assert err < 1e-6


def test_grad_check_rejects_bad_step_and_nondeterminism():
    p = _t([1.0], requires_grad=True)

    def forward():
        return T.dot(p, p)

    with pytest.raises(errors.ContractError):
        T.grad_check(forward, [p], step_h=0.0)

    state = {"n": 0}

    def flaky():
        state["n"] += 1
        return T.dot(p, _t([float(state["n"])]))

    with pytest.raises(errors.DeterminismError):
        T.grad_check(flaky, [p], step_h=1e-6)


def test_grad_check_probes_every_parameter():
    """With a budget below the total coordinate count, each param still gets probed."""
    with T.precision(np.float64):
        rng = np.random.default_rng(9)
        params = [_t(rng.standard_normal((4, 4)), requires_grad=True) for _ in range(3)]
        v = _t(rng.standard_normal(4))

        def forward():
            h = v
            for w in params:
                h = T.matmul(h, w)
            return T.mean(h)

        # deliberately wrong gradient would be caught; here we just assert it runs
        err = T.grad_check(forward, params, step_h=1e-6, sample_size=10, seed=0)
    assert err < 1e-7


# --- recording contract -----------------------------------------------------

def test_nested_recording_rejected():
    with T.recording():
        with pytest.raises(errors.ContractError):
            with T.recording():
                pass


def test_no_recording_suspends_taping():
    a = _t([1.0, 2.0], requires_grad=True)
    with T.recording() as record:
        T.dot(a, a)
        with T.no_recording():
            T.dot(a, a)
    assert len(record.ops) == 1


def test_backward_requires_scalar_from_this_record():
    a = _t([1.0, 2.0], requires_grad=True)
    with T.recording() as record:
        out = T.scale(a, 2.0)
    with pytest.raises(errors.ContractError):
        T.backward(record, out)  # non-scalar
    with T.recording() as other:
        scalar = T.dot(a, a)
    with pytest.raises(errors.ContractError):
        T.backward(record, scalar)  # produced elsewhere


def test_ops_outside_recording_are_plain():
    a = _t([1.0, 2.0], requires_grad=True)
    out = T.dot(a, a)
    assert out.item() == pytest.approx(5.0)


# --- precision mode ----------------------------------------------------------

def test_precision_context_switches_default_dtype():
    assert Tensor([1.0]).data.dtype == np.float32
    with T.precision(np.float64):
        assert Tensor([1.0]).data.dtype == np.float64
    assert Tensor([1.0]).data.dtype == np.float32


def test_precision_rejects_unsupported_dtype():
    with pytest.raises(errors.ContractError):
        T.set_default_dtype(np.int32)
