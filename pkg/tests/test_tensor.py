import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speechgrade import tensor as T
from speechgrade.errors import ContractError, DegenerateInputError, DimensionError, NumericError, ParameterError
from speechgrade.tensor import Adam, AdamState, Tensor, adam_step

from helpers import gradcheck, leaf, lstm_weights, op_gradient_cases, weighted

TOL = 1e-4


# backward basics


def test_sum_gives_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_square_sum_gives_twice_x():
    x = Tensor([1.0, -2.0, 3.5], requires_grad=True)
    (x * x).sum().backward()
    np.testing.assert_array_equal(x.grad, 2 * x.data)


def test_non_scalar_loss_rejected():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ContractError):
        (x * 2).backward()


def test_shared_subexpression_accumulates():
    x = Tensor(3.0, requires_grad=True)
    y = x * x
    (y + y * x).backward()  # d/dx (x^2 + x^3)
    assert x.grad == pytest.approx(2 * 3 + 3 * 9)


def test_no_grad_builds_no_graph():
    x = Tensor([1.0], requires_grad=True)
    with T.no_grad():
        y = x * 2
    assert not y.requires_grad


# matmul / concat / stack


def test_matmul_values_and_shape_error():
    a = Tensor(np.arange(6.0).reshape(2, 3))
    b = Tensor(np.ones((3, 4)))
    np.testing.assert_array_equal(T.matmul(a, b).data, a.data @ b.data)
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 3\)"):
        T.matmul(a, Tensor(np.ones((4, 3))))


def test_matmul_vector_operands(rng):
    a, b, v = leaf(rng, 3, 4), leaf(rng, 4, 2), leaf(rng, 4)
    assert T.matmul(a, v).shape == (3,)
    assert T.matmul(v, b).shape == (2,)
    assert gradcheck(lambda: weighted(T.matmul(a, v), np.random.default_rng(1)), [a, v]) < TOL
    assert gradcheck(lambda: weighted(T.matmul(v, b), np.random.default_rng(1)), [v, b]) < TOL


def test_concat_and_stack_values():
    a, b = Tensor(np.zeros((2, 2))), Tensor(np.ones((1, 2)))
    np.testing.assert_array_equal(T.concat([a, b]).data, np.vstack([a.data, b.data]))
    np.testing.assert_array_equal(T.stack([a, a + 1], axis=0).data[1], np.ones((2, 2)))


# conv / pooling


def test_conv1d_known_values():
    x = Tensor([[1.0, 2.0, 3.0, 4.0]])
    k = Tensor([[[1.0, 0.0, -1.0]]])
    out = T.conv1d(x, k, Tensor([0.5]))
    np.testing.assert_array_equal(out.data, [[-1.5, -1.5]])
    padded = T.conv1d(x, k, Tensor([0.0]), padding=1)
    np.testing.assert_array_equal(padded.data, [[-2.0, -2.0, -2.0, 3.0]])


def test_conv1d_width_exceeds_steps():
    with pytest.raises(DegenerateInputError):
        T.conv1d(Tensor(np.ones((1, 2))), Tensor(np.ones((1, 1, 3))), Tensor([0.0]))


def test_maxpool_drops_remainder_and_validates():
    x = Tensor([[1.0, 5.0, 2.0, 2.0, 9.0]])
    np.testing.assert_array_equal(T.maxpool1d(x, 2).data, [[5.0, 2.0]])
    with pytest.raises(ParameterError):
        T.maxpool1d(x, 0)


def test_maxpool_tie_routes_to_first():
    x = Tensor([[3.0, 3.0, 1.0, 1.0]], requires_grad=True)
    T.maxpool1d(x, 2).sum().backward()
    np.testing.assert_array_equal(x.grad, [[1.0, 0.0, 1.0, 0.0]])


def test_global_maxpool_tie_routes_to_first():
    x = Tensor([[2.0, 7.0, 7.0]], requires_grad=True)
    T.global_maxpool(x).sum().backward()
    np.testing.assert_array_equal(x.grad, [[0.0, 1.0, 0.0]])


# softmax


def test_softmax_shift_invariance(rng):
    z = rng.standard_normal(7)
    np.testing.assert_allclose(T.softmax(Tensor(z)).data, T.softmax(Tensor(z + 1000.0)).data, atol=1e-15)


def test_softmax_large_logits_stay_finite():
    p = T.softmax(Tensor([1e4, 0.0, -1e4])).data
    assert np.all(np.isfinite(p))
    assert p[0] == pytest.approx(1.0)


def test_softmax_rejects_non_finite():
    with pytest.raises(NumericError):
        T.softmax(Tensor([0.0, np.inf]))


def test_softmax_mask_zeroes_positions():
    p = T.softmax(Tensor([1.0, 2.0, 3.0]), mask=np.array([True, False, True])).data
    assert p[1] == 0.0
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DegenerateInputError):
        T.softmax(Tensor([1.0, 2.0]), mask=np.array([False, False]))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=30))
def test_softmax_is_probability_vector(logits):
    p = T.softmax(Tensor(logits)).data
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) < 1e-9


# dropout


def test_dropout_identity_cases(rng):
    x = Tensor(rng.standard_normal(10))
    np.testing.assert_array_equal(T.dropout(x, 0.0, True, rng).data, x.data)
    np.testing.assert_array_equal(T.dropout(x, 0.7, False, rng).data, x.data)


def test_dropout_rate_validated(rng):
    with pytest.raises(ParameterError):
        T.dropout(Tensor([1.0]), 1.0, True, rng)
    with pytest.raises(ParameterError):
        T.dropout(Tensor([1.0]), -0.1, True, rng)


def test_dropout_preserves_expectation():
    rng = np.random.default_rng(7)
    x = Tensor(np.full(10_000, 2.0))
    out = T.dropout(x, 0.5, True, rng).data
    assert set(np.unique(out)) <= {0.0, 4.0}
    assert abs(out.mean() - 2.0) / 2.0 < 0.02


# gradient checks per op


@pytest.mark.parametrize("seed", range(3))
def test_op_gradients(seed):
    rng = np.random.default_rng(seed)
    cases = op_gradient_cases(rng)
    errors = {name: gradcheck(fn, params) for name, (fn, params) in cases.items()}
    bad = {k: v for k, v in errors.items() if v >= TOL}
    assert not bad, bad


def test_gradcheck_detects_wrong_gradient():
    """The oracle itself must flag a deliberately broken backward."""
    x = Tensor([0.3, -0.2], requires_grad=True)

    def broken():
        out = Tensor._make(x.data**2, (x,), None)

        def back(g):
            x.grad += g * x.data  # missing factor 2

        out._backward = back
        return out.sum()

    assert gradcheck(broken, [x]) > 0.1


# lstm specifics


def test_lstm_cell_shape_checks(rng):
    fw = lstm_weights(rng, 3, 2)
    with pytest.raises(DimensionError):
        T.lstm_cell(Tensor(np.zeros(4)), Tensor(np.zeros(2)), Tensor(np.zeros(2)), fw)


def test_scan_masked_steps_freeze_state(rng):
    fw, bw = lstm_weights(rng, 3, 2), lstm_weights(rng, 3, 2)
    seq = rng.standard_normal((1, 5, 3))
    short = T.bidirectional_scan(Tensor(seq[:, :3]), fw, bw).data
    padded = seq.copy()
    padded[:, 3:] = 99.0
    full = T.bidirectional_scan(Tensor(padded), fw, bw, np.array([[True] * 3 + [False] * 2])).data
    np.testing.assert_allclose(full[:, :3], short, atol=1e-12)


def test_scan_reverse_symmetry(rng):
    """Swapping weights and reversing the input mirrors the two halves."""
    fw, bw = lstm_weights(rng, 3, 2), lstm_weights(rng, 3, 2)
    seq = rng.standard_normal((4, 3))
    out = T.bidirectional_scan(Tensor(seq), fw, bw).data
    rev = T.bidirectional_scan(Tensor(seq[::-1].copy()), bw, fw).data
    np.testing.assert_allclose(out[:, :2], rev[::-1, 2:], atol=1e-12)
    np.testing.assert_allclose(out[:, 2:], rev[::-1, :2], atol=1e-12)


# adam


def test_adam_hand_computed_two_steps():
    p = np.array([1.0])
    state = AdamState(learning_rate=0.1)
    adam_step([p], [np.array([0.5])], state)
    assert state.step == 1
    assert state.first_moment[0][0] == pytest.approx(0.05, abs=1e-15)
    assert state.second_moment[0][0] == pytest.approx(0.00025, abs=1e-15)
    assert p[0] == pytest.approx(0.900000002, abs=1e-12)
    adam_step([p], [np.array([0.2])], state)
    assert state.first_moment[0][0] == pytest.approx(0.065, abs=1e-15)
    assert state.second_moment[0][0] == pytest.approx(0.00028975, abs=1e-15)
    assert p[0] == pytest.approx(0.8101424839029282, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=5), st.integers(1, 20))
def test_adam_zero_gradient_from_rest_keeps_params(values, steps):
    p = np.array(values)
    before = p.copy()
    state = AdamState()
    for _ in range(steps):
        adam_step([p], [np.zeros_like(p)], state)
    np.testing.assert_array_equal(p, before)


def test_adam_zero_gradient_decays_moments():
    p = np.array([1.0])
    state = AdamState()
    adam_step([p], [np.array([1.0])], state)
    m, v = state.first_moment[0].copy(), state.second_moment[0].copy()
    adam_step([p], [np.zeros(1)], state)
    assert state.first_moment[0][0] == pytest.approx(0.9 * m[0])
    assert state.second_moment[0][0] == pytest.approx(0.999 * v[0])


def test_adam_constant_gradient_limit():
    p = np.array([0.0, 0.0])
    state = AdamState(learning_rate=0.01)
    for _ in range(2000):
        prev = p.copy()
        adam_step([p], [np.array([3.0, -0.2])], state)
    np.testing.assert_allclose(p - prev, [-0.01, 0.01], rtol=1e-6)


def test_adam_shape_mismatch():
    with pytest.raises(DimensionError):
        adam_step([np.zeros(2)], [np.zeros(3)], AdamState())


def test_adam_wrapper_determinism():
    def run():
        rng = np.random.default_rng(11)
        w = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
        x = Tensor(rng.standard_normal((5, 3)))
        opt = Adam([w], lr=0.05)
        for _ in range(10):
            opt.zero_grad()
            (T.matmul(x, w).tanh() ** 2).mean().backward()
            opt.step()
        return w.data

    np.testing.assert_array_equal(run(), run())
