"""Tensor ops: forward values against hand oracles, gradients against
central finite differences, and the bookkeeping contracts (tapes, double
backward, kink monitoring)."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esgnn import autodiff as ad
from esgnn.autodiff import (
    KinkMonitor,
    Tape,
    Tensor,
    backward,
    concat,
    gather_rows,
    matmul,
    reduce_max_over_set,
    reduce_sum,
    relu,
    reshape,
    segment_max,
    segment_sum,
    softmax_cross_entropy,
    softmax_heads,
    sqrt,
)
from esgnn.errors import (
    ConfigurationError,
    ContractError,
    DimensionError,
    DomainError,
    EmptySetError,
)
from helpers import cross_entropy_oracle, finite_diff_grad, max_rel_err

# -log(e^1 / (e^1 + e^2 + e^3)), frozen from a 50-digit evaluation
CE_123_TARGET0 = 2.40760596444438


def grad_of(build, *arrays):
    """Run build(tensors...) under a tape, backward, return the grads."""
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    with Tape() as tape:
        loss = build(*tensors)
    backward(loss, tape)
    return [t.grad for t in tensors]


# ---------------------------------------------------------------- forward


def test_matmul_identity():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = matmul(Tensor(np.eye(2)), Tensor(a))
    assert np.array_equal(out.data, a)


def test_matmul_hand_expansion():
    # [1,2] x [[3],[4]] = 1*3 + 2*4
    out = matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
    assert out.data.shape == (1, 1)
    assert out.data[0, 0] == 11.0


def test_matmul_zero_annihilates():
    rng = np.random.default_rng(0)
    out = matmul(Tensor(np.zeros((2, 3))), Tensor(rng.normal(size=(3, 4))))
    assert out.data.shape == (2, 4)
    assert np.all(out.data == 0.0)


def test_matmul_rejects_non_2d():
    with pytest.raises(DimensionError):
        matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 2))))


def test_relu_definition():
    out = relu(Tensor([[-1.0, 2.0]]))
    assert np.array_equal(out.data, [[0.0, 2.0]])


def test_sqrt_negative_rejected():
    with pytest.raises(DomainError):
        sqrt(Tensor([-1.0]))


def test_concat_empty_rejected():
    with pytest.raises(EmptySetError):
        concat([])


def test_reduce_max_over_set_singleton():
    row = np.array([[3.0, -1.0, 2.0]])
    assert np.array_equal(reduce_max_over_set(Tensor(row)).data, row[0])


def test_reduce_max_over_set_per_dimension():
    out = reduce_max_over_set(Tensor([[1.0, 5.0], [3.0, 2.0]]))
    assert np.array_equal(out.data, [3.0, 5.0])


def test_reduce_max_over_set_empty_rejected():
    with pytest.raises(EmptySetError):
        reduce_max_over_set(Tensor(np.zeros((0, 3))))


def test_segment_max_empty_segment_gets_default():
    vals = Tensor([[1.0], [2.0]])
    out = segment_max(vals, np.array([0, 0]), 2, default=-7.0)
    assert out.data[1, 0] == -7.0


def test_segment_max_out_of_range_segment():
    with pytest.raises(IndexError):
        segment_max(Tensor([[1.0]]), np.array([1]), 1)


def test_softmax_heads_rejects_indivisible():
    with pytest.raises(ConfigurationError):
        softmax_heads(Tensor(np.ones((2, 5))), heads=2)


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 4), st.integers(1, 5))
@settings(max_examples=60, deadline=None)
def test_softmax_heads_rows_sum_to_one(seed, heads, slice_width):
    rng = np.random.default_rng(seed)
    a = rng.normal(scale=5.0, size=(3, heads * slice_width))
    s = softmax_heads(Tensor(a), heads).data.reshape(3, heads, slice_width)
    np.testing.assert_allclose(s.sum(axis=2), 1.0, atol=1e-12, rtol=0)
    assert s.min() >= 0.0


def test_cross_entropy_uniform_eight_classes():
    loss = softmax_cross_entropy(Tensor(np.zeros((4, 8))), np.zeros(4, dtype=int))
    np.testing.assert_allclose(loss.data, np.log(8.0), rtol=0, atol=1e-15)


def test_cross_entropy_saturated_correct_class():
    logits = np.zeros((1, 5))
    logits[0, 2] = 1000.0
    loss = softmax_cross_entropy(Tensor(logits), [2])
    assert float(loss.data) < 1e-12


def test_cross_entropy_frozen_value():
    loss = softmax_cross_entropy(Tensor([[1.0, 2.0, 3.0]]), [0])
    np.testing.assert_allclose(float(loss.data), CE_123_TARGET0, rtol=0, atol=1e-14)


def test_cross_entropy_weighted_matches_hand_formula():
    logits = np.array([[0.3, -0.4, 0.1], [0.2, 0.0, -0.5]])
    targets = [0, 2]
    weights = np.array([2.0, 1.0, 1.0])
    loss = softmax_cross_entropy(Tensor(logits), targets, weights)
    expected = cross_entropy_oracle(logits, targets, weights)
    np.testing.assert_allclose(float(loss.data), expected, rtol=1e-14)


def test_cross_entropy_contract_errors():
    with pytest.raises(ContractError):
        softmax_cross_entropy(Tensor(np.zeros((0, 3))), [])
    with pytest.raises(IndexError):
        softmax_cross_entropy(Tensor(np.zeros((1, 3))), [3])
    with pytest.raises(DimensionError):
        softmax_cross_entropy(Tensor(np.zeros((1, 3))), [0], weights=np.ones(4))


# --------------------------------------------------------------- backward


def test_grad_of_sum_is_ones():
    (g,) = grad_of(lambda x: reduce_sum(x), np.arange(6, dtype=float).reshape(2, 3))
    assert np.array_equal(g, np.ones((2, 3)))


def test_grad_of_sum_of_squares():
    (g,) = grad_of(lambda x: reduce_sum(ad.mul(x, x)), np.array([1.0, -2.0]))
    assert np.array_equal(g, [2.0, -4.0])


def test_grad_of_max_rows_routes_to_winners():
    # loss = sum over columns of the per-column max
    (g,) = grad_of(
        lambda x: reduce_sum(reduce_max_over_set(x)),
        np.array([[1.0, 5.0], [3.0, 2.0]]),
    )
    assert np.array_equal(g, [[0.0, 1.0], [1.0, 0.0]])


def test_segment_max_tie_routes_to_lowest_row():
    (g,) = grad_of(
        lambda x: reduce_sum(segment_max(x, np.array([0, 0]), 1)),
        np.array([[2.0], [2.0]]),
    )
    assert np.array_equal(g, [[1.0], [0.0]])


def test_segment_max_empty_segment_default_gets_no_grad():
    (g,) = grad_of(
        lambda x: reduce_sum(segment_max(x, np.array([0, 0]), 3, default=5.0)),
        np.array([[1.0], [2.0]]),
    )
    assert np.array_equal(g, [[0.0], [1.0]])


def test_add_broadcast_grad_unbroadcasts():
    def build(x, b):
        return reduce_sum(ad.add(x, b))

    gx, gb = grad_of(build, np.zeros((4, 3)), np.zeros(3))
    assert np.array_equal(gx, np.ones((4, 3)))
    assert np.array_equal(gb, np.full(3, 4.0))


def test_backward_requires_scalar_loss():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = ad.mul(x, 2.0)
    with pytest.raises(ContractError):
        backward(y, tape)


def test_grads_accumulate_across_backward_calls():
    """Running backward twice over the same tape doubles every gradient."""
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    with Tape() as tape:
        loss = reduce_sum(ad.mul(x, x))
    backward(loss, tape)
    once = x.grad.copy()
    backward(loss, tape)
    assert np.array_equal(x.grad, 2.0 * once)


def test_no_grad_outside_tape():
    x = Tensor(np.ones(2), requires_grad=True)
    loss = reduce_sum(ad.mul(x, x))  # no tape open
    with Tape() as tape:
        pass
    backward(loss, tape)
    assert x.grad is None


# ------------------------------------------------- finite-difference sweep

# Fixed mixing constants so plain sums do not hide the op's Jacobian (the
# row sums of a softmax are constant, for example).
_MIX_43 = np.linspace(-1.0, 1.3, 12).reshape(3, 4)
_MIX_45 = np.linspace(0.2, 2.0, 20).reshape(4, 5)
_MIX_38 = np.linspace(-0.7, 0.9, 24).reshape(3, 8)

# Each entry: name, builder(x tensor) -> scalar loss, input shape, and a
# post-draw tweak keeping the sample away from kinks where that matters.
_FD_CASES = [
    ("add", lambda x: reduce_sum(ad.add(x, 0.5)), (3, 4), None),
    ("sub", lambda x: reduce_sum(ad.sub(1.5, x)), (3, 4), None),
    ("mul", lambda x: reduce_sum(ad.mul(x, x)), (3, 4), None),
    ("matmul", lambda x: reduce_sum(matmul(x, _MIX_45)), (3, 4), None),
    ("relu", lambda x: reduce_sum(relu(x)), (3, 4), "away_from_zero"),
    ("sqrt", lambda x: reduce_sum(sqrt(x)), (3, 4), "positive"),
    ("reshape", lambda x: reduce_sum(ad.mul(reshape(x, (12,)), 2.0)), (3, 4), None),
    (
        "concat",
        lambda x: reduce_sum(ad.mul(concat([x, x], axis=1), _MIX_38)),
        (3, 4),
        None,
    ),
    ("gather", lambda x: reduce_sum(gather_rows(x, np.array([0, 2, 2]))), (3, 4), None),
    (
        "segment_sum",
        lambda x: reduce_sum(ad.mul(segment_sum(x, np.array([0, 1, 0]), 2), 1.5)),
        (3, 4),
        None,
    ),
    (
        "segment_max",
        lambda x: reduce_sum(segment_max(x, np.array([0, 1, 0]), 2)),
        (3, 4),
        "spread",
    ),
    ("softmax_heads", lambda x: reduce_sum(ad.mul(softmax_heads(x, 2), _MIX_43)), (3, 4), None),
    (
        "cross_entropy",
        lambda x: softmax_cross_entropy(x, np.array([1, 3, 0])),
        (3, 4),
        None,
    ),
    (
        "cross_entropy_weighted",
        lambda x: softmax_cross_entropy(
            x, np.array([1, 3, 0]), weights=np.array([2.0, 1.0, 0.5, 1.0])
        ),
        (3, 4),
        None,
    ),
]


@pytest.mark.parametrize("name,build,shape,tweak", _FD_CASES, ids=[c[0] for c in _FD_CASES])
def test_gradients_match_finite_differences(name, build, shape, tweak):
    """Analytic gradients agree with central differences at eps=1e-5 over
    100 random draws per op."""
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng([seed, 42])
        x = rng.normal(size=shape)
        if tweak == "positive":
            x = np.abs(x) + 0.5
        elif tweak == "away_from_zero":
            x = np.where(np.abs(x) < 0.05, x + 0.2, x)
        elif tweak == "spread":
            # keep per-segment maxima unambiguous under the probe step
            x += np.arange(x.size).reshape(shape) * 0.37

        (analytic,) = grad_of(build, x)
        fd = finite_diff_grad(lambda arr: float(build(Tensor(arr)).data), x)
        worst = max(worst, max_rel_err(analytic, fd))
    assert worst < 1e-4, f"{name}: max rel err {worst:.3e}"


def test_second_backward_through_composed_graph():
    """One tape, two backward passes: independent contexts, summed grads."""
    rng = np.random.default_rng(7)
    x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    w = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    with Tape() as tape:
        loss = softmax_cross_entropy(relu(matmul(x, w)), np.array([0, 1, 0, 1]))
    backward(loss, tape)
    gx, gw = x.grad.copy(), w.grad.copy()
    backward(loss, tape)
    np.testing.assert_array_equal(x.grad, 2.0 * gx)
    np.testing.assert_array_equal(w.grad, 2.0 * gw)


# ----------------------------------------------------------- kink monitor


def test_kink_monitor_sees_relu_margin():
    with KinkMonitor() as mon:
        relu(Tensor([[0.25, -3.0]]))
    assert mon.min_margin == 0.25


def test_kink_monitor_sees_max_pool_margin():
    with KinkMonitor() as mon:
        segment_max(Tensor([[1.0], [4.0], [2.5]]), np.array([0, 0, 0]), 1)
    assert mon.min_margin == 1.5


def test_kink_monitor_nesting_restores_outer():
    with KinkMonitor() as outer:
        with KinkMonitor() as inner:
            relu(Tensor([0.5]))
        relu(Tensor([0.125]))
    assert inner.min_margin == 0.5
    assert outer.min_margin == 0.125
