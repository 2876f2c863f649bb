import zlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rod import autodiff as ad
from rod.autodiff import Tensor, backward, grad_check

from oracles import joint_loss_grad_error, teacher_loss_grad_error

TOL = 1e-4
N_POINTS = 20


def _project(t: Tensor, seed: int) -> Tensor:
    """Random linear functional so every output entry carries a distinct weight."""
    W = np.random.default_rng(seed).standard_normal(t.shape)
    return ad.sum(ad.mul(t, W))


def _away_from(x, kink=0.0, margin=1e-3):
    return np.where(np.abs(x - kink) < margin, x + 3 * margin, x)


# each entry: (name, input shape, scalar-producing function of the input tensor)
C = np.random.default_rng(99).standard_normal((3, 4))
B43 = np.random.default_rng(98).standard_normal((4, 3))
ROW = np.random.default_rng(97).standard_normal((1, 4))

UNARY = [
    ("matmul_left", (5, 4), lambda x: ad.matmul(x, B43)),
    ("matmul_right", (4, 3), lambda x: ad.matmul(C, x)),
    ("add_bias", (5, 4), lambda x: ad.add(x, ROW)),
    ("add_bias_grad", (1, 4), lambda x: ad.add(np.ones((5, 4)), x)),
    ("sub", (5, 4), lambda x: ad.sub(ROW, x)),
    ("mul", (5, 4), lambda x: ad.mul(x, x)),
    ("div_num", (5, 4), lambda x: ad.div(x, 2.0 + np.abs(ROW))),
    ("div_den", (5, 4), lambda x: ad.div(1.0, ad.add(ad.mul(x, x), 1.0))),
    ("scale_rows_a", (5, 4), lambda x: ad.scale_rows(x, np.arange(1.0, 6.0)[:, None])),
    ("scale_rows_s", (5, 1), lambda x: ad.scale_rows(np.ones((5, 4)) * ROW, x)),
    ("transpose", (5, 4), lambda x: ad.transpose(x)),
    ("sigmoid", (5, 4), ad.sigmoid),
    ("relu", (5, 4), ad.relu),
    ("exp", (5, 4), ad.exp),
    ("log", (5, 4), lambda x: ad.log(ad.add(ad.mul(x, x), 0.5))),
    ("clip", (5, 4), lambda x: ad.clip(x, -0.5, 0.5)),
    ("squared_difference_a", (5, 4), lambda x: ad.squared_difference(x, ROW)),
    ("squared_difference_b", (1, 4), lambda x: ad.squared_difference(np.ones((5, 4)), x)),
    ("sum", (5, 4), ad.sum),
    ("mean", (5, 4), ad.mean),
    ("sum_rows", (5, 4), ad.sum_rows),
    ("frobenius_norm", (5, 4), ad.frobenius_norm),
    ("softmax_rows", (5, 4), ad.softmax_rows),
    ("normalize_rows", (5, 4), ad.normalize_rows),
    ("dropout_eval", (5, 4), lambda x: ad.dropout(x, 0.5, training=False)),
    ("dropout_fixed_mask", (5, 4),
     lambda x: ad.dropout(x, 0.3, np.random.default_rng(5), training=True)),
    ("select_rows", (5, 4), lambda x: ad.select_rows(x, [4, 0, 0, 2])),
    ("select_entries", (5, 4), lambda x: ad.select_entries(x, [0, 1, 1, 4], [3, 2, 2, 0])),
    ("euclidean_z", (5, 4), lambda x: ad.euclidean_distances(x, C)),
    ("euclidean_c", (3, 4), lambda x: ad.euclidean_distances(np.ones((5, 4)), x)),
]

@pytest.mark.parametrize("name, shape, op", UNARY, ids=[u[0] for u in UNARY])
def test_primitive_gradients(name, shape, op):
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    worst = 0.0
    for point in range(N_POINTS):
        x = rng.standard_normal(shape)
        if name == "relu":
            x = _away_from(x)
        if name == "clip":
            x = _away_from(_away_from(x, -0.5), 0.5)
        worst = max(worst, grad_check(lambda t: _project(op(t), point), x))
    assert worst < TOL


@pytest.mark.parametrize("task", ["classify", "link", "cluster"])
def test_joint_loss_gradients(task):
    for seed in range(3):
        assert joint_loss_grad_error(task, seed) < TOL
        assert teacher_loss_grad_error(task, seed) < TOL


def test_forward_examples():
    assert ad.sigmoid(np.zeros((1, 1))).item() == 0.5
    np.testing.assert_array_equal(ad.softmax_rows(np.zeros((1, 2))).value, [[0.5, 0.5]])
    np.testing.assert_array_equal(ad.matmul([[1, 2], [3, 4]], [[1], [1]]).value, [[3], [7]])


def test_backward_examples():
    x = Tensor(np.random.default_rng(0).standard_normal((3, 4)), requires_grad=True)
    backward(ad.sum(x))
    assert np.array_equal(x.grad, np.ones((3, 4)))
    y = Tensor([[3.0, 4.0]], requires_grad=True)
    n = ad.frobenius_norm(y)
    backward(ad.mul(n, n))
    np.testing.assert_allclose(y.grad, [[6.0, 8.0]], atol=1e-12)


def test_fan_out_sums_exactly():
    x = Tensor([[1.5, -2.0]], requires_grad=True)
    backward(ad.sum(ad.add(x, x)))
    assert np.array_equal(x.grad, [[2.0, 2.0]])


def test_grads_reset_between_passes():
    x = Tensor([[1.0, 2.0]], requires_grad=True)
    backward(ad.sum(ad.mul(x, 3.0)))
    backward(ad.sum(ad.mul(x, 3.0)))
    assert np.array_equal(x.grad, [[3.0, 3.0]])


def test_backward_rejects_non_scalar():
    with pytest.raises(ValueError):
        backward(Tensor(np.ones((2, 2)), requires_grad=True))


def test_shape_mismatch_errors():
    with pytest.raises(ValueError):
        ad.matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ValueError):
        ad.add(np.ones((2, 3)), np.ones((3, 2)))
    with pytest.raises(ValueError):
        ad.dropout(np.ones((2, 2)), 1.0, np.random.default_rng(0))


def test_grad_check_examples():
    x = np.random.default_rng(0).standard_normal((4, 3))
    assert grad_check(ad.sum, x) < 1e-10
    assert grad_check(lambda t: ad.sum(ad.sigmoid(t)), np.zeros((2, 2))) < 1e-6


def test_dropout_identity_at_rate_zero():
    x = np.random.default_rng(0).standard_normal((4, 4))
    out = ad.dropout(x, 0.0, np.random.default_rng(1), training=True)
    assert np.array_equal(out.value, x)


def test_dropout_expectation():
    rate, draws = 0.8, 10_000
    rng = np.random.default_rng(3)
    x = np.ones((1, draws))
    out = ad.dropout(x, rate, rng).value
    kept = int((out > 0).sum())
    # kept ~ Binomial(draws, 1 - rate); mean output = kept / (draws (1 - rate))
    sd = np.sqrt(draws * rate * (1 - rate))
    assert abs(kept - draws * (1 - rate)) < 3 * sd
    assert np.allclose(out[out > 0], 1.0 / (1 - rate))
    assert abs(out.mean() - 1.0) < 3 * sd / (draws * (1 - rate))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_softmax_rows_are_distributions(n, q, seed):
    x = np.random.default_rng(seed).standard_normal((n, q)) * 30
    y = ad.softmax_rows(x).value
    assert np.all(y > 0)
    np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-12)


def test_adam_zero_grad_and_first_step():
    p = [np.array([[1.0, -2.0]])]
    state = ad.AdamState(lr=0.1)
    out, state = ad.adam_step(p, [np.zeros((1, 2))], state)
    assert np.array_equal(out[0], p[0]) and state.step == 1
    out, state = ad.adam_step([np.array([[1.0]])], [np.array([[1.0]])], ad.AdamState(lr=0.1))
    assert out[0][0, 0] == pytest.approx(0.9, abs=1e-6)
    with pytest.raises(ValueError):
        ad.adam_step([np.ones((2, 2))], [np.ones((1, 2))], ad.AdamState())


def test_adam_trajectories_repeat_bitwise():
    def run():
        w = Tensor(np.random.default_rng(7).standard_normal((3, 2)), requires_grad=True)
        opt = ad.Adam([w], lr=0.05, weight_decay=1e-3)
        target = np.arange(6.0).reshape(3, 2)
        for _ in range(25):
            backward(ad.sum(ad.squared_difference(w, target)))
            opt.step()
        return w.value

    assert np.array_equal(run(), run())
