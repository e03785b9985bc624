import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpa import ndtensor as nt
from gpa.ndtensor import Tensor
from gpa.ndtensor import tensor as core
from oracles import conv1d_loops, conv1d_transpose_loops, lstm_step, numeric_grad, rel_error

GRAD_TOL = 1e-4


def _pos(rng, *shape):
    return rng.uniform(0.5, 2.0, shape)


def _away_from_zero(rng, *shape):
    return rng.uniform(0.2, 1.0, shape) * rng.choice([-1.0, 1.0], shape)


def _fixed_state(rng, rows, cols):
    return nt.PowerIterState.random(rng, rows, cols)


# name -> (inputs(rng), fn(*tensors))
PRIMITIVES = {
    "add_broadcast": (lambda r: [r.normal(size=(3, 4)), r.normal(size=(4,))], lambda a, b: a + b),
    "sub": (lambda r: [r.normal(size=(2, 3)), r.normal(size=(2, 1))], lambda a, b: a - b),
    "mul": (lambda r: [r.normal(size=(3, 4)), r.normal(size=(3, 4))], lambda a, b: a * b),
    "div": (lambda r: [r.normal(size=(3, 4)), _away_from_zero(r, 3, 4)], lambda a, b: a / b),
    "neg": (lambda r: [r.normal(size=(5,))], lambda a: -a),
    "power_cube": (lambda r: [r.normal(size=(4,))], lambda a: a**3),
    "power_square": (lambda r: [r.normal(size=(4,))], lambda a: a**2),
    "power_half": (lambda r: [_pos(r, 4)], lambda a: a**0.5),
    "matmul": (lambda r: [r.normal(size=(3, 4)), r.normal(size=(4, 2))], lambda a, b: a @ b),
    "matmul_batched": (lambda r: [r.normal(size=(2, 3, 4)), r.normal(size=(4, 5))], lambda a, b: a @ b),
    "sum_axis": (lambda r: [r.normal(size=(3, 4, 2))], lambda a: nt.tsum(a, axis=1)),
    "mean_keepdims": (lambda r: [r.normal(size=(3, 4))], lambda a: nt.mean(a, axis=-1, keepdims=True)),
    "exp": (lambda r: [r.normal(size=(6,))], nt.exp),
    "log": (lambda r: [_pos(r, 6)], nt.log),
    "sqrt": (lambda r: [_pos(r, 6)], nt.sqrt),
    "tanh": (lambda r: [r.normal(size=(6,))], nt.tanh),
    "sigmoid": (lambda r: [r.normal(size=(6,)) * 4], nt.sigmoid),
    "softplus": (lambda r: [r.normal(size=(6,)) * 4], nt.softplus),
    "relu": (lambda r: [_away_from_zero(r, 6)], nt.relu),
    "abs": (lambda r: [_away_from_zero(r, 6)], nt.tabs),
    "reshape": (lambda r: [r.normal(size=(2, 6))], lambda a: nt.reshape(a, (3, 4))),
    "swapaxes": (lambda r: [r.normal(size=(2, 3, 4))], lambda a: a.swapaxes(0, 2)),
    "getitem_slice": (lambda r: [r.normal(size=(4, 5))], lambda a: a[1:3, ::2]),
    "getitem_fancy": (lambda r: [r.normal(size=(5,))], lambda a: a[np.array([0, 2, 2, 4])]),
    "concat": (lambda r: [r.normal(size=(2, 3)), r.normal(size=(2, 1))], lambda a, b: nt.concat([a, b], axis=1)),
    "pad1d": (lambda r: [r.normal(size=(2, 5))], lambda a: core.pad1d(a, 2, 1)),
    "unfold1d": (lambda r: [r.normal(size=(2, 9))], lambda a: core.unfold1d(a, 3, 2)),
    "fold1d": (lambda r: [r.normal(size=(2, 3, 4))], lambda a: core.fold1d(a, 2, 9)),
    "conv1d": (
        lambda r: [r.normal(size=(2, 3, 8)), r.normal(size=(4, 3, 4)), r.normal(size=(4,))],
        lambda x, w, b: nt.conv1d(x, w, b, stride=2, padding=1),
    ),
    "conv1d_transpose": (
        lambda r: [r.normal(size=(2, 3, 5)), r.normal(size=(3, 2, 4)), r.normal(size=(2,))],
        lambda x, w, b: nt.conv1d_transpose(x, w, b, stride=2, padding=1),
    ),
    "linear": (
        lambda r: [r.normal(size=(3, 4)), r.normal(size=(2, 4)), r.normal(size=(2,))],
        nt.linear,
    ),
    "lstm_cell": (
        lambda r: [r.normal(size=(2, 3)), r.normal(size=(2, 4)), r.normal(size=(2, 4)),
                   r.normal(size=(16, 3)), r.normal(size=(16, 4)), r.normal(size=(16,)), r.normal(size=(16,))],
        lambda *a: nt.concat(list(nt.lstm_cell(*a)), axis=1),
    ),
    "l2_norm": (lambda r: [r.normal(size=(3, 4))], nt.l2_norm),
    "global_norm": (lambda r: [r.normal(size=(3,)), r.normal(size=(2, 2))], lambda a, b: nt.global_norm([a, b])),
    "bce_loss": (lambda r: [r.uniform(0.1, 0.9, 6), r.uniform(0, 1, 6)], nt.bce_loss),
    "bce_with_logits": (lambda r: [r.normal(size=(6,)) * 3, r.uniform(0, 1, 6)], nt.bce_with_logits),
    "spectral_normalize": (
        lambda r: [r.normal(size=(4, 2, 3))],
        lambda w: nt.spectral_normalize(w, _fixed_state(np.random.default_rng(0), 4, 6), power_iters=0)[0],
    ),
}

TRIALS_PER_PRIMITIVE = 3


def _check_gradient(fn, arrays, weight_seed):
    out_shape = fn(*[Tensor(a) for a in arrays]).shape
    weights = np.random.default_rng(weight_seed).normal(size=out_shape)

    def scalar(*arrs):
        return float(np.sum(fn(*[Tensor(a) for a in arrs]).data * weights))

    ts = [Tensor(a, requires_grad=True) for a in arrays]
    loss = nt.tsum(fn(*ts) * Tensor(weights))
    analytic = [g.data for g in nt.grad(loss, ts)]
    return rel_error(analytic, numeric_grad(scalar, arrays))


@pytest.mark.parametrize("trial", range(TRIALS_PER_PRIMITIVE))
@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradient_matches_finite_differences(name, trial):
    make, fn = PRIMITIVES[name]
    rng = np.random.default_rng([zlib.crc32(name.encode()), trial])
    assert _check_gradient(fn, make(rng), trial) < GRAD_TOL


def test_at_least_100_gradient_trials():
    assert len(PRIMITIVES) * TRIALS_PER_PRIMITIVE >= 100


def _three_layer(x, w1, b1, w2, b2, w3, b3):
    h = nt.tanh(nt.linear(x, w1, b1))
    h = nt.softplus(nt.linear(h, w2, b2))
    return nt.bce_with_logits(nt.reshape(nt.linear(h, w3, b3), (x.shape[0],)), Tensor(np.array([1.0, 0.0, 1.0])))


@pytest.mark.parametrize("seed", range(5))
def test_three_layer_network_gradient(seed):
    rng = np.random.default_rng(seed)
    arrays = [rng.normal(size=(3, 5)), rng.normal(size=(6, 5)), rng.normal(size=6),
              rng.normal(size=(4, 6)), rng.normal(size=4), rng.normal(size=(1, 4)), rng.normal(size=1)]
    assert _check_gradient(_three_layer, arrays, seed) < GRAD_TOL


def _conv_net(x, w1, b1, w2, b2):
    h = nt.tanh(nt.conv1d(x, w1, b1, stride=2, padding=1))
    h = nt.conv1d_transpose(h, w2, b2, stride=2, padding=1)
    return nt.mean(h * h)


def test_conv_stack_gradient():
    rng = np.random.default_rng(7)
    arrays = [rng.normal(size=(2, 2, 8)), rng.normal(size=(3, 2, 4)), rng.normal(size=3),
              rng.normal(size=(3, 2, 4)), rng.normal(size=2)]
    assert _check_gradient(_conv_net, arrays, 0) < GRAD_TOL


# -- second order --------------------------------------------------------------


def _small_net_loss(params, x, y):
    w1, b1, w2, b2 = params
    h = nt.tanh(nt.linear(x, w1, b1))
    z = nt.reshape(nt.linear(h, w2, b2), (x.shape[0],))
    return nt.bce_with_logits(z, Tensor(y))


@pytest.mark.parametrize("seed", range(5))
def test_grad_of_gradnorm_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    shapes = [(16, 8), (16,), (1, 16), (1,)]  # 161 parameters
    arrays = [rng.normal(size=s) * 0.5 for s in shapes]
    x = rng.normal(size=(6, 8))
    y = rng.integers(0, 2, 6).astype(float)

    def gradnorm(*arrs):
        ps = [Tensor(a, requires_grad=True) for a in arrs]
        return float(nt.global_norm(nt.grad(_small_net_loss(ps, x, y), ps)).data)

    ps = [Tensor(a, requires_grad=True) for a in arrays]
    norm, analytic = nt.grad_of_gradnorm(_small_net_loss(ps, x, y), ps)
    assert norm == pytest.approx(gradnorm(*arrays), rel=1e-12)
    numeric = numeric_grad(gradnorm, arrays, step=1e-5)
    assert rel_error([g.data for g in analytic], numeric) < 1e-3


def test_finite_difference_penalty_agrees_with_exact():
    rng = np.random.default_rng(3)
    arrays = [rng.normal(size=s) * 0.5 for s in [(8, 4), (8,), (1, 8), (1,)]]
    x, y = rng.normal(size=(5, 4)), np.array([1.0, 0, 1, 0, 1])
    ps = [Tensor(a, requires_grad=True) for a in arrays]
    norm, exact = nt.grad_of_gradnorm(_small_net_loss(ps, x, y), ps)
    fd_norm, approx = nt.grad_of_gradnorm_fd(lambda p: _small_net_loss(p, x, y), arrays)
    assert fd_norm == pytest.approx(norm, rel=1e-12)
    assert rel_error([g.data for g in exact], approx) < 1e-5


@pytest.mark.parametrize("seed", range(10))
def test_grad_of_gradnorm_quadratic_closed_form(seed):
    # L = 0.5 t'At + b't has gradient g = At + b and d||g||/dt = A g / ||g||.
    rng = np.random.default_rng(seed)
    n = 7
    m = rng.normal(size=(n, n))
    a = m @ m.T + np.eye(n)
    b = rng.normal(size=(n, 1))
    theta = rng.normal(size=(n, 1))
    t = Tensor(theta, requires_grad=True)
    loss = 0.5 * nt.tsum(t * (Tensor(a) @ t)) + nt.tsum(Tensor(b) * t)
    norm, (dt,) = nt.grad_of_gradnorm(loss, [t])
    g = a @ theta + b
    expected = a @ g / np.linalg.norm(g)
    assert norm == pytest.approx(np.linalg.norm(g), rel=1e-12)
    assert np.max(np.abs(dt.data - expected)) <= 1e-9 * np.max(np.abs(expected))


def test_gradnorm_zero_gradient_gives_zeros():
    t = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    loss = nt.tsum(t * Tensor(np.zeros(2)))
    norm, (g,) = nt.grad_of_gradnorm(loss, [t])
    assert norm == 0.0
    assert np.array_equal(g.data, np.zeros(2))


def test_l2_norm_gradient_at_zero_is_zero():
    t = Tensor(np.zeros(3), requires_grad=True)
    (g,) = nt.grad(nt.l2_norm(t), [t])
    assert np.array_equal(g.data, np.zeros(3))


# -- engine behaviour ----------------------------------------------------------


def test_disconnected_parameter_gets_zero_gradient():
    a = Tensor(np.ones(3), requires_grad=True)
    b = Tensor(np.ones((2, 2)), requires_grad=True)
    ga, gb = nt.grad(nt.tsum(a * 2.0), [a, b])
    assert np.array_equal(ga.data, np.full(3, 2.0))
    assert np.array_equal(gb.data, np.zeros((2, 2)))


def test_reused_node_accumulates():
    a = Tensor(np.array(3.0), requires_grad=True)
    (g,) = nt.grad(a * a + a, [a])
    assert g.data == 7.0


def test_no_grad_records_nothing():
    a = Tensor(np.ones(2), requires_grad=True)
    with nt.no_grad():
        b = a * 2.0
        assert not nt.tensor.is_recording()
    assert not b.requires_grad
    assert b.parents == ()


def test_grad_requires_scalar():
    a = Tensor(np.ones(2), requires_grad=True)
    with pytest.raises(nt.ShapeError):
        nt.grad(a * 2.0, [a])


def test_matmul_shape_error_names_shapes():
    with pytest.raises(nt.ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((4, 5)))


def test_float32_mode_keeps_dtype():
    nt.set_default_dtype(np.float32)
    try:
        t = Tensor([1.0, 2.0], requires_grad=True)
        assert t.dtype == np.float32
        (g,) = nt.grad(nt.tsum(nt.tanh(t)), [t])
        assert g.data.dtype == np.float32
    finally:
        nt.set_default_dtype(np.float64)
    assert Tensor([1.0]).dtype == np.float64


def test_sigmoid_is_stable_for_large_logits():
    z = Tensor(np.array([-800.0, 0.0, 800.0]))
    assert np.array_equal(nt.sigmoid(z).data, np.array([0.0, 0.5, 1.0]))
    loss = nt.bce_with_logits(Tensor(np.array([800.0])), 0.0)
    assert loss.data == pytest.approx(800.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8), st.floats(0, 1))
def test_bce_with_logits_matches_probability_form(logits, target):
    z = np.array(logits)
    p = 1 / (1 + np.exp(-z))
    # log(1 - p) loses about eps / (1 - p) of relative accuracy, so the oracle itself is only good here
    if np.any((p <= 1e-6) | (p >= 1 - 1e-6)):
        return
    a = nt.bce_with_logits(Tensor(z), target).data
    b = nt.bce_loss(Tensor(p), target).data
    assert a == pytest.approx(b, rel=1e-8, abs=1e-10)


# -- layers against loop oracles ----------------------------------------------------


@pytest.mark.parametrize("stride,padding", [(1, 0), (2, 1), (3, 2)])
def test_conv1d_matches_loops(stride, padding):
    rng = np.random.default_rng(stride)
    x, w, b = rng.normal(size=(2, 3, 11)), rng.normal(size=(4, 3, 4)), rng.normal(size=4)
    got = nt.conv1d(Tensor(x), Tensor(w), Tensor(b), stride, padding).data
    np.testing.assert_allclose(got, conv1d_loops(x, w, b, stride, padding), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("stride,padding", [(1, 0), (2, 1), (3, 1)])
def test_conv1d_transpose_matches_loops(stride, padding):
    rng = np.random.default_rng(stride + 10)
    x, w, b = rng.normal(size=(2, 3, 6)), rng.normal(size=(3, 2, 4)), rng.normal(size=2)
    got = nt.conv1d_transpose(Tensor(x), Tensor(w), Tensor(b), stride, padding).data
    np.testing.assert_allclose(got, conv1d_transpose_loops(x, w, b, stride, padding), rtol=1e-12, atol=1e-12)


def test_conv_transpose_is_adjoint_of_conv():
    # <conv(x), y> == <x, conv_transpose(y)> with the same weights, no bias
    rng = np.random.default_rng(5)
    x, w = rng.normal(size=(1, 3, 16)), rng.normal(size=(5, 3, 4))
    y = rng.normal(size=(1, 5, nt.conv_out_len(16, 4, 2, 1)))
    lhs = np.sum(nt.conv1d(Tensor(x), Tensor(w), None, 2, 1).data * y)
    rhs = np.sum(x * nt.conv1d_transpose(Tensor(y), Tensor(w), None, 2, 1).data)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_lstm_cell_matches_reference():
    rng = np.random.default_rng(2)
    args = [rng.normal(size=s) for s in [(3, 5), (3, 4), (3, 4), (16, 5), (16, 4), (16,), (16,)]]
    h, c = nt.lstm_cell(*[Tensor(a) for a in args])
    h_ref, c_ref = lstm_step(*args)
    np.testing.assert_allclose(h.data, h_ref, rtol=1e-12)
    np.testing.assert_allclose(c.data, c_ref, rtol=1e-12)


def test_uniform_init_bounds():
    w = nt.uniform_init(np.random.default_rng(0), (200, 50), 25)
    assert np.abs(w).max() <= 0.2
    assert np.abs(w).max() > 0.19


# -- spectral normalization ------------------------------------------------------


def test_power_iteration_converges_to_top_singular_value():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(6, 2, 5))
    state = nt.PowerIterState.random(rng, 6, 10)
    normed, state = nt.spectral_normalize(Tensor(w), state, power_iters=200)
    sigma = np.linalg.svd(w.reshape(6, -1), compute_uv=False)[0]
    np.testing.assert_allclose(normed.data, w / sigma, rtol=1e-10)
    assert np.linalg.svd(normed.data.reshape(6, -1), compute_uv=False)[0] == pytest.approx(1.0, rel=1e-10)


def test_spectral_normalize_with_zero_iterations_keeps_state():
    rng = np.random.default_rng(1)
    state = nt.PowerIterState.random(rng, 3, 4)
    _, same = nt.spectral_normalize(Tensor(rng.normal(size=(3, 4))), state, power_iters=0)
    assert same is state


def test_spectral_normalize_zero_weight():
    state = nt.PowerIterState.random(np.random.default_rng(0), 2, 3)
    out, _ = nt.spectral_normalize(Tensor(np.zeros((2, 3))), state)
    assert np.array_equal(out.data, np.zeros((2, 3)))
