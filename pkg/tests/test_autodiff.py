import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dualsl.autodiff import (
    GRUCell, Parameter, Tensor, adam_update, apply_activation, backward,
    bernoulli_log_prob, concat, exp, finite_difference_check, getitem, log,
    log_softmax, masked_linear, matmul, mean, power, recording, relu, reshape,
    sigmoid, softmax, stack, tanh, transpose, tsum,
)
from dualsl.autodiff.optim import Adam, AdamConfig, clip_grad_norm, global_grad_norm
from dualsl.autodiff.tensor import _make
from dualsl.errors import ContractError, ShapeError, ValidationError


def _p(name, rng, shape, lo=-1.0, hi=1.0):
    return Parameter(name, rng.uniform(lo, hi, size=shape))


def _away_from_zero(rng, shape, gap=0.2):
    x = rng.uniform(gap, 1.5, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


# name -> builder(rng) returning (params, fn producing an output Tensor)
def _ops():
    def binary(op, lo=-1.0, hi=1.0, b_lo=None, b_hi=None):
        def build(rng):
            a = _p("a", rng, (3, 4), lo, hi)
            b = _p("b", rng, (4,), lo if b_lo is None else b_lo, hi if b_hi is None else b_hi)
            return [a, b], lambda: op(a, b)
        return build

    def unary(op, lo=-2.0, hi=2.0, values=None):
        def build(rng):
            a = Parameter("a", values(rng) if values else rng.uniform(lo, hi, size=(3, 4)))
            return [a], lambda: op(a)
        return build

    def mat(rng):
        a, b = _p("a", rng, (3, 4)), _p("b", rng, (4, 2))
        return [a, b], lambda: matmul(a, b)

    def masked(rng):
        x, w, bias = _p("x", rng, (3, 4)), _p("w", rng, (5, 4)), _p("bias", rng, (5,))
        mask = (rng.random((5, 4)) < 0.6).astype(float)
        return [x, w, bias], lambda: masked_linear(x, w, mask, bias)

    def index_basic(rng):
        a = _p("a", rng, (4, 5))
        return [a], lambda: getitem(a, (slice(1, 3), slice(None, None, 2)))

    def index_advanced(rng):
        a = _p("a", rng, (4, 5))
        rows = np.array([0, 2, 2, 3])
        return [a], lambda: getitem(a, (rows, np.array([1, 1, 4, 0])))

    def stacked(rng):
        a, b = _p("a", rng, (2, 3)), _p("b", rng, (2, 3))
        return [a, b], lambda: stack([a, b * b, a], axis=1)

    def concatenated(rng):
        a, b = _p("a", rng, (2, 3)), _p("b", rng, (2, 2))
        return [a, b], lambda: concat([a, b, a], axis=1)

    def bernoulli(rng):
        z = _p("z", rng, (3, 4), -3, 3)
        t = (rng.random((3, 4)) < 0.5).astype(float)
        return [z], lambda: bernoulli_log_prob(z, t)

    def gru(rng):
        cell = GRUCell(3, 4, rng, name="gru")
        x, h = _p("x", rng, (2, 3)), _p("h", rng, (2, 4))
        return cell.parameters() + [x, h], lambda: cell(x, h)

    return {
        "add": binary(lambda a, b: a + b),
        "sub": binary(lambda a, b: a - b),
        "mul": binary(lambda a, b: a * b),
        "div": binary(lambda a, b: a / b, b_lo=0.5, b_hi=2.0),
        "neg": unary(lambda a: -a),
        "power": unary(lambda a: power(a, 3)),
        "exp": unary(exp),
        "log": unary(log, 0.3, 3.0),
        "matmul": mat,
        "masked_linear": masked,
        "sum_axis": unary(lambda a: tsum(a, axis=1)),
        "mean": unary(lambda a: mean(a, axis=0, keepdims=True)),
        "reshape": unary(lambda a: reshape(a, (4, 3))),
        "transpose": unary(transpose),
        "getitem_basic": index_basic,
        "getitem_advanced": index_advanced,
        "stack": stacked,
        "concat": concatenated,
        "sigmoid": unary(sigmoid),
        "tanh": unary(tanh),
        "relu": unary(relu, values=lambda rng: _away_from_zero(rng, (3, 4))),
        "softmax": unary(lambda a: softmax(a, axis=1)),
        "log_softmax": unary(lambda a: log_softmax(a, axis=0)),
        "bernoulli_log_prob": bernoulli,
        "gru_step": gru,
    }


OPS = _ops()


def _weighted_loss(fn, rng):
    out = fn()
    weights = rng.normal(size=out.shape)
    return tsum(out * weights)


def _check_op(name, seed):
    rng = np.random.default_rng(seed)
    params, fn = OPS[name](rng)
    w_rng_seed = seed + 10_000
    loss = lambda: _weighted_loss(fn, np.random.default_rng(w_rng_seed))
    return finite_difference_check(loss, params, step=1e-5, tolerance=1e-4)


@pytest.mark.parametrize("name", sorted(OPS))
@settings(max_examples=100, deadline=None, derandomize=True)
@given(seed=st.integers(0, 2**31 - 1))
def test_op_gradients_match_finite_differences(name, seed):
    report = _check_op(name, seed)
    assert report.passed, report.flagged[:3]


def test_matmul_examples():
    b = Tensor([[1, 2], [3, 4]])
    assert np.array_equal(matmul(Tensor(np.eye(2)), b).values, b.values)
    assert np.array_equal(matmul(Tensor([[1, 0], [0, 0]]), Tensor([[5], [7]])).values,
                          [[5], [0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_gradient_tight():
    rng = np.random.default_rng(1)
    a, b = _p("a", rng, (3, 4)), _p("b", rng, (4, 2))
    rep = finite_difference_check(lambda: tsum(matmul(a, b)), [a], tolerance=1e-6)
    assert rep.passed


def test_activation_examples():
    assert apply_activation("sigmoid", Tensor(0.0)).item() == 0.5
    np.testing.assert_allclose(apply_activation("softmax", Tensor([0.0, 0.0, 0.0])).values,
                               [1 / 3] * 3, rtol=0, atol=1e-15)
    with pytest.raises(ShapeError):
        apply_activation("softmax", Tensor(np.zeros((2, 3))), axis=2)
    with pytest.raises(ShapeError):
        apply_activation("log_softmax", Tensor(np.zeros(3)), axis=-2)


def test_tanh_gradient_tight():
    rng = np.random.default_rng(2)
    a = _p("a", rng, (5,), -2, 2)
    assert finite_difference_check(lambda: tsum(tanh(a)), [a], tolerance=1e-6).passed


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), scale=st.floats(0.01, 300.0))
def test_softmax_rows_are_distributions(seed, scale):
    z = np.random.default_rng(seed).normal(size=(4, 7)) * scale
    for axis in (0, 1):
        s = softmax(Tensor(z), axis=axis).values
        assert np.all(s >= 0)
        np.testing.assert_allclose(s.sum(axis=axis), 1.0, rtol=0, atol=1e-9)


def test_masked_linear_examples():
    rng = np.random.default_rng(3)
    x, w, bias = rng.normal(size=(4, 3)), rng.normal(size=(2, 3)), rng.normal(size=2)
    full = masked_linear(Tensor(x), Tensor(w), np.ones((2, 3)), Tensor(bias)).values
    np.testing.assert_allclose(full, x @ w.T + bias, rtol=1e-14)
    severed = masked_linear(Tensor(x), Tensor(w), np.zeros((2, 3)), Tensor(bias)).values
    assert np.array_equal(severed, np.broadcast_to(bias, (4, 2)))
    with pytest.raises(ValidationError):
        masked_linear(Tensor(x), Tensor(w), np.full((2, 3), 0.5), Tensor(bias))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_masked_weight_gradient_is_zero_where_masked(seed):
    rng = np.random.default_rng(seed)
    w = Parameter("w", rng.normal(size=(5, 4)))
    mask = (rng.random((5, 4)) < 0.5).astype(float)
    x = Tensor(rng.normal(size=(3, 4)) * 10)
    with recording() as tape:
        out = masked_linear(x, w, mask, Tensor(np.zeros(5)))
        backward(tsum(out * out), tape)
    assert np.all(w.grad[mask == 0] == 0.0)


def test_backward_examples():
    x = Parameter("x", [1.0, -2.0, 3.0])
    with recording() as tape:
        backward(tsum(x), tape)
    assert np.array_equal(x.grad, np.ones(3))
    x.grad = None
    with recording() as tape:
        backward(0.5 * tsum(x * x), tape)
    assert np.array_equal(x.grad, x.values)
    assert len(tape) == 0


def test_backward_contracts():
    x = Parameter("x", [1.0, 2.0])
    with recording():
        with pytest.raises(ContractError):
            backward(x * 2.0)
    with pytest.raises(ContractError):
        backward(Tensor(3.0))


def test_gru_step_loss_gradient_every_parameter():
    rng = np.random.default_rng(4)
    cell = GRUCell(3, 5, rng, name="gru")
    x, h = Tensor(rng.normal(size=(2, 3))), Tensor(rng.normal(size=(2, 5)))
    target = rng.normal(size=(2, 5))
    loss = lambda: tsum((cell(x, h) - target) ** 2)
    rep = finite_difference_check(loss, cell.parameters(), tolerance=1e-4)
    assert rep.passed and set(rep.max_rel_error) == {p.name for p in cell.parameters()}


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_adam_zero_gradient_is_identity(seed):
    rng = np.random.default_rng(seed)
    p = Parameter("p", rng.normal(size=(3, 2)))
    before = p.values.copy()
    p.grad = np.zeros_like(before)
    adam_update([p])
    assert np.array_equal(p.values, before)
    assert p.step == 1 and p.grad is None


def test_adam_first_step_equal_magnitudes():
    p = Parameter("p", np.zeros(4))
    p.grad = np.array([0.3, -0.3, 2.0, -2.0])
    adam_update([p], learning_rate=1e-2)
    # m_hat = g and v_hat = g^2 on step one, so every entry moves by lr * |g|/(|g| + eps).
    np.testing.assert_allclose(np.abs(p.values), 1e-2, rtol=1e-6)
    assert np.array_equal(np.sign(p.values), [-1, 1, -1, 1])


def test_adam_missing_gradient_names_parameter():
    with pytest.raises(ContractError, match="orphan"):
        adam_update([Parameter("orphan", np.zeros(2))])


def test_adam_converges_on_quadratic():
    rng = np.random.default_rng(5)
    target = rng.uniform(-0.1, 0.1, size=6)
    w = Parameter("w", np.zeros(6))
    opt = Adam([w], AdamConfig(learning_rate=0.01, clip_norm=None))
    for _ in range(200):
        with recording() as tape:
            backward(tsum((w - target) ** 2), tape)
        opt.step()
    assert np.max(np.abs(w.values - target)) < 1e-3


def test_global_norm_clipping():
    a, b = Parameter("a", np.zeros(2)), Parameter("b", np.zeros(1))
    a.grad, b.grad = np.array([3.0, 0.0]), np.array([4.0])
    assert clip_grad_norm([a, b], 1.0) == 5.0
    np.testing.assert_allclose(global_grad_norm([a, b]), 1.0)


def test_linear_loss_has_zero_error():
    rng = np.random.default_rng(6)
    a = _p("a", rng, (4, 3))
    coef = rng.normal(size=(4, 3))
    rep = finite_difference_check(lambda: tsum(a * coef), [a])
    assert rep.worst < 1e-8


def test_corrupted_backward_rule_is_flagged():
    def bad_tanh(a):
        t = np.tanh(a.values)
        return _make(t, (a,), lambda g: (g * (1.0 - t),))  # should be 1 - t**2

    rng = np.random.default_rng(7)
    a = _p("a", rng, (3, 3), -2, 2)
    assert finite_difference_check(lambda: tsum(tanh(a)), [a]).passed
    rep = finite_difference_check(lambda: tsum(bad_tanh(a)), [a])
    assert not rep.passed and rep.flagged[0][0] == "a"
