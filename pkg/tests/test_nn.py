import numpy as np
import pytest

import oracles
from palcas.nn import MLP, AdamW, huber, huber_grad


def numeric_grad(loss_fn, param: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences, element by element."""
    grad = np.zeros_like(param)
    it = np.nditer(param, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = param[idx]
        param[idx] = orig + h
        up = loss_fn()
        param[idx] = orig - h
        down = loss_fn()
        param[idx] = orig
        grad[idx] = (up - down) / (2.0 * h)
        it.iternext()
    return grad


GRAD_RTOL = 1e-4
GRAD_ATOL = 1e-7   # floor for analytically-zero entries (finite-difference noise)


def rel_err(a: np.ndarray, b: np.ndarray, atol: float = GRAD_ATOL) -> float:
    """Worst elementwise relative error, ignoring differences below atol."""
    diff = np.maximum(np.abs(a - b) - atol, 0.0)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-12)
    return float((diff / scale).max(initial=0.0))


def check_gradients(net: MLP, x: np.ndarray, d_out_fn, loss_fn,
                    tol=GRAD_RTOL) -> float:
    """Compare reverse-mode gradients of every parameter against central
    differences of the scalar loss. Returns the worst relative error."""
    y, cache = net.forward(x, training=True, rng=np.random.default_rng(0))
    grads, _ = net.backward(d_out_fn(y), cache)
    worst = 0.0
    for name, param in net.params.items():
        num = numeric_grad(lambda: loss_fn(net.forward(
            x, training=True, rng=np.random.default_rng(0))[0]), param)
        worst = max(worst, rel_err(grads[name], num))
    assert worst < tol, f"gradient mismatch {worst:.2e}"
    return worst


def test_forward_shapes_and_finiteness():
    net = MLP((4, 8, 4), dropout=0.1, batch_norm=True)
    x = np.random.default_rng(1).normal(size=(16, 4))
    y, _ = net.forward(x, training=False)
    assert y.shape == (16, 4)
    assert np.all(np.isfinite(y))
    y1, _ = net.forward(x[0], training=False)
    assert y1.shape == (4,)
    assert np.allclose(y1, y[0])


def test_eval_mode_is_deterministic_training_uses_dropout():
    net = MLP((4, 8, 4), dropout=0.5, batch_norm=False)
    x = np.random.default_rng(2).normal(size=(8, 4))
    a, _ = net.forward(x, training=False)
    b, _ = net.forward(x, training=False)
    assert np.array_equal(a, b)
    t1, _ = net.forward(x, training=True, rng=np.random.default_rng(3))
    t2, _ = net.forward(x, training=True, rng=np.random.default_rng(4))
    assert not np.array_equal(t1, t2)


def test_batchnorm_running_stats_update_only_in_training():
    net = MLP((4, 8, 2), dropout=0.0, batch_norm=True)
    x = np.random.default_rng(5).normal(size=(32, 4)) * 3.0 + 1.0
    before = net.buffers["bn0.mean"].copy()
    net.forward(x, training=False)
    assert np.array_equal(net.buffers["bn0.mean"], before)
    net.forward(x, training=True, rng=np.random.default_rng(0))
    assert not np.array_equal(net.buffers["bn0.mean"], before)


def test_gradcheck_sum_loss_plain():
    rng = np.random.default_rng(10)
    net = MLP((4, 8, 4), dropout=0.0, batch_norm=False, rng=rng)
    x = rng.normal(size=(6, 4))
    check_gradients(net, x,
                    d_out_fn=lambda y: np.ones_like(y),
                    loss_fn=lambda y: float(np.sum(y)))


def test_gradcheck_huber_loss_with_batchnorm():
    rng = np.random.default_rng(11)
    net = MLP((4, 8, 4), dropout=0.0, batch_norm=True, rng=rng)
    x = rng.normal(size=(8, 4))
    target = rng.normal(size=(8, 4))

    def d_out(y):
        return huber_grad(y - target) / y.size

    def loss(y):
        return float(np.mean(huber(y - target)))

    check_gradients(net, x, d_out, loss)


def test_gradcheck_input_gradient():
    # d(loss)/d(input) drives the parameter-network update, so it must be
    # exact as well
    rng = np.random.default_rng(12)
    net = MLP((4, 8, 4), dropout=0.0, batch_norm=True, rng=rng)
    x = rng.normal(size=(5, 4))
    y, cache = net.forward(x, training=True, rng=np.random.default_rng(0))
    _, dx = net.backward(np.ones_like(y), cache)
    num = numeric_grad(lambda: float(np.sum(net.forward(
        x, training=True, rng=np.random.default_rng(0))[0])), x)
    assert rel_err(dx, num) < 1e-4


def test_gradcheck_many_random_weight_settings():
    # 50 reinitializations of the toy architecture, as the acceptance gate runs
    worst = 0.0
    for trial in range(50):
        rng = np.random.default_rng(100 + trial)
        net = MLP((4, 8, 4), dropout=0.0, batch_norm=(trial % 2 == 0), rng=rng)
        x = rng.normal(size=(4, 4))
        target = rng.normal(size=(4, 4))
        worst = max(worst, check_gradients(
            net, x,
            d_out_fn=lambda y: huber_grad(y - target) / y.size,
            loss_fn=lambda y: float(np.mean(huber(y - target)))))
    assert worst < 1e-4


def test_huber_matches_oracle():
    rng = np.random.default_rng(13)
    r = rng.normal(size=200) * 3.0
    got = huber(r)
    want = np.array([oracles.huber(v) for v in r])
    assert np.allclose(got, want, atol=1e-12)
    assert huber(np.array([-1.0]))[0] == pytest.approx(0.5)


def test_adamw_decoupled_decay():
    # zero gradient: AdamW still shrinks weights by lr*wd per step
    net = MLP((2, 3), dropout=0.0, batch_norm=False)
    w0 = net.params["out.W"].copy()
    opt = AdamW(net.params, lr=0.1, weight_decay=0.5)
    opt.step({"out.W": np.zeros_like(w0)})
    assert np.allclose(net.params["out.W"], w0 * (1.0 - 0.1 * 0.5))


def test_adamw_reduces_quadratic_loss():
    rng = np.random.default_rng(14)
    net = MLP((3, 8, 1), dropout=0.0, batch_norm=False, rng=rng)
    x = rng.normal(size=(64, 3))
    target = (x.sum(axis=1, keepdims=True) > 0).astype(float)
    opt = AdamW(net.params, lr=1e-2, weight_decay=0.0)
    losses = []
    for _ in range(200):
        y, cache = net.forward(x, training=True, rng=rng)
        resid = y - target
        losses.append(float(np.mean(resid ** 2)))
        grads, _ = net.backward(2.0 * resid / resid.size, cache)
        opt.step(grads)
    assert losses[-1] < 0.2 * losses[0]


def test_tensor_roundtrip():
    net = MLP((4, 8, 4), dropout=0.1, batch_norm=True)
    twin = net.clone()
    x = np.random.default_rng(15).normal(size=(7, 4))
    a, _ = net.forward(x, training=False)
    b, _ = twin.forward(x, training=False)
    assert np.array_equal(a, b)
