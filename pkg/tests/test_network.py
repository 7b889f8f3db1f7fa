import numpy as np
import pytest

from scpnm.errors import FormatError, ParameterError
from scpnm.network import MLPBank, ScalarMLP, backward, forward, init, pack_header, unpack_header

PARAMS = ("w1", "b1", "w2", "b2")


def numeric_grad(net, x, name, h=1e-6):
    """Central differences of sum(net(x)) w.r.t. one parameter array."""
    p = getattr(net, name)
    if np.isscalar(p) or np.ndim(p) == 0:
        orig = net.b2
        net.b2 = orig + h
        up = net(x).sum()
        net.b2 = orig - h
        dn = net(x).sum()
        net.b2 = orig
        return (up - dn) / (2 * h)
    out = np.zeros_like(p)
    for i in range(p.size):
        orig = p.flat[i]
        p.flat[i] = orig + h
        up = net(x).sum()
        p.flat[i] = orig - h
        dn = net(x).sum()
        p.flat[i] = orig
        out.flat[i] = (up - dn) / (2 * h)
    return out


def random_net(rng, activation):
    R = int(rng.integers(1, 6))
    return ScalarMLP(rng.normal(size=R), rng.normal(size=R), rng.normal(size=R), rng.normal(),
                     activation=activation)


def test_forward_examples():
    net = ScalarMLP([1.0], [0.0], [1.0], 0.0)
    assert net(0.0) == 0.0
    net = ScalarMLP([1.0], [0.0], [2.0], 0.0)
    assert net(10.0) == pytest.approx(2 * np.tanh(10.0), abs=1e-15)
    assert net(10.0) == pytest.approx(1.9999999917553, abs=1e-12)
    const = ScalarMLP([0.7], [0.1], [0.0], 3.25)
    np.testing.assert_array_equal(const(np.array([-5.0, 0.0, 8.0])), 3.25)


@pytest.mark.parametrize("activation", ["tanh", "sigmoid", "relu"])
def test_backward_matches_finite_differences(activation):
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(50):
        net = random_net(rng, activation)
        x = rng.normal(size=3)
        if activation == "relu":
            z = np.multiply.outer(x, net.w1) + net.b1
            if np.min(np.abs(z)) < 1e-3:
                continue
        y, tape = forward(net, x)
        grads, dx = backward(net, tape, np.ones_like(x))
        for name in PARAMS:
            num = numeric_grad(net, x, name)
            ana = getattr(grads, name)
            assert np.all(np.abs(ana - num) <= 1e-5 * (1 + np.abs(ana))), name
        h = 1e-6
        num_dx = (net(x + h) - net(x - h)) / (2 * h)
        assert np.all(np.abs(dx - num_dx) <= 1e-5 * (1 + np.abs(dx)))
        checked += 1
    assert checked >= 30


def test_zero_upstream_gives_zero_gradients():
    net = init(8, seed=1)
    _, tape = net.forward(np.linspace(-1, 1, 5))
    grads, dx = net.backward(tape, np.zeros(5))
    for name in PARAMS:
        assert np.all(getattr(grads, name) == 0)
    assert np.all(dx == 0)


def test_input_gradient_at_origin():
    rng = np.random.default_rng(5)
    net = ScalarMLP(rng.normal(size=4), np.zeros(4), rng.normal(size=4), 0.0)
    _, tape = net.forward(0.0)
    _, dx = net.backward(tape, 1.0)
    assert dx == pytest.approx(float(net.w2 @ net.w1), abs=1e-12)


def test_input_derivatives_analytic():
    rng = np.random.default_rng(6)
    net = random_net(rng, "tanh")
    x = np.linspace(-2, 2, 9)
    h = 1e-5
    np.testing.assert_allclose(net.derivative(x, 1), (net(x + h) - net(x - h)) / (2 * h), rtol=1e-6, atol=1e-8)
    d1 = lambda t: net.derivative(t, 1)
    np.testing.assert_allclose(net.derivative(x, 2), (d1(x + h) - d1(x - h)) / (2 * h), rtol=1e-5, atol=1e-7)


def test_init_contract():
    a, b = init(64, seed=9), init(64, seed=9)
    for name in ("w1", "b1", "w2"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
        assert getattr(a, name).shape == (64,)
    assert np.all(a.b1 == 0) and a.b2 == 0
    lim = np.sqrt(6 / 65)
    assert np.all(np.abs(a.w1) <= lim) and np.all(np.abs(a.w2) <= lim)
    big = init(10_000, seed=0)
    assert abs(big.w1.mean()) < 0.05
    with pytest.raises(ParameterError):
        init(0)


def test_fan_in_init():
    net = init(64, scale="fan_in", seed=3)
    assert np.all(np.abs(net.w1) <= 1) and np.all(np.abs(net.b1) <= 1)
    assert np.all(np.abs(net.w2) <= 1 / 8) and abs(net.b2) <= 1 / 8
    assert np.ptp(net.b1) > 1.5
    bank = MLPBank.init(3, 64, seed=3, scale="fan_in")
    assert np.all(np.abs(bank.b2) <= 1 / 8) and np.any(bank.b1 != 0)
    with pytest.raises(ParameterError):
        init(4, scale="he")


def test_no_bias_mode_freezes_biases():
    net = init(4, seed=2, use_bias=False)
    _, tape = net.forward(np.array([0.3, -0.2]))
    grads, _ = net.backward(tape, np.ones(2))
    assert np.all(grads.b1 == 0) and grads.b2 == 0


def test_bank_matches_individual_nets():
    rng = np.random.default_rng(3)
    bank = MLPBank(rng.normal(size=(3, 5)), rng.normal(size=(3, 5)), rng.normal(size=(3, 5)),
                   rng.normal(size=3))
    X = rng.normal(size=(3, 7))
    dY = rng.normal(size=(3, 7))
    Y, tape = bank.forward(X)
    g, dX = bank.backward(tape, dY)
    for m in range(3):
        net = bank.net(m)
        y, t = net.forward(X[m])
        np.testing.assert_allclose(Y[m], y, rtol=1e-14)
        gm, dxm = net.backward(t, dY[m])
        for name in PARAMS:
            np.testing.assert_allclose(getattr(g, name)[m], getattr(gm, name), rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(dX[m], dxm, rtol=1e-12, atol=1e-14)
    again = MLPBank.from_nets(bank.nets())
    np.testing.assert_array_equal(again(X), Y)


def test_bank_serialization_round_trip():
    bank = MLPBank.init(4, 6, "sigmoid", seed=1)
    buf = pack_header(bank.R, bank.activation, bank.M) + bank.to_bytes()
    hdr, off = unpack_header(buf)
    assert hdr == {"R": 6, "activation": "sigmoid", "M": 4, "use_bias": True}
    back = MLPBank.from_bytes(buf, hdr["M"], hdr["R"], hdr["activation"], offset=off)
    for name in PARAMS:
        np.testing.assert_array_equal(getattr(back, name), getattr(bank, name))
    with pytest.raises(FormatError):
        MLPBank.from_bytes(buf[:-3], 4, 6, "sigmoid", offset=off)
    with pytest.raises(FormatError):
        unpack_header(b"XXXXXXXX" + buf[8:])
