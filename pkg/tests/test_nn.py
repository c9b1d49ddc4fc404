import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blockrandom import nn
from blockrandom.rng import make_generator


def _net(sizes, hidden, output, seed=0, dropout=0.0):
    return nn.Network.init(nn.mlp(sizes, hidden, output, dropout), make_generator(seed))


def test_init_shapes_and_zero_biases():
    net = _net([3, 5, 2], nn.RELU, nn.IDENTITY)
    assert [w.shape for w in net.weights] == [(5, 3), (2, 5)]
    assert all(np.all(b == 0) for b in net.biases)
    limit = np.sqrt(6 / (3 + 5))
    assert np.all(np.abs(net.weights[0]) <= limit)
    assert net.n_params() == 5 * 3 + 5 + 2 * 5 + 2


def test_layer_mismatch_rejected():
    layers = [nn.LayerSpec(3, 4, nn.RELU, 0.0), nn.LayerSpec(5, 1, nn.IDENTITY, 0.0)]
    with pytest.raises(nn.DimensionError):
        nn.Network.init(layers, make_generator(0))


def test_forward_identity_layer_is_affine():
    net = _net([2, 1], [], nn.IDENTITY)
    net.weights[0][:] = [[2.0, -1.0]]
    net.biases[0][:] = [0.5]
    assert nn.predict(net, np.array([[1.0, 3.0]]))[0, 0] == pytest.approx(-0.5)


def test_single_sample_gives_vector():
    net = _net([3, 4, 2], nn.TANH, nn.SOFTMAX)
    out = nn.predict(net, np.zeros(3))
    assert out.shape == (2,)
    assert out.sum() == pytest.approx(1.0)


def test_wrong_input_width():
    net = _net([3, 2], [], nn.IDENTITY)
    with pytest.raises(nn.DimensionError):
        nn.predict(net, np.zeros((2, 4)))


def test_softmax_is_shift_stable():
    net = _net([1, 3], [], nn.SOFTMAX)
    net.weights[0][:] = [[1000.0], [0.0], [-1000.0]]
    p = nn.predict(net, np.array([[1.0]]))
    assert np.all(np.isfinite(p)) and p[0, 0] == pytest.approx(1.0)


def test_overflow_names_layer():
    net = _net([1, 2, 1], nn.IDENTITY, nn.IDENTITY)
    net.weights[0][:] = 1e308
    with pytest.raises(nn.NumericOverflowError) as e:
        nn.predict(net, np.array([[10.0]]))
    assert e.value.layer == 0


def test_mse_and_cross_entropy_values():
    assert nn.loss(np.array([[1.0, 3.0]]), np.array([[0.0, 1.0]]), "mse") == pytest.approx(2.5)
    p = np.array([[0.25, 0.75], [0.5, 0.5]])
    assert nn.loss(p, [1, 0], "cross_entropy") == pytest.approx(-(np.log(0.75) + np.log(0.5)) / 2)
    assert nn.loss(np.array([[1.0, 0.0]]), [1], "cross_entropy") == pytest.approx(-np.log(1e-12))
    with pytest.raises(ValueError):
        nn.loss(np.array([[0.3, 0.3]]), [0], "cross_entropy")


def test_leaky_relu_slope():
    net = _net([1, 1], [], nn.LEAKY_RELU)
    net.weights[0][:] = 1.0
    assert nn.predict(net, np.array([[-2.0]]))[0, 0] == pytest.approx(-0.02)


def test_dropout_inverted_scaling_and_eval_passthrough():
    net = _net([4, 200, 1], nn.IDENTITY, nn.IDENTITY, dropout=0.5)
    net.weights[0][:] = 1.0
    x = np.ones((1, 4))
    h_train = nn.forward(net, x, train=True, gen=make_generator(0))[1][0]
    h_eval = nn.forward(net, x)[1][0]
    assert np.all(h_eval == 4.0)
    kept = h_train != 0
    assert np.all(h_train[kept] == 8.0)
    assert 60 < kept.sum() < 140


def _fd_grads(net, x, t, kind, h=1e-6):
    grads = []
    for p in net.params():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = nn.loss(nn.predict(net, x), t, kind)
            p[i] = old - h
            dn = nn.loss(nn.predict(net, x), t, kind)
            p[i] = old
            g[i] = (up - dn) / (2 * h)
        grads.append(g)
    return grads


def test_backprop_matches_finite_differences_small():
    net = _net([3, 4, 2], nn.TANH, nn.IDENTITY, seed=1)
    gen = np.random.default_rng(0)
    x, t = gen.standard_normal((5, 3)), gen.standard_normal((5, 2))
    an = nn.backprop(net, x, t, "mse", train=False)
    fd = _fd_grads(net, x, t, "mse")
    for a, f in zip(an, fd):
        assert np.allclose(a, f, atol=1e-8, rtol=1e-6)


def test_cross_entropy_clamp_gives_zero_gradient():
    net = _net([1, 2], [], nn.SOFTMAX)
    net.weights[0][:] = [[100.0], [-100.0]]
    _, g = nn.loss_and_grad(net, np.array([[1.0]]), [1], "cross_entropy", train=False)
    assert all(np.all(x == 0) for x in g)


def test_general_ce_path_matches_fast_path():
    # dropout on the output layer forces the Jacobian path; with rate 0 both must agree
    net = _net([3, 4, 3], nn.RELU, nn.SOFTMAX, seed=2)
    x = np.random.default_rng(1).standard_normal((6, 3))
    y = np.array([0, 1, 2, 0, 1, 2])
    _, fast = nn.loss_and_grad(net, x, y, "cross_entropy", train=False)
    fd = _fd_grads(net, x, y, "cross_entropy")
    for a, f in zip(fast, fd):
        assert np.allclose(a, f, atol=1e-7)


def test_evaluate_accuracy_and_mse():
    net = _net([2, 2], [], nn.SOFTMAX)
    net.weights[0][:] = np.eye(2)
    x = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    assert nn.evaluate(net, x, [0, 1, 1], "cross_entropy") == pytest.approx(2 / 3)


def test_sgd_step_is_pure():
    p = [np.ones(3)]
    out = nn.sgd_step(p, [np.full(3, 2.0)], 0.1)
    assert np.allclose(out[0], 0.8) and np.all(p[0] == 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(1e-4, 1e-1))
def test_optimizer_matches_pure_adam(seed, eta):
    gen = np.random.default_rng(seed)
    params = [gen.standard_normal((3, 4)), gen.standard_normal(4)]
    ref = [p.copy() for p in params]
    state = nn.AdamState.zeros(ref)
    opt = nn.Optimizer("adam", eta)
    for _ in range(4):
        grads = [gen.standard_normal(p.shape) for p in params]
        ref, state = nn.adam_step(ref, grads, state, eta)
        opt.step(params, grads)
    for a, b in zip(params, ref):
        assert np.array_equal(a, b)


def test_optimizer_sgd_in_place():
    p = [np.ones((2, 2))]
    nn.Optimizer("sgd", 0.5).step(p, [np.ones((2, 2))])
    assert np.all(p[0] == 0.5)
