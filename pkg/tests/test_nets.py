import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgdlab import JointState, validate_oracle
from cgdlab.harness import mode_coverage
from cgdlab.nets import (DenseNet, GanConfig, GanOracle, gan_oracle, make_gan, net_forward_backward,
                         orthonormal_init, rmsprop_scale, sample_mixture)
from cgdlab.oracles import FdConfig, fd_agreement

SMALL = GanConfig(noise_dim=3, batch_real=8, batch_fake=8, hidden=(8, 8))


def _fd_param_grad(net, params, z, up, h=1e-6):
    out = np.zeros_like(params)
    for i in range(params.size):
        e = np.zeros_like(params)
        e[i] = h
        fp = np.sum(up * net.forward(params + e, z)[0])
        fm = np.sum(up * net.forward(params - e, z)[0])
        out[i] = (fp - fm) / (2 * h)
    return out


@pytest.mark.parametrize("dims", [(3, 8, 8, 2), (2, 8, 8, 1)])
def test_backprop_matches_differences(dims):
    net = DenseNet(dims)
    rng = np.random.default_rng(1)
    params = net.init_params(rng) + 0.1 * rng.standard_normal(net.num_params)
    z = rng.standard_normal((5, dims[0]))
    up = rng.standard_normal((5, dims[-1]))
    _, grad = net_forward_backward(net, params, z, up)
    fd = _fd_param_grad(net, params, z, up)
    assert np.linalg.norm(grad - fd) <= 1e-5 * np.linalg.norm(fd)


def test_input_gradient_and_relu_at_zero():
    net = DenseNet((1, 1, 1))
    # W1 = 1, b1 = 0, W2 = 2, b2 = 0: relu pre-activation exactly 0 at z = 0
    params = np.array([1.0, 0.0, 2.0, 0.0])
    out, cache = net.forward(params, np.array([[0.0], [1.5]]))
    np.testing.assert_array_equal(out[:, 0], [0.0, 3.0])
    grad, dz = net.backward(cache, np.ones((2, 1)))
    np.testing.assert_array_equal(dz[:, 0], [0.0, 2.0])
    # only the second sample passes the ReLU: dW1 = W2 z = 3, db1 = W2 = 2
    np.testing.assert_array_equal(grad, [3.0, 2.0, 1.5, 2.0])


def test_parameter_layout_is_row_major_weights_then_bias():
    net = DenseNet((2, 3, 1))
    assert net.num_params == 2 * 3 + 3 + 3 * 1 + 1
    params = np.arange(net.num_params, dtype=float)
    (W1, b1), (W2, b2) = list(net.layers(params))
    np.testing.assert_array_equal(W1, np.arange(6.0).reshape(3, 2))
    np.testing.assert_array_equal(b1, [6.0, 7.0, 8.0])
    np.testing.assert_array_equal(W2, [[9.0, 10.0, 11.0]])


def test_dense_net_validation():
    with pytest.raises(ValueError):
        DenseNet((3,))
    net = DenseNet((2, 2))
    with pytest.raises(ValueError):
        net.forward(np.zeros(5), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        net.forward(np.zeros(6), np.zeros((1, 3)))


@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 100))
@settings(max_examples=40, deadline=None)
def test_orthonormal_init(rows, cols, seed):
    w = orthonormal_init(rows, cols, seed)
    assert w.shape == (rows, cols)
    gram = w @ w.T if rows <= cols else w.T @ w
    np.testing.assert_allclose(gram, np.eye(min(rows, cols)), atol=1e-12)
    np.testing.assert_array_equal(w, orthonormal_init(rows, cols, seed))


def test_tangent_hvps_match_differences_of_gradients():
    o = gan_oracle(SMALL, seed=2)
    rng = np.random.default_rng(0)
    s = o.default_state()
    s = JointState(s.x + 0.1 * rng.standard_normal(o.m), s.y + 0.1 * rng.standard_normal(o.n))
    assert fd_agreement(o, [s], FdConfig("central"), seed=3) < 1e-5


def test_gan_oracle_validates():
    o = gan_oracle(SMALL, seed=1)
    assert validate_oracle(o, [o.default_state()], 1e-8, seed=0) == []
    fd = gan_oracle(SMALL, seed=1, hvp="fd")
    assert validate_oracle(fd, [fd.default_state()], 1e-4, seed=0) == []


def test_gan_f_is_cross_entropy_and_batch_order_invariant():
    o = gan_oracle(SMALL, seed=4)
    s = o.default_state()
    f = o.eval_f(s)
    # zero discriminator output layer gives logits 0 and loss log 2
    x = s.x.copy()
    x[-(SMALL.hidden[-1] + 1):] = 0.0
    assert o.eval_f(JointState(x, s.y)) == pytest.approx(np.log(2.0), rel=1e-14)
    perm = np.random.default_rng(0).permutation(SMALL.batch_real)
    o.set_batch(o.reals[perm], o.noise[::-1])
    assert o.eval_f(s) == pytest.approx(f, rel=1e-13)


def test_gan_minibatch_frozen_until_new_iteration():
    o = gan_oracle(SMALL, seed=4)
    s = o.default_state()
    g1 = o.grad_x_f(s)
    assert np.array_equal(g1, o.grad_x_f(s))
    o.new_iteration()
    assert not np.array_equal(g1, o.grad_x_f(s))


def test_gan_seeding():
    a, b = gan_oracle(SMALL, seed=5), gan_oracle(SMALL, seed=5)
    assert a.default_state() == b.default_state()
    assert np.array_equal(a.reals, b.reals)
    assert gan_oracle(SMALL, seed=6).default_state() != a.default_state()


def test_gan_shapes_and_errors():
    o = GanOracle(GanConfig())
    assert o.n == (16 * 32 + 32) + (32 * 32 + 32) + (32 * 2 + 2)
    assert o.m == (2 * 32 + 32) + (32 * 32 + 32) + (32 + 1)
    with pytest.raises(ValueError):
        GanOracle(GanConfig(), hvp="symbolic")
    with pytest.raises(ValueError):
        GanOracle(GanConfig(), gen_dims=(16, 8, 3))
    with pytest.raises(ValueError):
        GanConfig(sigma=0.0)


def test_make_gan_overrides():
    o = make_gan("gmm-gan", 0, {"hidden": [8], "noise_dim": 4, "hvp": "fd"})
    assert o.gen.layer_dims == [4, 8, 2] and o.hvp_mode == "fd"
    assert make_gan("gmm-gan:full", 0, {}).cfg.hidden == (128, 128, 128, 128)


def test_sample_mixture_statistics():
    cfg = GanConfig()
    pts = sample_mixture(cfg, 20_000, np.random.default_rng(0))
    near = np.argmin(np.linalg.norm(pts[:, None] - cfg.means[None], axis=2), axis=1)
    assert abs(np.mean(near == 0) - 0.5) < 0.02
    np.testing.assert_allclose(pts[near == 0].std(axis=0), cfg.sigma, rtol=0.05)


def test_mode_coverage_examples():
    cfg = GanConfig()
    assert mode_coverage(np.tile(cfg.means[0], (10, 1)), cfg) == (1.0, 0.0, 0.0)
    pts = sample_mixture(cfg, 10_000, np.random.default_rng(1))
    f1, f2, other = mode_coverage(pts, cfg, 3.0)
    assert abs(f1 - 0.5) < 0.05 and abs(f2 - 0.5) < 0.05 and other < 0.03
    assert mode_coverage(pts, cfg, 0.1)[2] > 0.9
    with pytest.raises(ValueError):
        mode_coverage(np.zeros((0, 2)), cfg)


def test_rmsprop_scale_examples():
    up, new = rmsprop_scale(np.array([1.0, -2.0]), np.array([2.0, 1.0]), None, rho=0.9, eps=0.0)
    np.testing.assert_allclose(new, [0.4, 0.1])
    assert up[0] == pytest.approx(1.0 / np.sqrt(0.4))
    up2, new2 = rmsprop_scale(np.array([1.0]), np.array([1.0]), np.array([0.4]), rho=0.5, eps=1e-8)
    assert new2[0] == pytest.approx(0.7) and up2[0] == pytest.approx(1.0 / np.sqrt(0.7 + 1e-8))
    with pytest.raises(ValueError):
        rmsprop_scale(np.ones(2), np.ones(3), None)
