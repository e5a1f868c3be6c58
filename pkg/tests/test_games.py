import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgdlab import JointState, bilinear_oracle, covariance_oracle, make_game, quadratic_oracle
from cgdlab.core import random_states
from cgdlab.games import covariance_init, covariance_residual, generator


def _fd_grad(fun, s, slot, h=1e-6):
    base = s.x if slot == "x" else s.y
    out = np.zeros(base.size)
    for i in range(base.size):
        e = np.zeros(base.size)
        e[i] = h
        if slot == "x":
            p, m = JointState(s.x + e, s.y), JointState(s.x - e, s.y)
        else:
            p, m = JointState(s.x, s.y + e), JointState(s.x, s.y - e)
        out[i] = (fun(p) - fun(m)) / (2 * h)
    return out


def test_bilinear_values():
    o = bilinear_oracle(3.0)
    s = JointState([2.0], [-1.0])
    assert o.eval_f(s) == -6.0 and o.eval_g(s) == 6.0
    assert o.grad_x_f(s)[0] == -3.0 and o.grad_y_g(s)[0] == -6.0
    assert o.hvp_xy_f(s, [2.0])[0] == 6.0 and o.hvp_yx_g(s, [2.0])[0] == -6.0


def test_quadratic_signs():
    cc, xc = quadratic_oracle(2.0), quadratic_oracle(2.0, "concave-convex")
    s = JointState([1.0], [0.5])
    assert cc.eval_f(s) == 2.0 * (1.0 - 0.25)
    assert xc.eval_f(s) == -cc.eval_f(s)
    assert cc.hvp_xx_f(s, [1.0])[0] == 4.0 and xc.hvp_xx_f(s, [1.0])[0] == -4.0
    assert cc.hvp_xy_f(s, [1.0])[0] == 0.0
    with pytest.raises(ValueError):
        quadratic_oracle(1.0, "convex-convex")


@pytest.mark.parametrize("payoff", ["noise", "verbatim"])
def test_covariance_gradients_match_differences_of_f(payoff):
    o, _ = covariance_oracle(3, seed=4, payoff=payoff)
    for s in random_states(o, 3, seed=9):
        np.testing.assert_allclose(o.grad_x_f(s), _fd_grad(o.eval_f, s, "x"), rtol=1e-6, atol=1e-6)
        np.testing.assert_allclose(o.grad_y_g(s), _fd_grad(o.eval_g, s, "y"), rtol=1e-6, atol=1e-6)


@given(st.integers(0, 1000), st.floats(-5, 5))
@settings(max_examples=30, deadline=None)
def test_covariance_f_linear_in_w(seed, c):
    o, _ = covariance_oracle(3, seed=seed)
    s = random_states(o, 1, seed=seed)[0]
    scaled = JointState(c * s.x, s.y)
    assert o.eval_f(scaled) == pytest.approx(c * o.eval_f(s), rel=1e-12, abs=1e-9)


def test_covariance_residual_zero_at_solution_and_known_value():
    o, game = covariance_oracle(3, seed=1)
    sol = JointState(np.zeros(9), game.U.ravel())
    assert covariance_residual(game, sol) == 0.0
    # antisymmetric W costs nothing, symmetric W is halved
    W = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    assert covariance_residual(game, JointState(W.ravel(), game.U.ravel())) == 0.0
    assert covariance_residual(game, JointState(np.eye(3).ravel(), game.U.ravel())) == pytest.approx(np.sqrt(3))


def test_covariance_deterministic_mode_and_seeding():
    _, a = covariance_oracle(4, seed=7)
    _, b = covariance_oracle(4, seed=7)
    _, c = covariance_oracle(4, seed=8)
    assert np.array_equal(a.U, b.U) and not np.array_equal(a.U, c.U)
    np.testing.assert_array_equal(a.sigma_hat, a.U @ a.U.T)
    np.testing.assert_array_equal(a.noise_cov, np.eye(4))


def test_covariance_sampled_mode():
    _, g = covariance_oracle(3, seed=2, deterministic=False, samples=200_000)
    np.testing.assert_allclose(g.sigma_hat, g.sigma, atol=0.1 * np.abs(g.sigma).max())
    np.testing.assert_allclose(g.noise_cov, np.eye(3), atol=0.02)


def test_covariance_init_perturbation_range():
    _, game = covariance_oracle(5, seed=3)
    s = covariance_init(game, 3)
    W, V = game.unpack(s)
    assert np.all(np.abs(W) <= 0.5) and np.all(np.abs(V - game.U) <= 0.5)
    assert covariance_init(game, 3) == s and covariance_init(game, 4) != s


def test_generator_streams_are_independent_and_reproducible():
    a = generator(1, 0).standard_normal(3)
    assert np.array_equal(a, generator(1, 0).standard_normal(3))
    assert not np.array_equal(a, generator(1, 1).standard_normal(3))
    assert not np.array_equal(a, generator(2, 0).standard_normal(3))


@pytest.mark.parametrize("name,cls_name", [("bilinear:1.5", "BilinearGame"), ("quadratic-cc:3", "QuadraticGame"),
                                           ("QUADRATIC-XC:6.0", "QuadraticGame"), ("covariance:4", "CovarianceOracle"),
                                           ("covariance-verbatim:2", "CovarianceOracle")])
def test_make_game(name, cls_name):
    assert type(make_game(name)).__name__ == cls_name


@pytest.mark.parametrize("name", ["bilinear", "bilinear:x", "covariance:0", "chess:1", ""])
def test_make_game_rejects(name):
    with pytest.raises(ValueError):
        make_game(name)


def test_make_game_error_lists_valid_names():
    with pytest.raises(ValueError, match="bilinear:alpha.*covariance:d"):
        make_game("nosuch:1")
