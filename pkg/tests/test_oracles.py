import numpy as np
import pytest

from cgdlab import JointState, bilinear_oracle, covariance_oracle, quadratic_oracle
from cgdlab.core import random_states
from cgdlab.oracles import (EVAL_COST, GRAD_COST, HVP_COST, FdConfig, FdOracle, PassCounter,
                            counting_oracle, fd_agreement, fd_hvp)


def _grads(o):
    return lambda s: (o.grad_x_f(s), o.grad_y_g(s))


def test_fd_hvp_on_quadratic_is_exact_to_roundoff():
    o = quadratic_oracle(3.0)
    s = JointState([0.7], [-0.2])
    for mode in ("central", "forward"):
        d = fd_hvp(_grads(o), s, np.array([2.0]), "xx", FdConfig(mode))
        assert d[0] == pytest.approx(2 * 3.0 * 2.0, rel=1e-8)


def test_fd_hvp_blocks_and_shapes():
    o, _ = covariance_oracle(2, seed=1)
    s = o.default_state()
    rng = np.random.default_rng(0)
    for which, name in (("xy", "hvp_xy_f"), ("yx", "hvp_yx_g"), ("xx", "hvp_xx_f"), ("yy", "hvp_yy_g")):
        v = rng.standard_normal(4)
        np.testing.assert_allclose(fd_hvp(_grads(o), s, v, which), getattr(o, name)(s, v), atol=1e-7)


def test_fd_hvp_zero_direction_and_bad_inputs():
    o = bilinear_oracle(1.0)
    s = JointState([1.0], [1.0])
    assert np.array_equal(fd_hvp(_grads(o), s, np.zeros(1), "xy"), np.zeros(1))
    with pytest.raises(ValueError):
        fd_hvp(_grads(o), s, np.ones(1), "zz")
    with pytest.raises(ValueError):
        fd_hvp(_grads(o), s, np.ones(2), "xy")


def test_fd_step_is_relative_to_direction_norm():
    # a direction scaled by 1e6 must give a result scaled by 1e6 (linear game)
    o = bilinear_oracle(2.0)
    s = JointState([3.0], [4.0])
    a = fd_hvp(_grads(o), s, np.array([1.0]), "xy")
    b = fd_hvp(_grads(o), s, np.array([1e6]), "xy")
    assert b[0] == pytest.approx(1e6 * a[0], rel=1e-9)


def test_forward_mode_reuses_base_gradient():
    o, _ = covariance_oracle(2, seed=3)
    s = o.default_state()
    calls = []

    def grads(t):
        calls.append(t)
        return o.grad_x_f(t), o.grad_y_g(t)

    v = np.ones(4)
    fd_hvp(grads, s, v, "yy", FdConfig("forward"))
    assert len(calls) == 2
    calls.clear()
    fd_hvp(grads, s, v, "yy", FdConfig("forward"), base=grads(s))
    assert len(calls) == 2  # the explicit base call plus one perturbed call


@pytest.mark.parametrize("kw", [dict(step_mode="backward"), dict(base_step=0.0), dict(base_step=-1.0)])
def test_fd_config_validation(kw):
    with pytest.raises(ValueError):
        FdConfig(**kw)


def test_fd_oracle_agreement_helper():
    o, _ = covariance_oracle(3, seed=5)
    assert fd_agreement(o, random_states(o, 10, seed=1)) < 1e-6
    assert FdOracle(o).eval_f(o.default_state()) == o.eval_f(o.default_state())


def test_counting_oracle_is_transparent_and_charges_costs():
    o, _ = covariance_oracle(3, seed=2)
    c = PassCounter()
    w = counting_oracle(o, c)
    s = o.default_state()
    v = np.arange(9.0)
    assert w.eval_f(s) == o.eval_f(s)
    assert np.array_equal(w.grad_x_f(s), o.grad_x_f(s))
    assert np.array_equal(w.grad_y_g(s), o.grad_y_g(s))
    for name in ("hvp_xy_f", "hvp_yx_g", "hvp_xx_f", "hvp_yy_g"):
        assert np.array_equal(getattr(w, name)(s, v), getattr(o, name)(s, v))
    assert c.forward_passes == EVAL_COST + 2 * GRAD_COST + 4 * HVP_COST
    assert w.residual(s) == o.residual(s) and c.forward_passes == 7
    c.reset()
    assert c.forward_passes == 0


def test_cost_model_values():
    # one pass per gradient and per HVP is what the published per-rule counts imply
    assert (GRAD_COST, HVP_COST) == (1, 1)
