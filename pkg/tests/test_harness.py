import math

import numpy as np
import pytest

from cgdlab import HyperParams, RunConfig, Trajectory, convergence_verdict, run, sweep
from cgdlab.harness import ConfigError, run_many
from cgdlab.rules import UnsupportedRuleError


def _cfg(game="bilinear:1.0", rule="cgd", eta=0.2, iterations=50, **kw):
    return RunConfig(game, rule, HyperParams(eta), iterations, **kw)


def _synthetic(values, termination="completed"):
    t = Trajectory(None, termination=termination)
    t.norms = list(values)
    return t


def test_run_records_initial_state_and_every_step():
    t = run(_cfg())
    assert t.iterations == list(range(51)) and len(t.states) == 51
    assert t.states[0].x[0] == 0.5 and t.states[0].y[0] == 0.5
    assert t.termination == "completed" and t.fwd_passes[0] == 0


def test_record_every_keeps_last_iteration():
    t = run(_cfg(iterations=23, record_every=5))
    assert t.iterations == [0, 5, 10, 15, 20, 23]
    assert t.cg_iters_x[1] + t.cg_iters_y[1] == 5  # one CG iteration per step, summed over the gap


def test_zero_iterations():
    t = run(_cfg(iterations=0))
    assert t.iterations == [0] and t.fwd_passes == [0]


def test_divergence_stops_early_and_keeps_prefix():
    t = run(_cfg("bilinear:6.0", "gda", iterations=500))
    assert t.diverged and t.termination.startswith("diverged@")
    k = int(t.termination.split("@")[1])
    assert t.iterations[-1] == k < 500
    assert t.states[-1].diverged and t.norms[-1] > 1e10 and t.norms[-2] <= 1e10


def test_runs_are_bit_identical():
    for cfg in (_cfg("covariance:3", "cgd", 0.3, 30, seed=4), _cfg(init="random", seed=9)):
        a, b = run(cfg), run(cfg)
        assert a.states == b.states and a.residuals == b.residuals and a.fwd_passes == b.fwd_passes


def test_explicit_and_random_init():
    t = run(_cfg(init=[1.0, 3.0], iterations=1))
    assert (t.states[0].x[0], t.states[0].y[0]) == (1.0, 3.0)
    r = run(_cfg(init="random", seed=1, iterations=0))
    assert r.states[0] != run(_cfg(init="random", seed=2, iterations=0)).states[0]
    with pytest.raises(ConfigError, match="expected 2 coordinates"):
        run(_cfg(init=[1.0]))


@pytest.mark.parametrize("kw,needle", [(dict(iterations=-1), "iterations"), (dict(record_every=0), "record_every"),
                                       (dict(cgd_side="both"), "cgd_side"), (dict(max_passes=0), "max_passes"),
                                       (dict(rule="nosuch"), "valid rules"), (dict(init="zeros"), "init"),
                                       (dict(game="nosuch:1"), "valid games")])
def test_config_errors(kw, needle):
    with pytest.raises(ConfigError, match=needle):
        run(_cfg(**kw))


def test_unsupported_rule_raises_in_run(monkeypatch):
    from cgdlab import harness
    orig = harness.make_game

    def general_sum(*a, **k):
        o = orig(*a, **k)
        o.is_zero_sum = False
        return o

    monkeypatch.setattr(harness, "make_game", general_sum)
    with pytest.raises(UnsupportedRuleError):
        run(_cfg("bilinear:1.0", "sga"))
    assert sweep(["bilinear:1.0"], ["sga", "gda"], [0.1], iterations=2)[0].skipped


def test_pass_budget_stops_the_run():
    t = run(_cfg("covariance:3", "ogda", 0.01, 10_000, max_passes=100))
    assert t.fwd_passes[-1] == 100 and t.iterations[-1] == 50


def test_residual_metric_for_covariance():
    t = run(_cfg("covariance:3", "cgd", 0.3, 5))
    assert t.verdict_metric == "residual" and t.metric() is t.residuals
    assert t.residuals[0] != t.norms[0]


def test_sweep_order_count_and_skips():
    res = sweep(["bilinear:1.0", "quadratic-cc:3.0"], ["gda", "cgd"], [0.1, 0.2], seeds=[0, 1], iterations=3)
    assert len(res) == 2 * 2 * 2 * 2
    order = [(t.config.game, t.config.rule, t.config.hyper.eta, t.config.seed) for t in res]
    assert order == [(g, r, e, s) for g in ("bilinear:1.0", "quadratic-cc:3.0") for r in ("gda", "cgd")
                     for e in (0.1, 0.2) for s in (0, 1)]
    with pytest.raises(ValueError, match="empty rules"):
        sweep(["bilinear:1.0"], [], [0.1])


def test_sweep_threads_do_not_change_results(monkeypatch):
    cfgs = [_cfg("covariance:3", r, 0.1, 20, seed=s) for r in ("cgd", "sga", "ogda") for s in (0, 1)]
    monkeypatch.setenv("CGDLAB_THREADS", "1")
    serial = run_many(cfgs)
    monkeypatch.setenv("CGDLAB_THREADS", "4")
    threaded = run_many(cfgs)
    assert [t.states for t in serial] == [t.states for t in threaded]


def test_sweep_template_hyper():
    res = sweep(["bilinear:1.0"], ["cgd"], [0.3], gammas=[0.5], iterations=1,
                hyper=HyperParams(1.0, cg_epsilon=1e-9))
    assert res[0].config.hyper == HyperParams(0.3, 0.5, 1e-9)


@pytest.mark.parametrize("values,verdict", [
    ([10.0 ** (-k / 10) for k in range(21)], "converges"),       # 2 decades down
    ([10.0 ** (k / 10) for k in range(21)], "diverges"),         # 2 decades up
    ([1.0 + 0.5 * (-1) ** k for k in range(21)], "cycles"),      # bounded oscillation
    ([0.99 ** k for k in range(21)], "converges"),               # slow steady decay
    ([1.0] * 21, "cycles"),
    ([1.0] * 10 + [1e3, 1e-3] * 5 + [1.0], "undecided"),         # wild swings, no drift
])
def test_verdicts_on_synthetic_series(values, verdict):
    assert convergence_verdict(_synthetic(values)) == verdict


def test_verdict_edge_cases():
    assert convergence_verdict(_synthetic([1.0] * 21, "diverged@3")) == "diverges"
    assert convergence_verdict(_synthetic([1.0] * 20 + [0.0])) == "converges"
    assert convergence_verdict(_synthetic([1.0] * 20 + [math.nan])) == "diverges"
    with pytest.raises(ValueError, match="21 recorded values"):
        convergence_verdict(_synthetic([1.0] * 20))


def test_gan_run_records_samples_and_coverage():
    t = run(RunConfig("gmm-gan", "cgd", HyperParams(0.025), 3, gan={"hidden": (8,), "batch_real": 16,
                                                                       "batch_fake": 16},
                      coverage_samples=100))
    assert t.extras["samples"].shape == (100, 2)
    f1, f2, other = t.extras["mode_coverage"]
    assert f1 + f2 + other == pytest.approx(1.0)
    assert np.isfinite(t.residuals).all()
