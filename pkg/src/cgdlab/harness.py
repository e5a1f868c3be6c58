"""Run loop, sweeps, convergence verdicts and GAN mode coverage."""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Sequence, Union

import numpy as np

from .core import HyperParams, JointState, is_diverged, joint_norm
from .games import generator, make_game
from .nets import GanConfig, GanOracle, RmsState, rmsprop_scale
from .oracles import PassCounter, counting_oracle
from .rules import RuleSpec, Stepper, UnsupportedRuleError

STREAM_COVERAGE = 3
# keep per-step deltas only for games this small
_KEEP_DELTAS_DIM = 64


class ConfigError(ValueError):
    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid run config: " + "; ".join(self.problems))


@dataclass
class RunConfig:
    game: str
    rule: str
    hyper: HyperParams
    iterations: int = 50
    # "default", "random", or explicit coordinates (x followed by y)
    init: Union[str, Sequence[float]] = "default"
    seed: int = 0
    record_every: int = 1
    cgd_side: str = "alternate"
    max_passes: Optional[int] = None
    # None: on for GAN games, off otherwise
    rmsprop: Optional[bool] = None
    gan: dict = field(default_factory=dict)
    coverage_samples: int = 4096

    def problems(self) -> List[str]:
        bad = []
        if self.iterations < 0:
            bad.append(f"iterations: must be >= 0 (got {self.iterations})")
        if self.record_every < 1:
            bad.append(f"record_every: must be >= 1 (got {self.record_every})")
        if self.cgd_side not in ("alternate", "x", "y"):
            bad.append(f"cgd_side: must be alternate, x or y (got {self.cgd_side!r})")
        if self.max_passes is not None and self.max_passes < 1:
            bad.append(f"max_passes: must be >= 1 (got {self.max_passes})")
        try:
            RuleSpec.parse(self.rule)
        except ValueError as exc:
            bad.append(f"rule: {exc}")
        if isinstance(self.init, str) and self.init not in ("default", "random"):
            bad.append(f"init: must be 'default', 'random' or a coordinate list (got {self.init!r})")
        return bad

    def echo(self) -> dict:
        d = asdict(self)
        d["init"] = self.init if isinstance(self.init, str) else [float(v) for v in self.init]
        return d


@dataclass
class Trajectory:
    config: Optional[RunConfig]
    iterations: List[int] = field(default_factory=list)
    states: List[JointState] = field(default_factory=list)
    norms: List[float] = field(default_factory=list)
    residuals: List[float] = field(default_factory=list)
    fwd_passes: List[int] = field(default_factory=list)
    cg_iters_x: List[int] = field(default_factory=list)
    cg_iters_y: List[int] = field(default_factory=list)
    reports: list = field(default_factory=list)
    termination: str = "completed"
    message: str = ""
    verdict_metric: str = "norm"
    extras: dict = field(default_factory=dict)

    @property
    def log10norms(self) -> List[float]:
        return [_log10(v) for v in self.norms]

    @property
    def final_state(self) -> JointState:
        return self.states[-1]

    @property
    def diverged(self) -> bool:
        return self.termination.startswith(("diverged", "cg-failed"))

    @property
    def skipped(self) -> bool:
        return self.termination == "skipped"

    def metric(self) -> List[float]:
        return self.residuals if self.verdict_metric == "residual" else self.norms


def _log10(v: float) -> float:
    if v > 0 and math.isfinite(v):
        return math.log10(v)
    if v == 0:
        return -math.inf
    return math.inf


def _initial_state(cfg: RunConfig, oracle) -> JointState:
    if isinstance(cfg.init, str):
        if cfg.init == "default":
            return oracle.default_state()
        rng = generator(cfg.seed, 4)
        return JointState(rng.standard_normal(oracle.m), rng.standard_normal(oracle.n))
    vals = np.asarray(cfg.init, dtype=np.float64)
    if vals.size != oracle.m + oracle.n:
        raise ConfigError([f"init: expected {oracle.m + oracle.n} coordinates, got {vals.size}"])
    return JointState(vals[:oracle.m], vals[oracle.m:])


def run(cfg: RunConfig) -> Trajectory:
    """Iterate one rule on one game and record metrics every ``record_every`` steps.

    Stops early when the state diverges (joint norm above 1e10 or non-finite)
    or CG fails; the recorded prefix is kept.  Raises :class:`ConfigError`
    for invalid configurations and :class:`UnsupportedRuleError` when the
    rule does not accept the game.
    """
    bad = cfg.problems()
    if bad:
        raise ConfigError(bad)
    rule = RuleSpec.parse(cfg.rule)
    try:
        oracle = make_game(cfg.game, cfg.seed, cfg.gan)
    except (ValueError, TypeError) as exc:
        raise ConfigError([f"game: {exc}"]) from None
    if rule.needs_zero_sum and not oracle.is_zero_sum:
        raise UnsupportedRuleError(f"{rule} requires a zero-sum game, {cfg.game} is not")
    is_gan = isinstance(oracle, GanOracle)
    use_rms = is_gan if cfg.rmsprop is None else cfg.rmsprop

    s = _initial_state(cfg, oracle)
    counter = PassCounter()
    co = counting_oracle(oracle, counter)
    stepper = Stepper(rule, cfg.cgd_side)
    rms = RmsState()
    rho, eps = 0.9, 1e-8
    if is_gan:
        rho, eps = oracle.cfg.rmsprop_rho, oracle.cfg.rmsprop_eps
    keep_deltas = oracle.m + oracle.n <= _KEEP_DELTAS_DIM

    t = Trajectory(cfg, verdict_metric="residual" if cfg.game.startswith("covariance") else "norm")
    pending = [0, 0]

    def record(k, state):
        t.iterations.append(k)
        t.states.append(state)
        t.norms.append(joint_norm(state))
        t.residuals.append(oracle.residual(state) if state.is_finite() else math.nan)
        t.fwd_passes.append(counter.forward_passes)
        t.cg_iters_x.append(pending[0])
        t.cg_iters_y.append(pending[1])
        pending[0] = pending[1] = 0

    record(0, s)
    k = 0
    while k < cfg.iterations:
        if cfg.max_passes is not None and counter.forward_passes >= cfg.max_passes:
            break
        co.new_iteration()
        rep = stepper(co, s, cfg.hyper, k)
        pending[0] += rep.cg_iterations_x
        pending[1] += rep.cg_iterations_y
        k += 1
        if rep.diverged:
            t.termination = ("cg-failed@%d" if rep.message.startswith("cg") else "diverged@%d") % k
            t.message = rep.message
            t.reports.append(_slim(rep, keep_deltas))
            break
        dx, dy = rep.delta_x, rep.delta_y
        if use_rms:
            dx, rms.second_moment_x = rmsprop_scale(dx, rep.grad_x, rms.second_moment_x, rho, eps)
            dy, rms.second_moment_y = rmsprop_scale(dy, rep.grad_y, rms.second_moment_y, rho, eps)
        s = s.moved(dx, dy)
        t.reports.append(_slim(rep, keep_deltas))
        if is_diverged(s):
            s = JointState(s.x, s.y, diverged=True)
            record(k, s)
            t.termination = f"diverged@{k}"
            t.message = "joint norm above 1e10 or non-finite state"
            break
        if k % cfg.record_every == 0:
            record(k, s)
    if t.iterations[-1] != k and not t.diverged:
        record(k, s)

    if is_gan and s.is_finite():
        rng = generator(cfg.seed, STREAM_COVERAGE)
        samples = oracle.sample(s, cfg.coverage_samples, rng)
        t.extras["samples"] = samples
        t.extras["mode_coverage"] = mode_coverage(samples, oracle.cfg, 3.0)
    return t


def _slim(rep, keep_deltas):
    rep.grad_x = rep.grad_y = None
    if not keep_deltas:
        rep.delta_x = rep.delta_y = None
    return rep


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CGDLAB_THREADS", "1")))
    except ValueError:
        return 1


def _run_or_skip(cfg: RunConfig) -> Trajectory:
    try:
        return run(cfg)
    except UnsupportedRuleError as exc:
        return Trajectory(cfg, termination="skipped", message=str(exc))


def sweep(games: Sequence[str], rules: Sequence[str], etas: Sequence[float],
          gammas: Sequence[float] = (1.0,), seeds: Sequence[int] = (0,), **base) -> List[Trajectory]:
    """Run every combination of the grid, in product order.

    ``base`` holds the remaining :class:`RunConfig` fields (``iterations``,
    ``init``, ...) and an optional ``hyper`` template whose ``eta`` and
    ``gamma`` are overridden per run.  Rules that reject a game yield a
    ``skipped`` trajectory.  Runs execute on up to ``CGDLAB_THREADS`` threads
    without affecting the order of the results.
    """
    for name, vals in (("games", games), ("rules", rules), ("etas", etas),
                       ("gammas", gammas), ("seeds", seeds)):
        if not len(vals):
            raise ValueError(f"sweep grid has an empty {name} list")
    template = base.pop("hyper", None) or HyperParams(eta=1.0)
    configs = [
        RunConfig(game=g, rule=r, hyper=replace(template, eta=e, gamma=gm), seed=sd, **base)
        for g, r, e, gm, sd in itertools.product(games, rules, etas, gammas, seeds)
    ]
    return run_many(configs)


def run_many(configs: Sequence[RunConfig]) -> List[Trajectory]:
    workers = _threads()
    if workers == 1 or len(configs) == 1:
        return [_run_or_skip(c) for c in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_or_skip, configs))


def convergence_verdict(t: Trajectory, window: int = 20, grow_tol: float = 1.0,
                        shrink_tol: float = 1.0, trend_floor: float = 0.01) -> str:
    """Classify a trajectory as ``converges``, ``diverges``, ``cycles`` or ``undecided``.

    Works on log10 of the trajectory's metric (joint norm, or the residual for
    covariance runs) over the last ``window`` recorded steps, i.e. the last
    ``window + 1`` records.  Tolerances are in decades.  In order:

    1. a diverged or CG-failed run diverges;
    2. a net change beyond ``grow_tol`` / ``shrink_tol`` diverges / converges;
    3. a near-monotone drift (net change at least 90% of the max-min band and
       above ``trend_floor``) converges or diverges by its sign, which catches
       steady geometric rates too slow for step 2;
    4. a band narrower than ``grow_tol`` with no such drift cycles;
    5. anything else is undecided.
    """
    if t.diverged:
        return "diverges"
    vals = t.metric()
    if len(vals) < window + 1:
        raise ValueError(f"verdict needs {window + 1} recorded values, trajectory has {len(vals)}")
    logs = np.array([_log10(v) for v in vals[-(window + 1):]])
    if np.any(np.isnan(logs)) or np.any(logs == math.inf):
        return "diverges"
    if np.any(logs == -math.inf):
        # hit exactly zero
        return "converges"
    net = logs[-1] - logs[0]
    if net > grow_tol:
        return "diverges"
    if net < -shrink_tol:
        return "converges"
    band = float(logs.max() - logs.min())
    if abs(net) > trend_floor and abs(net) >= 0.9 * band:
        return "converges" if net < 0 else "diverges"
    if band < grow_tol:
        return "cycles"
    return "undecided"


def mode_coverage(samples, cfg: GanConfig, radius_mult: float = 3.0):
    """Fractions of samples within ``radius_mult * sigma`` of each mean (nearest wins), and the rest."""
    pts = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("mode_coverage needs at least one sample")
    dist = np.linalg.norm(pts[:, None, :] - cfg.means[None, :, :], axis=2)
    nearest = np.argmin(dist, axis=1)
    inside = dist[np.arange(len(pts)), nearest] <= radius_mult * cfg.sigma
    f1 = float(np.mean(inside & (nearest == 0)))
    f2 = float(np.mean(inside & (nearest == 1)))
    return f1, f2, float(np.mean(~inside))
