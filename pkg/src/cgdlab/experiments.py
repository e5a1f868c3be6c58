"""Preset grids for the three experiments."""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

from .core import HyperParams
from .harness import RunConfig

EXP1_TESTS = ("bilinear", "quadratic-cc", "quadratic-xc")
EXP1_ALPHAS = (1.0, 3.0, 6.0)
EXP1_RULES = ("gda", "lcgd", "sga", "conopt", "ogda", "cgd")

EXP2_DIMS = (20, 40, 60)
EXP2_RULES = ("ogda", "sga", "conopt", "cgd")
EXP2_ETAS = (0.005, 0.025, 0.1, 0.4)
EXP2_PASS_BUDGET = 50_000

EXP3_RULES = ("sga", "conopt", "ogda", "cgd")
EXP3_ETAS = (0.4, 0.1, 0.025, 0.005)


def run_name(cfg: RunConfig) -> str:
    h = cfg.hyper
    return f"{cfg.game}__{cfg.rule}__eta{h.eta!r}__gamma{h.gamma!r}__seed{cfg.seed}".replace(":", "_")


def _pick(override, default):
    return tuple(override) if override else default


def exp1(alphas: Optional[Sequence[float]] = None, tests: Optional[Sequence[str]] = None,
         rules: Optional[Sequence[str]] = None, eta: float = 0.2, gamma: float = 1.0,
         iterations: int = 50, seed: int = 0, cg_eps: float = 1e-6) -> List[Tuple[str, RunConfig]]:
    out = []
    for test in _pick(tests, EXP1_TESTS):
        for alpha in _pick(alphas, EXP1_ALPHAS):
            for rule in _pick(rules, EXP1_RULES):
                cfg = RunConfig(f"{test}:{float(alpha)!r}", rule,
                                HyperParams(eta, gamma, cg_eps), iterations, seed=seed)
                out.append((f"{test}/{run_name(cfg)}", cfg))
    return out


def exp2(dims: Optional[Sequence[int]] = None, rules: Optional[Sequence[str]] = None,
         etas: Optional[Sequence[float]] = None, gamma: float = 1.0, seed: int = 7,
         max_passes: int = EXP2_PASS_BUDGET, record_every: int = 10,
         cg_eps: float = 1e-6) -> List[Tuple[str, RunConfig]]:
    out = []
    for d in _pick(dims, EXP2_DIMS):
        for rule in _pick(rules, EXP2_RULES):
            for eta in _pick(etas, EXP2_ETAS):
                cfg = RunConfig(f"covariance:{int(d)}", rule, HyperParams(eta, gamma, cg_eps),
                                iterations=max_passes, seed=seed, record_every=record_every,
                                max_passes=max_passes)
                out.append((f"d{int(d)}/{run_name(cfg)}", cfg))
    return out


def exp3(rules: Optional[Sequence[str]] = None, etas: Optional[Sequence[float]] = None,
         gamma: float = 1.0, iterations: int = 2000, seed: int = 0, record_every: int = 50,
         full: bool = False, cg_eps: float = 1e-6) -> List[Tuple[str, RunConfig]]:
    game = "gmm-gan:full" if full else "gmm-gan"
    out = []
    for rule in _pick(rules, EXP3_RULES):
        for eta in _pick(etas, EXP3_ETAS):
            cfg = RunConfig(game, rule, HyperParams(eta, gamma, cg_eps), iterations,
                            seed=seed, record_every=record_every)
            out.append((run_name(cfg), cfg))
    return out


PRESETS = {"exp1": exp1, "exp2": exp2, "exp3": exp3}
