"""Update rules for two-player games.

Every rule returns the step ``eta * direction`` so stepsizes mean the same
thing across rules.  With ``gx = grad_x f`` and ``gy = grad_y g``:

=========  ==============================================================
gda        ``-eta gx``
lcgd       ``-eta (gx - eta D_xy f gy)``
sga        ``-eta (gx + gamma D_xy f grad_y f)``          (zero-sum only)
conopt     sga ``- eta gamma D_xx f gx``                  (zero-sum only)
ogda       ``-eta (2 gx_k - gx_{k-1})``
cgd        ``-eta (Id - eta^2 D_xy f D_yx g)^{-1} (gx - eta D_xy f gy)``
=========  ==============================================================

and the mirrored expressions for ``y``.  CGD solves only one side by CG;
the other player's step is its exact best response to that move.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .core import GameOracle, HyperParams, JointState
from .linalg import CgError, cg_solve, default_max_iters, operator_from_game
from .oracles import PassCounter, counting_oracle

RULE_NAMES = ("gda", "lcgd", "sga", "conopt", "ogda", "cgd", "cgd-neumann:N")


class UnsupportedRuleError(ValueError):
    """The rule is not defined for this kind of game."""


@dataclass
class StepReport:
    delta_x: np.ndarray
    delta_y: np.ndarray
    rule_name: str
    cg_iterations_x: int = 0
    cg_iterations_y: int = 0
    forward_passes: int = 0
    diverged: bool = False
    message: str = ""
    cg_applies: int = 0
    # raw gradients at the step's base point; RMSProp feeds on these
    grad_x: Optional[np.ndarray] = field(default=None, repr=False)
    grad_y: Optional[np.ndarray] = field(default=None, repr=False)

    def apply(self, s: JointState) -> JointState:
        return s.moved(self.delta_x, self.delta_y)


@dataclass
class OgdaMemory:
    previous_grad_x: Optional[np.ndarray] = None
    previous_grad_y: Optional[np.ndarray] = None


def _report(name, counter, dx, dy, gx, gy, **kw) -> StepReport:
    finite = bool(np.all(np.isfinite(dx)) and np.all(np.isfinite(dy)))
    rep = StepReport(dx, dy, name, forward_passes=counter.forward_passes,
                     grad_x=gx, grad_y=gy, **kw)
    if not finite:
        rep.diverged = True
        rep.message = rep.message or "non-finite step"
    return rep


def _require_zero_sum(o: GameOracle, name: str):
    if not o.is_zero_sum:
        raise UnsupportedRuleError(f"{name} is only defined for zero-sum games")


def step_gda(o: GameOracle, s: JointState, h: HyperParams) -> StepReport:
    c = PassCounter()
    o = counting_oracle(o, c)
    gx, gy = o.grad_x_f(s), o.grad_y_g(s)
    return _report("gda", c, -h.eta * gx, -h.eta * gy, gx, gy)


def _competitive_rhs(o, s, gx, gy, eta):
    """The right-hand sides ``gx - eta D_xy f gy`` and ``gy - eta D_yx g gx``."""
    return gx - eta * o.hvp_xy_f(s, gy), gy - eta * o.hvp_yx_g(s, gx)


def step_lcgd(o: GameOracle, s: JointState, h: HyperParams) -> StepReport:
    c = PassCounter()
    o = counting_oracle(o, c)
    gx, gy = o.grad_x_f(s), o.grad_y_g(s)
    rx, ry = _competitive_rhs(o, s, gx, gy, h.eta)
    return _report("lcgd", c, -h.eta * rx, -h.eta * ry, gx, gy)


def _sga_directions(o, s, gx, gy, gamma):
    # zero-sum: grad_y f = -gy and grad_x g = -gx
    return gx + gamma * o.hvp_xy_f(s, -gy), gy + gamma * o.hvp_yx_g(s, -gx)


def step_sga(o: GameOracle, s: JointState, h: HyperParams) -> StepReport:
    _require_zero_sum(o, "sga")
    c = PassCounter()
    o = counting_oracle(o, c)
    gx, gy = o.grad_x_f(s), o.grad_y_g(s)
    ux, uy = _sga_directions(o, s, gx, gy, h.gamma)
    return _report("sga", c, -h.eta * ux, -h.eta * uy, gx, gy)


def step_conopt(o: GameOracle, s: JointState, h: HyperParams) -> StepReport:
    """SGA plus the consensus term ``gamma * D_xx f gx`` (and ``gamma * D_yy g gy``)."""
    _require_zero_sum(o, "conopt")
    c = PassCounter()
    o = counting_oracle(o, c)
    gx, gy = o.grad_x_f(s), o.grad_y_g(s)
    ux, uy = _sga_directions(o, s, gx, gy, h.gamma)
    ux = ux + h.gamma * o.hvp_xx_f(s, gx)
    uy = uy + h.gamma * o.hvp_yy_g(s, gy)
    return _report("conopt", c, -h.eta * ux, -h.eta * uy, gx, gy)


def step_ogda(o: GameOracle, s: JointState, h: HyperParams,
              mem: Optional[OgdaMemory] = None) -> Tuple[StepReport, OgdaMemory]:
    """Optimistic GDA; an empty memory treats the previous gradient as the current one."""
    c = PassCounter()
    o = counting_oracle(o, c)
    gx, gy = o.grad_x_f(s), o.grad_y_g(s)
    mem = mem or OgdaMemory()
    px = gx if mem.previous_grad_x is None else mem.previous_grad_x
    py = gy if mem.previous_grad_y is None else mem.previous_grad_y
    rep = _report("ogda", c, -h.eta * (2.0 * gx - px), -h.eta * (2.0 * gy - py), gx, gy)
    return rep, OgdaMemory(gx, gy)


def step_cgd(o: GameOracle, s: JointState, h: HyperParams, solve_for: str = "x") -> StepReport:
    """Competitive gradient descent with one CG solve per step.

    ``solve_for`` selects the player whose equilibrium system is solved; the
    other player's step is then ``-eta (grad + D^2_mixed . delta_solved)``.
    A CG failure returns a report flagged ``diverged`` with the reason.
    """
    c = PassCounter()
    o = counting_oracle(o, c)
    eta = h.eta
    gx, gy = o.grad_x_f(s), o.grad_y_g(s)
    if solve_for == "x":
        rhs = gx - eta * o.hvp_xy_f(s, gy)
        dim = o.m
    elif solve_for == "y":
        rhs = gy - eta * o.hvp_yx_g(s, gx)
        dim = o.n
    else:
        raise ValueError(f"solve_for must be 'x' or 'y', got {solve_for!r}")

    M = operator_from_game(o, s, eta, solve_for)
    max_iters = h.cg_max_iters or default_max_iters(dim)
    try:
        res = cg_solve(M, rhs, h.cg_epsilon, max_iters)
    except CgError as exc:
        zx, zy = np.full(o.m, np.nan), np.full(o.n, np.nan)
        rep = _report("cgd", c, zx, zy, gx, gy, message=f"cg error: {exc}")
        rep.diverged = True
        return rep

    if solve_for == "x":
        dx = -eta * res.solution
        dy = -eta * (gy + o.hvp_yx_g(s, dx))
        its = dict(cg_iterations_x=res.iterations)
    else:
        dy = -eta * res.solution
        dx = -eta * (gx + o.hvp_xy_f(s, dy))
        its = dict(cg_iterations_y=res.iterations)
    rep = _report("cgd", c, dx, dy, gx, gy, cg_applies=res.applies, **its)
    if not res.converged:
        rep.diverged = True
        rep.message = (f"cg did not converge in {res.iterations} iterations "
                       f"(residual {res.final_residual_norm:.3e})")
    return rep


def step_neumann(o: GameOracle, s: JointState, h: HyperParams, truncate_rhs: bool = False) -> StepReport:
    """Order-N partial sum of the Neumann series of the equilibrium inverse.

    ``x`` uses ``sum_{k<=N} A^k`` with ``A = eta^2 D_xy f D_yx g`` applied to
    the CGD right-hand side, ``y`` the mirrored sum.  Order 0 reproduces LCGD;
    with ``truncate_rhs`` the competitive term is dropped too and order 0 is GDA.
    The series only converges when ``eta^2 ||D_xy f D_yx g|| < 1``.
    """
    c = PassCounter()
    o = counting_oracle(o, c)
    eta, e2 = h.eta, h.eta * h.eta
    gx, gy = o.grad_x_f(s), o.grad_y_g(s)
    if truncate_rhs:
        rx, ry = gx, gy
    else:
        rx, ry = _competitive_rhs(o, s, gx, gy, eta)
    tx, ty = rx, ry
    for _ in range(h.neumann_order):
        tx = e2 * o.hvp_xy_f(s, o.hvp_yx_g(s, tx))
        ty = e2 * o.hvp_yx_g(s, o.hvp_xy_f(s, ty))
        rx = rx + tx
        ry = ry + ty
    name = f"cgd-neumann:{h.neumann_order}"
    return _report(name, c, -eta * rx, -eta * ry, gx, gy)


_NEUMANN = re.compile(r"^cgd-neumann:(\d+)(:gda)?$")


@dataclass(frozen=True)
class RuleSpec:
    """Parsed rule name; ``cgd-neumann:N`` optionally suffixed ``:gda`` for truncated rhs."""

    name: str
    neumann_order: int = 0
    truncate_rhs: bool = False

    @classmethod
    def parse(cls, text: str) -> "RuleSpec":
        t = text.strip().lower()
        if t in ("gda", "lcgd", "sga", "conopt", "ogda", "cgd"):
            return cls(t)
        m = _NEUMANN.match(t)
        if m:
            return cls("cgd-neumann", int(m.group(1)), bool(m.group(2)))
        raise ValueError(f"unknown rule {text!r}; valid rules: {', '.join(RULE_NAMES)}")

    def __str__(self):
        if self.name == "cgd-neumann":
            return f"cgd-neumann:{self.neumann_order}" + (":gda" if self.truncate_rhs else "")
        return self.name

    @property
    def needs_zero_sum(self) -> bool:
        return self.name in ("sga", "conopt")


class Stepper:
    """Carries per-run rule state (OGDA memory, CGD side alternation)."""

    def __init__(self, rule: RuleSpec, cgd_side: str = "alternate"):
        if cgd_side not in ("alternate", "x", "y"):
            raise ValueError(f"cgd_side must be 'alternate', 'x' or 'y', got {cgd_side!r}")
        self.rule = rule
        self.cgd_side = cgd_side
        self.memory = OgdaMemory()

    def __call__(self, o: GameOracle, s: JointState, h: HyperParams, k: int) -> StepReport:
        name = self.rule.name
        if name == "gda":
            return step_gda(o, s, h)
        if name == "lcgd":
            return step_lcgd(o, s, h)
        if name == "sga":
            return step_sga(o, s, h)
        if name == "conopt":
            return step_conopt(o, s, h)
        if name == "ogda":
            rep, self.memory = step_ogda(o, s, h, self.memory)
            return rep
        if name == "cgd":
            side = self.cgd_side
            if side == "alternate":
                side = "x" if k % 2 == 0 else "y"
            return step_cgd(o, s, h, side)
        if name == "cgd-neumann":
            if h.neumann_order != self.rule.neumann_order:
                h = HyperParams(h.eta, h.gamma, h.cg_epsilon, h.cg_max_iters, self.rule.neumann_order)
            return step_neumann(o, s, h, self.rule.truncate_rhs)
        raise ValueError(f"unknown rule {name!r}")
