"""Finite-difference Hessian-vector products and forward-pass accounting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .core import GameOracle, JointState, joint_norm

GradPair = Callable[[JointState], Tuple[np.ndarray, np.ndarray]]

# which -> (slot perturbed, gradient differentiated)
_SLOTS = {
    "xy": ("y", 0),
    "yx": ("x", 1),
    "xx": ("x", 0),
    "yy": ("y", 1),
}

_TINY = 1e-300


@dataclass(frozen=True)
class FdConfig:
    step_mode: str = "central"
    base_step: Optional[float] = None

    def __post_init__(self):
        if self.step_mode not in ("central", "forward"):
            raise ValueError(f"step_mode must be 'central' or 'forward', got {self.step_mode!r}")
        if self.base_step is not None and not self.base_step > 0:
            raise ValueError(f"base_step must be > 0, got {self.base_step}")

    @property
    def step(self) -> float:
        if self.base_step is not None:
            return self.base_step
        return 1e-5 if self.step_mode == "central" else 1e-6


def fd_hvp(grad: GradPair, s: JointState, v: np.ndarray, which: str,
           cfg: FdConfig = FdConfig(), base: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> np.ndarray:
    """Directional derivative of one gradient along ``v`` by finite differences.

    ``grad(s)`` returns the pair ``(grad_x f, grad_y g)``.  ``which`` picks the
    block: ``"xy"`` differentiates ``grad_x f`` along ``y``, ``"yx"``
    differentiates ``grad_y g`` along ``x``, and so on.  ``base`` may carry an
    already computed ``grad(s)`` to save one evaluation in forward mode.

    The step is ``base_step * (1 + ||s||) / ||v||``, so the perturbation
    of the state has length ``base_step * (1 + ||s||)`` whatever the scale of ``v``.
    """
    try:
        slot, out = _SLOTS[which]
    except KeyError:
        raise ValueError(f"which must be one of {sorted(_SLOTS)}, got {which!r}") from None
    v = np.asarray(v, dtype=np.float64)
    expected = s.m if slot == "x" else s.n
    if v.shape != (expected,):
        raise ValueError(f"direction has shape {v.shape}, {which} block needs ({expected},)")

    vnorm = float(np.linalg.norm(v))
    if vnorm == 0.0:
        return np.zeros(s.m if out == 0 else s.n)
    h = cfg.step * (1.0 + joint_norm(s)) / max(vnorm, _TINY)

    def shifted(t):
        if slot == "x":
            return JointState(s.x + t * v, s.y)
        return JointState(s.x, s.y + t * v)

    plus = grad(shifted(h))[out]
    if cfg.step_mode == "central":
        minus = grad(shifted(-h))[out]
        d = (plus - minus) / (2.0 * h)
    else:
        g0 = (base if base is not None else grad(s))[out]
        d = (plus - g0) / h
    if not np.all(np.isfinite(d)):
        raise FloatingPointError(f"non-finite gradient while differencing the {which} block")
    return d


class FdOracle(GameOracle):
    """Wraps an oracle, replacing its four HVPs by finite differences of its gradients."""

    def __init__(self, inner: GameOracle, cfg: FdConfig = FdConfig()):
        self.inner = inner
        self.cfg = cfg
        self.m, self.n = inner.m, inner.n
        self.is_zero_sum = inner.is_zero_sum

    def _grads(self, s):
        return self.inner.grad_x_f(s), self.inner.grad_y_g(s)

    def eval_f(self, s):
        return self.inner.eval_f(s)

    def eval_g(self, s):
        return self.inner.eval_g(s)

    def grad_x_f(self, s):
        return self.inner.grad_x_f(s)

    def grad_y_g(self, s):
        return self.inner.grad_y_g(s)

    def hvp_xy_f(self, s, v):
        return fd_hvp(self._grads, s, v, "xy", self.cfg)

    def hvp_yx_g(self, s, v):
        return fd_hvp(self._grads, s, v, "yx", self.cfg)

    def hvp_xx_f(self, s, v):
        return fd_hvp(self._grads, s, v, "xx", self.cfg)

    def hvp_yy_g(self, s, v):
        return fd_hvp(self._grads, s, v, "yy", self.cfg)

    def new_iteration(self):
        self.inner.new_iteration()

    def default_state(self):
        return self.inner.default_state()

    def residual(self, s):
        return self.inner.residual(s)


@dataclass
class PassCounter:
    forward_passes: int = 0

    def add(self, k: int) -> None:
        self.forward_passes += k

    def reset(self) -> None:
        self.forward_passes = 0


# Cost model: one pass per function value, gradient, or Hessian-vector product.
# This is the only small-integer model that reproduces OGDA=2, SGA=4, ConOpt=6
# and CGD=4+2*(CG applies) at once.
EVAL_COST = 1
GRAD_COST = 1
HVP_COST = 1


class CountingOracle(GameOracle):
    """Transparent wrapper that charges every call to a :class:`PassCounter`."""

    def __init__(self, inner: GameOracle, counter: PassCounter):
        self.inner = inner
        self.counter = counter
        self.m, self.n = inner.m, inner.n
        self.is_zero_sum = inner.is_zero_sum

    def eval_f(self, s):
        self.counter.add(EVAL_COST)
        return self.inner.eval_f(s)

    def eval_g(self, s):
        self.counter.add(EVAL_COST)
        return self.inner.eval_g(s)

    def grad_x_f(self, s):
        self.counter.add(GRAD_COST)
        return self.inner.grad_x_f(s)

    def grad_y_g(self, s):
        self.counter.add(GRAD_COST)
        return self.inner.grad_y_g(s)

    def hvp_xy_f(self, s, v):
        self.counter.add(HVP_COST)
        return self.inner.hvp_xy_f(s, v)

    def hvp_yx_g(self, s, v):
        self.counter.add(HVP_COST)
        return self.inner.hvp_yx_g(s, v)

    def hvp_xx_f(self, s, v):
        self.counter.add(HVP_COST)
        return self.inner.hvp_xx_f(s, v)

    def hvp_yy_g(self, s, v):
        self.counter.add(HVP_COST)
        return self.inner.hvp_yy_g(s, v)

    def new_iteration(self):
        self.inner.new_iteration()

    def default_state(self):
        return self.inner.default_state()

    def residual(self, s):
        return self.inner.residual(s)

    def check_state(self, s):
        self.inner.check_state(s)


def counting_oracle(o: GameOracle, counter: PassCounter) -> CountingOracle:
    return CountingOracle(o, counter)


HVP_NAMES = ("hvp_xy_f", "hvp_yx_g", "hvp_xx_f", "hvp_yy_g")


def fd_agreement(o: GameOracle, probes, cfg: FdConfig = FdConfig(), seed: int = 0) -> float:
    """Largest relative gap between ``o``'s HVPs and FD HVPs over ``probes``.

    Each probe uses a fresh Gaussian direction; gaps are scaled by
    ``max(||analytic||_inf, 1)``.
    """
    rng = np.random.default_rng(seed)
    fd = FdOracle(o, cfg)
    worst = 0.0
    for s in probes:
        for name in HVP_NAMES:
            dim = o.n if name in ("hvp_xy_f", "hvp_yy_g") else o.m
            v = rng.standard_normal(dim)
            a, b = getattr(o, name)(s, v), getattr(fd, name)(s, v)
            scale = max(float(np.max(np.abs(a), initial=0.0)), 1.0)
            worst = max(worst, float(np.max(np.abs(a - b), initial=0.0)) / scale)
    return worst
