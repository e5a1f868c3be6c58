"""Domain types shared by every part of the library.

A two-player game is ``min_x f(x, y)``, ``min_y g(x, y)`` with
``x`` in R^m and ``y`` in R^n.  Rules and solvers never see structured
parameters: every game flattens its strategies into two flat float64
vectors held by :class:`JointState`.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

#: Joint norm above which a run is considered diverged.
DIVERGENCE_NORM = 1e10


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True).reshape(-1)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class JointState:
    """Pair of strategy vectors ``(x, y)``; arrays are read-only copies."""

    x: np.ndarray
    y: np.ndarray
    diverged: bool = False

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x))
        object.__setattr__(self, "y", _frozen(self.y))

    @property
    def m(self) -> int:
        return self.x.size

    @property
    def n(self) -> int:
        return self.y.size

    def concat(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])

    def scaled(self, c: float) -> "JointState":
        return JointState(c * self.x, c * self.y)

    def moved(self, dx: np.ndarray, dy: np.ndarray) -> "JointState":
        return JointState(self.x + dx, self.y + dy)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y)))

    def __eq__(self, other):
        if not isinstance(other, JointState):
            return NotImplemented
        return (np.array_equal(self.x, other.x) and np.array_equal(self.y, other.y)
                and self.diverged == other.diverged)

    __hash__ = None


def joint_norm(s: JointState) -> float:
    """Euclidean norm of the concatenation of ``x`` and ``y``."""
    v = s.concat()
    big = float(np.max(np.abs(v), initial=0.0))
    if big == 0.0 or not np.isfinite(big):
        return float(np.linalg.norm(v))
    # rescale so tiny or huge entries do not under/overflow when squared
    return big * float(np.linalg.norm(v / big))


def is_diverged(s: JointState) -> bool:
    if s.diverged or not s.is_finite():
        return True
    return joint_norm(s) > DIVERGENCE_NORM


@dataclass(frozen=True)
class HyperParams:
    eta: float
    gamma: float = 1.0
    cg_epsilon: float = 1e-6
    # None means: twice the operator dimension plus 5, capped at 500
    cg_max_iters: Optional[int] = None
    neumann_order: int = 0

    def __post_init__(self):
        bad = []
        if not self.eta > 0:
            bad.append(f"eta must be > 0 (got {self.eta})")
        if not self.gamma >= 0:
            bad.append(f"gamma must be >= 0 (got {self.gamma})")
        if not self.cg_epsilon > 0:
            bad.append(f"cg_epsilon must be > 0 (got {self.cg_epsilon})")
        if self.cg_max_iters is not None and self.cg_max_iters < 1:
            bad.append(f"cg_max_iters must be >= 1 (got {self.cg_max_iters})")
        if self.neumann_order < 0:
            bad.append(f"neumann_order must be >= 0 (got {self.neumann_order})")
        if bad:
            raise ValueError("; ".join(bad))


class GameOracle(abc.ABC):
    """Evaluation interface for a two-player game.

    Subclasses provide ``m``, ``n``, ``is_zero_sum`` and the eight
    evaluation methods.  The HVP methods follow the naming
    ``hvp_<ab>_<h>(s, v) = D^2_{ab} h . v``, so ``hvp_xy_f`` takes a vector
    of length ``n`` and returns one of length ``m``.
    """

    m: int
    n: int
    is_zero_sum: bool = False

    @abc.abstractmethod
    def eval_f(self, s: JointState) -> float: ...

    @abc.abstractmethod
    def eval_g(self, s: JointState) -> float: ...

    @abc.abstractmethod
    def grad_x_f(self, s: JointState) -> np.ndarray: ...

    @abc.abstractmethod
    def grad_y_g(self, s: JointState) -> np.ndarray: ...

    @abc.abstractmethod
    def hvp_xy_f(self, s: JointState, v: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def hvp_yx_g(self, s: JointState, v: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def hvp_xx_f(self, s: JointState, v: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def hvp_yy_g(self, s: JointState, v: np.ndarray) -> np.ndarray: ...

    def new_iteration(self) -> None:
        """Hook called once per outer iteration (stochastic games resample here)."""

    def default_state(self) -> JointState:
        raise NotImplementedError(f"{type(self).__name__} has no default initial state")

    def residual(self, s: JointState) -> float:
        """Progress metric recorded by the harness; joint norm unless overridden."""
        return joint_norm(s)

    def check_state(self, s: JointState) -> None:
        if s.m != self.m or s.n != self.n:
            raise ValueError(
                f"state dimensions (m={s.m}, n={s.n}) do not match oracle (m={self.m}, n={self.n})")


@dataclass
class Violation:
    check: str
    state_index: int
    error: float
    detail: str = ""

    def __str__(self):
        return f"[{self.check}] state {self.state_index}: error {self.error:.3e} {self.detail}".rstrip()


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    diff = float(np.linalg.norm(np.asarray(a) - np.asarray(b)))
    if diff == 0.0:
        return 0.0
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)))
    return diff / scale if scale > 0 else np.inf


def random_states(o: GameOracle, count: int, seed: int = 0, scale: float = 1.0) -> list:
    rng = np.random.default_rng(seed)
    return [JointState(scale * rng.standard_normal(o.m), scale * rng.standard_normal(o.n))
            for _ in range(count)]


def validate_oracle(o: GameOracle, probe_states: Sequence[JointState], tol: float,
                    seed: int = 0) -> list:
    """Check zero-sum consistency, HVP linearity and (zero-sum) transpose consistency.

    Returns a list of :class:`Violation` for every check whose relative error
    exceeds ``tol``; an empty list means the oracle passed.  Dimension mismatches raise.
    """
    rng = np.random.default_rng(seed)
    report = []
    for i, s in enumerate(probe_states):
        o.check_state(s)
        if o.is_zero_sum:
            f, g = o.eval_f(s), o.eval_g(s)
            err = abs(f + g) / max(abs(f), abs(g), 1.0)
            if not err <= tol:
                report.append(Violation("zero-sum", i, err, f"f={f!r} g={g!r}"))

        for name, dim in (("hvp_xy_f", o.n), ("hvp_yx_g", o.m), ("hvp_xx_f", o.m), ("hvp_yy_g", o.n)):
            hvp = getattr(o, name)
            v, w = rng.standard_normal(dim), rng.standard_normal(dim)
            a, b = rng.standard_normal(2)
            lhs = hvp(s, a * v + b * w)
            rhs = a * hvp(s, v) + b * hvp(s, w)
            err = _rel_err(lhs, rhs)
            if not err <= tol:
                report.append(Violation("linearity", i, err, name))

        if o.is_zero_sum:
            u, v = rng.standard_normal(o.m), rng.standard_normal(o.n)
            hv, hu = o.hvp_xy_f(s, v), o.hvp_yx_g(s, u)
            left, right = float(u @ hv), -float(hu @ v)
            # scale by the Cauchy-Schwarz bound so cancellation inside the dot product is not penalised
            scale = max(np.linalg.norm(u) * np.linalg.norm(hv), np.linalg.norm(hu) * np.linalg.norm(v))
            err = abs(left - right) / scale if left != right else 0.0
            if not err <= tol:
                report.append(Violation("transpose", i, err, f"{left!r} vs {right!r}"))
    return report
