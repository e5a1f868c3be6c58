"""Matrix-free operators and plain conjugate gradients for the equilibrium term."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import GameOracle, JointState

MAX_CG_ITERS = 500
RESIDUAL_REFRESH = 50


class CgError(ArithmeticError):
    """CG met a non-finite value or zero curvature (indefinite or ill-scaled operator)."""


@dataclass
class LinearOperator:
    matvec: Callable[[np.ndarray], np.ndarray]
    dim: int

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.matvec(v)

    def __matmul__(self, v):
        return self.apply(v)

    @classmethod
    def from_matrix(cls, a) -> "LinearOperator":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        return cls(lambda v: a @ v, a.shape[0])

    @classmethod
    def identity(cls, dim: int) -> "LinearOperator":
        return cls(lambda v: np.array(v, dtype=np.float64), dim)


@dataclass
class CgResult:
    solution: np.ndarray
    iterations: int
    final_residual_norm: float
    converged: bool
    # operator applications, including periodic residual refreshes
    applies: int = 0


def default_max_iters(dim: int) -> int:
    # finite termination takes dim steps in exact arithmetic; roundoff needs slack
    return max(1, min(2 * dim + 5, MAX_CG_ITERS))


def cg_solve(M: LinearOperator, b: np.ndarray, epsilon: float = 1e-6,
             max_iters: Optional[int] = None) -> CgResult:
    """Solve ``M x = b`` for symmetric positive definite ``M`` by plain CG.

    Starts from ``x = 0`` and stops once ``||M x - b|| <= epsilon * ||x||``,
    checked from the first iteration on.  A zero right-hand side returns
    zero immediately.  The residual is recomputed from scratch every
    ``RESIDUAL_REFRESH`` iterations.  If the iteration cap is hit, the iterate
    with the smallest residual is returned with ``converged=False``.
    """
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if b.size != M.dim:
        raise ValueError(f"rhs has length {b.size}, operator has dimension {M.dim}")
    if not np.all(np.isfinite(b)):
        raise CgError("non-finite right-hand side")
    if max_iters is None:
        max_iters = default_max_iters(M.dim)

    x = np.zeros_like(b)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return CgResult(x, 0, 0.0, True, 0)

    r = b.copy()
    p = r.copy()
    rr = float(r @ r)
    applies = 0
    best_x, best_res = x, bnorm
    res = bnorm
    for k in range(1, max_iters + 1):
        Ap = M.apply(p)
        applies += 1
        pAp = float(p @ Ap)
        if not np.isfinite(pAp) or pAp == 0.0:
            raise CgError(f"curvature p.Mp = {pAp!r} at iteration {k}")
        alpha = rr / pAp
        x = x + alpha * p
        if k % RESIDUAL_REFRESH == 0:
            r = b - M.apply(x)
            applies += 1
        else:
            r = r - alpha * Ap
        rr_new = float(r @ r)
        if not np.isfinite(rr_new) or not np.all(np.isfinite(x)):
            raise CgError(f"non-finite iterate at iteration {k}")
        res = np.sqrt(rr_new)
        if res < best_res:
            best_x, best_res = x, res
        if res <= epsilon * np.linalg.norm(x):
            return CgResult(x, k, res, True, applies)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return CgResult(best_x, max_iters, best_res, False, applies)


def operator_from_game(o: GameOracle, s: JointState, eta: float, side: str = "x") -> LinearOperator:
    """Equilibrium operator of one player, applied matrix-free.

    ``side="x"``: ``v -> v - eta^2 D_xy f D_yx g v`` on R^m.
    ``side="y"``: ``v -> v - eta^2 D_yx g D_xy f v`` on R^n.
    Each application costs two Hessian-vector products.
    """
    o.check_state(s)
    e2 = eta * eta
    if side in ("x", "player-1", 1):
        return LinearOperator(lambda v: v - e2 * o.hvp_xy_f(s, o.hvp_yx_g(s, v)), o.m)
    if side in ("y", "player-2", 2):
        return LinearOperator(lambda v: v - e2 * o.hvp_yx_g(s, o.hvp_xy_f(s, v)), o.n)
    raise ValueError(f"side must be 'x' or 'y', got {side!r}")
