"""Built-in games with exact derivatives.

Scalar test problems (``m = n = 1``)::

    bilinear        f =  alpha x y
    quadratic-cc    f =  alpha (x^2 - y^2)     convex-concave
    quadratic-xc    f =  alpha (-x^2 + y^2)    concave-convex

and the covariance-estimation game, all zero-sum (``g = -f``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import GameOracle, JointState

GAME_NAMES = ("bilinear:alpha", "quadratic-cc:alpha", "quadratic-xc:alpha", "covariance:d",
              "covariance-verbatim:d", "gmm-gan")

DEFAULT_START = (0.5, 0.5)

# stream ids fed to SeedSequence([seed, stream])
STREAM_FACTOR = 0
STREAM_INIT = 1
STREAM_SAMPLES = 2


def generator(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based Philox generator, reproducible across platforms for a given seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


class _ScalarGame(GameOracle):
    m = 1
    n = 1
    is_zero_sum = True

    def default_state(self) -> JointState:
        return JointState([DEFAULT_START[0]], [DEFAULT_START[1]])

    def eval_g(self, s):
        return -self.eval_f(s)


class BilinearGame(_ScalarGame):
    def __init__(self, alpha: float):
        self.alpha = float(alpha)

    def __repr__(self):
        return f"BilinearGame(alpha={self.alpha})"

    def eval_f(self, s):
        return float(self.alpha * s.x[0] * s.y[0])

    def grad_x_f(self, s):
        return self.alpha * s.y

    def grad_y_g(self, s):
        return -self.alpha * s.x

    def hvp_xy_f(self, s, v):
        return self.alpha * np.asarray(v, dtype=np.float64)

    def hvp_yx_g(self, s, v):
        return -self.alpha * np.asarray(v, dtype=np.float64)

    def hvp_xx_f(self, s, v):
        return np.zeros(1)

    def hvp_yy_g(self, s, v):
        return np.zeros(1)


class QuadraticGame(_ScalarGame):
    """``f = sign * alpha * (x^2 - y^2)``; ``sign=+1`` convex-concave, ``-1`` concave-convex."""

    def __init__(self, alpha: float, sign: str = "convex-concave"):
        if sign not in ("convex-concave", "concave-convex"):
            raise ValueError(f"sign must be 'convex-concave' or 'concave-convex', got {sign!r}")
        self.alpha = float(alpha)
        self.sign = sign
        self._c = self.alpha if sign == "convex-concave" else -self.alpha

    def __repr__(self):
        return f"QuadraticGame(alpha={self.alpha}, sign={self.sign!r})"

    def eval_f(self, s):
        return float(self._c * (s.x[0] ** 2 - s.y[0] ** 2))

    def grad_x_f(self, s):
        return 2.0 * self._c * s.x

    def grad_y_g(self, s):
        return 2.0 * self._c * s.y

    def hvp_xy_f(self, s, v):
        return np.zeros(1)

    def hvp_yx_g(self, s, v):
        return np.zeros(1)

    def hvp_xx_f(self, s, v):
        return 2.0 * self._c * np.asarray(v, dtype=np.float64)

    def hvp_yy_g(self, s, v):
        return 2.0 * self._c * np.asarray(v, dtype=np.float64)


def bilinear_oracle(alpha: float) -> BilinearGame:
    return BilinearGame(alpha)


def quadratic_oracle(alpha: float, sign: str = "convex-concave") -> QuadraticGame:
    return QuadraticGame(alpha, sign)


@dataclass
class CovarianceGame:
    """Problem data of the covariance game.

    Strategies are ``W`` (player 1) and ``V`` (player 2), both ``d x d`` and
    flattened row-major, so ``x = W.ravel()`` and ``y = V.ravel()``.

    The payoff is ``f(W, V) = <W, sigma_hat - V noise_cov V^T>`` (Frobenius).
    ``noise_cov`` is the covariance of the generator's input noise: the
    identity in deterministic mode.  ``payoff="verbatim"`` puts ``sigma_hat``
    in that slot instead.
    """

    d: int
    U: np.ndarray
    sigma_hat: np.ndarray
    noise_cov: np.ndarray
    payoff: str = "noise"

    @property
    def sigma(self) -> np.ndarray:
        return self.U @ self.U.T

    def unpack(self, s: JointState) -> Tuple[np.ndarray, np.ndarray]:
        d = self.d
        return s.x.reshape(d, d), s.y.reshape(d, d)


class CovarianceOracle(GameOracle):
    is_zero_sum = True

    def __init__(self, game: CovarianceGame, seed: int = 0):
        self.game = game
        self.seed = seed
        self.m = self.n = game.d * game.d
        self._S = game.sigma_hat
        self._G = game.noise_cov

    def __repr__(self):
        return f"CovarianceOracle(d={self.game.d}, payoff={self.game.payoff!r})"

    def _wv(self, s):
        self.check_state(s)
        return self.game.unpack(s)

    def _mat(self, v):
        d = self.game.d
        return np.asarray(v, dtype=np.float64).reshape(d, d)

    def eval_f(self, s):
        W, V = self._wv(s)
        return float(np.sum(W * (self._S - V @ self._G @ V.T)))

    def eval_g(self, s):
        return -self.eval_f(s)

    def grad_x_f(self, s):
        W, V = self._wv(s)
        return (self._S - V @ self._G @ V.T).ravel()

    def grad_y_g(self, s):
        W, V = self._wv(s)
        return ((W + W.T) @ V @ self._G).ravel()

    def hvp_xy_f(self, s, v):
        W, V = self._wv(s)
        dV = self._mat(v)
        B = dV @ self._G @ V.T
        return -(B + B.T).ravel()

    def hvp_yx_g(self, s, v):
        W, V = self._wv(s)
        dW = self._mat(v)
        return ((dW + dW.T) @ V @ self._G).ravel()

    def hvp_xx_f(self, s, v):
        return np.zeros(self.m)

    def hvp_yy_g(self, s, v):
        W, V = self._wv(s)
        return ((W + W.T) @ self._mat(v) @ self._G).ravel()

    def residual(self, s):
        return covariance_residual(self.game, s)

    def default_state(self):
        return covariance_init(self.game, self.seed)


def covariance_oracle(d: int, seed: int = 0, deterministic: bool = True,
                      samples: int = 1000, payoff: str = "noise") -> Tuple[CovarianceOracle, CovarianceGame]:
    """Build the covariance game with ``U`` i.i.d. standard Gaussian.

    In deterministic mode ``sigma_hat = U U^T`` and the noise covariance is
    the identity.  Otherwise both are empirical covariances of ``samples``
    draws (data ``U z`` and noise ``z`` with independent ``z``).
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if payoff not in ("noise", "verbatim"):
        raise ValueError(f"payoff must be 'noise' or 'verbatim', got {payoff!r}")
    U = generator(seed, STREAM_FACTOR).standard_normal((d, d))
    if deterministic:
        sigma_hat = U @ U.T
        noise_cov = np.eye(d)
    else:
        rng = generator(seed, STREAM_SAMPLES)
        X = U @ rng.standard_normal((d, samples))
        Z = rng.standard_normal((d, samples))
        sigma_hat = X @ X.T / samples
        noise_cov = Z @ Z.T / samples
    if payoff == "verbatim":
        noise_cov = sigma_hat
    game = CovarianceGame(d, U, sigma_hat, noise_cov, payoff)
    return CovarianceOracle(game, seed), game


def covariance_residual(game: CovarianceGame, s: JointState) -> float:
    """``||W + W^T||_F / 2 + ||U U^T - V V^T||_F``."""
    W, V = game.unpack(s)
    return float(np.linalg.norm(W + W.T) / 2.0 + np.linalg.norm(game.sigma - V @ V.T))


def covariance_init(game: CovarianceGame, seed: int) -> JointState:
    """``W = dW``, ``V = U + dV`` with entries of ``dW, dV`` uniform on [-0.5, 0.5]."""
    rng = generator(seed, STREAM_INIT)
    d = game.d
    dW = rng.uniform(-0.5, 0.5, (d, d))
    dV = rng.uniform(-0.5, 0.5, (d, d))
    return JointState(dW.ravel(), (game.U + dV).ravel())


_SCALAR = re.compile(r"^(bilinear|quadratic-cc|quadratic-xc):([-+0-9.eE]+)$")
_COV = re.compile(r"^(covariance|covariance-verbatim):(\d+)$")


def make_game(name: str, seed: int = 0, gan_overrides: Optional[dict] = None) -> GameOracle:
    """Build an oracle from a CLI game name such as ``bilinear:3.0`` or ``covariance:20``."""
    t = name.strip().lower()
    m = _SCALAR.match(t)
    if m:
        kind, alpha = m.group(1), float(m.group(2))
        if kind == "bilinear":
            return BilinearGame(alpha)
        return QuadraticGame(alpha, "convex-concave" if kind == "quadratic-cc" else "concave-convex")
    m = _COV.match(t)
    if m:
        payoff = "verbatim" if m.group(1) == "covariance-verbatim" else "noise"
        return covariance_oracle(int(m.group(2)), seed, payoff=payoff)[0]
    if t == "gmm-gan" or t.startswith("gmm-gan:"):
        from .nets import make_gan
        return make_gan(t, seed, gan_overrides or {})
    raise ValueError(f"unknown game {name!r}; valid games: {', '.join(GAME_NAMES)}")
