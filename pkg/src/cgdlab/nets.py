"""Dense ReLU networks with hand-written backprop, and the bimodal GAN game.

Parameters of a :class:`DenseNet` live in one flat vector.  Layer ``l``
contributes its weight matrix ``W_l`` of shape ``(out, in)`` in row-major
order followed by its bias ``b_l`` of length ``out``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from .core import GameOracle, JointState
from .games import STREAM_INIT, STREAM_SAMPLES, generator
from .oracles import FdConfig, fd_hvp


def orthonormal_init(rows: int, cols: int, seed) -> np.ndarray:
    """Orthogonalise a Gaussian matrix.

    Wide matrices (``rows <= cols``) get orthonormal rows and tall ones
    orthonormal columns.  ``seed`` is an int or a numpy Generator.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"shape must be positive, got ({rows}, {cols})")
    rng = seed if isinstance(seed, np.random.Generator) else generator(seed, STREAM_INIT)
    big, small = max(rows, cols), min(rows, cols)
    a = rng.standard_normal((big, small))
    q, r = np.linalg.qr(a)
    # fix signs so the factorisation is unique
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    return q if rows >= cols else q.T


class DenseNet:
    """ReLU after every hidden layer, linear output layer."""

    def __init__(self, layer_dims: Sequence[int]):
        dims = [int(d) for d in layer_dims]
        if len(dims) < 2 or min(dims) < 1:
            raise ValueError(f"need at least input and output dims, all positive; got {dims}")
        self.layer_dims = dims
        self.shapes = list(zip(dims[1:], dims[:-1]))
        self.offsets = []
        off = 0
        for out, inp in self.shapes:
            self.offsets.append((off, off + out * inp, off + out * inp + out))
            off += out * inp + out
        self.num_params = off

    def __repr__(self):
        return f"DenseNet({self.layer_dims})"

    @property
    def in_dim(self):
        return self.layer_dims[0]

    @property
    def out_dim(self):
        return self.layer_dims[-1]

    def layers(self, params):
        for (out, inp), (a, b, c) in zip(self.shapes, self.offsets):
            yield params[a:b].reshape(out, inp), params[b:c]

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        parts = []
        for out, inp in self.shapes:
            parts.append(orthonormal_init(out, inp, rng).ravel())
            parts.append(np.zeros(out))
        return np.concatenate(parts)

    def forward(self, params, z):
        params = np.asarray(params, dtype=np.float64)
        if params.size != self.num_params:
            raise ValueError(f"expected {self.num_params} parameters, got {params.size}")
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        if z.shape[1] != self.in_dim:
            raise ValueError(f"input dim {z.shape[1]} does not match first layer {self.in_dim}")
        acts, pres = [z], []
        a = z
        layers = list(self.layers(params))
        for i, (W, b) in enumerate(layers):
            pre = a @ W.T + b
            pres.append(pre)
            a = np.maximum(pre, 0.0) if i < len(layers) - 1 else pre
            acts.append(a)
        return a, (params, acts, pres)

    def backward(self, cache, upstream) -> Tuple[np.ndarray, np.ndarray]:
        """Gradients of ``<upstream, outputs>`` w.r.t. parameters and inputs."""
        params, acts, pres = cache
        delta = np.asarray(upstream, dtype=np.float64)
        if delta.shape != acts[-1].shape:
            raise ValueError(f"upstream shape {delta.shape} != output shape {acts[-1].shape}")
        grad = np.empty(self.num_params)
        layers = list(self.layers(params))
        for i in range(len(layers) - 1, -1, -1):
            W, _ = layers[i]
            a, b, c = self.offsets[i]
            grad[a:b] = (delta.T @ acts[i]).ravel()
            grad[b:c] = delta.sum(axis=0)
            delta = delta @ W
            if i > 0:
                # ReLU derivative, taken as 0 at exactly 0
                delta = delta * (pres[i - 1] > 0.0)
        return grad, delta

    def forward_tangent(self, params, dparams, z, dz=None):
        """Forward pass together with its directional derivative.

        ``dparams`` and ``dz`` are tangents of the parameters and the inputs
        (``None`` means zero).  Returns ``(out, dout, cache)``.
        """
        out, (params, acts, pres) = self.forward(params, z)
        dparams = None if dparams is None else np.asarray(dparams, dtype=np.float64)
        da = np.zeros_like(acts[0]) if dz is None else np.asarray(dz, dtype=np.float64)
        dacts = [da]
        layers = list(self.layers(params))
        dlayers = list(self.layers(dparams)) if dparams is not None else [None] * len(layers)
        for i, ((W, b), dl) in enumerate(zip(layers, dlayers)):
            dpre = da @ W.T
            if dl is not None:
                dW, db = dl
                dpre = dpre + acts[i] @ dW.T + db
            da = dpre * (pres[i] > 0.0) if i < len(layers) - 1 else dpre
            dacts.append(da)
        return out, da, (params, acts, pres, dparams, dacts)

    def backward_tangent(self, cache, upstream, dupstream):
        """Backprop and its directional derivative (ReLU masks held fixed).

        Returns ``(grad, dgrad, dinput, ddinput)`` where ``d*`` are tangents
        along the direction given to :meth:`forward_tangent`.
        """
        params, acts, pres, dparams, dacts = cache
        delta = np.asarray(upstream, dtype=np.float64)
        ddelta = np.asarray(dupstream, dtype=np.float64)
        grad = np.empty(self.num_params)
        dgrad = np.empty(self.num_params)
        layers = list(self.layers(params))
        dlayers = list(self.layers(dparams)) if dparams is not None else None
        for i in range(len(layers) - 1, -1, -1):
            W, _ = layers[i]
            a, b, c = self.offsets[i]
            grad[a:b] = (delta.T @ acts[i]).ravel()
            grad[b:c] = delta.sum(axis=0)
            dgrad[a:b] = (ddelta.T @ acts[i] + delta.T @ dacts[i]).ravel()
            dgrad[b:c] = ddelta.sum(axis=0)
            new_ddelta = ddelta @ W
            if dlayers is not None:
                new_ddelta = new_ddelta + delta @ dlayers[i][0]
            delta = delta @ W
            ddelta = new_ddelta
            if i > 0:
                mask = pres[i - 1] > 0.0
                delta = delta * mask
                ddelta = ddelta * mask
        return grad, dgrad, delta, ddelta


def net_forward_backward(net: DenseNet, params, inputs, upstream_grads):
    """Forward pass and the parameter gradient of ``<upstream_grads, outputs>``."""
    out, cache = net.forward(params, inputs)
    grad, _ = net.backward(cache, upstream_grads)
    return out, grad


@dataclass(frozen=True)
class GanConfig:
    mu1: Tuple[float, float] = (0.0, 1.0)
    mu2: Tuple[float, float] = (2 ** -0.5, 2 ** -0.5)
    sigma: float = 0.1
    noise_dim: int = 16
    batch_real: int = 64
    batch_fake: int = 64
    rmsprop_rho: float = 0.9
    rmsprop_eps: float = 1e-8
    hidden: Tuple[int, ...] = (32, 32)

    def __post_init__(self):
        if self.batch_real < 1 or self.batch_fake < 1:
            raise ValueError("batch sizes must be >= 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if not 0.0 <= self.rmsprop_rho < 1.0:
            raise ValueError("rmsprop_rho must lie in [0, 1)")

    @property
    def means(self) -> np.ndarray:
        return np.array([self.mu1, self.mu2], dtype=np.float64)

    @property
    def gen_dims(self):
        return (self.noise_dim, *self.hidden, 2)

    @property
    def disc_dims(self):
        return (2, *self.hidden, 1)


#: Architecture of the original experiment; acceptance runs use the GanConfig defaults.
FULL_SCALE = GanConfig(noise_dim=512, batch_real=256, batch_fake=256, hidden=(128, 128, 128, 128))


def sample_mixture(cfg: GanConfig, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw from the two-component mixture: mean chosen uniformly, isotropic noise ``sigma``."""
    comp = rng.integers(0, 2, size=count)
    return cfg.means[comp] + cfg.sigma * rng.standard_normal((count, 2))


def _log_sigmoid_terms(logits):
    # softplus(-l) = -log sigmoid(l), softplus(l) = -log(1 - sigmoid(l))
    return np.logaddexp(0.0, -logits), np.logaddexp(0.0, logits)


def _sigmoid(t):
    return np.exp(-np.logaddexp(0.0, -t))


class GanOracle(GameOracle):
    """Zero-sum game over ``x`` = discriminator and ``y`` = generator parameters.

    ``f`` is the mean sigmoid cross-entropy of the discriminator over the
    concatenated real (label 1) and generated (label 0) batch; the
    generator minimises ``g = -f``.  The minibatch is frozen between calls to
    :meth:`new_iteration`, so gradients and HVPs within one outer iteration
    all see the same data.

    ``hvp="exact"`` differentiates the backprop pass in forward mode, which
    gives the exact Hessian of the piecewise-smooth loss (ReLU masks fixed);
    ``hvp="fd"`` uses finite differences of the gradients instead.
    """

    is_zero_sum = True

    def __init__(self, cfg: GanConfig, gen_dims=None, disc_dims=None, seed: int = 0,
                 hvp: str = "exact", fd: FdConfig = FdConfig("forward")):
        if hvp not in ("exact", "fd"):
            raise ValueError(f"hvp must be 'exact' or 'fd', got {hvp!r}")
        self.hvp_mode = hvp
        self.cfg = cfg
        self.gen = DenseNet(gen_dims or cfg.gen_dims)
        self.disc = DenseNet(disc_dims or cfg.disc_dims)
        if self.gen.out_dim != 2 or self.disc.in_dim != 2 or self.disc.out_dim != 1:
            raise ValueError("generator must output 2-d samples and discriminator map 2-d to a logit")
        if self.gen.in_dim != cfg.noise_dim:
            raise ValueError(f"generator input {self.gen.in_dim} != noise_dim {cfg.noise_dim}")
        self.m = self.disc.num_params
        self.n = self.gen.num_params
        self.seed = seed
        self.fd = fd
        self._rng = generator(seed, STREAM_SAMPLES)
        self._cache_key = None
        self._cache_val = None
        self.new_iteration()

    def __repr__(self):
        return f"GanOracle(gen={self.gen.layer_dims}, disc={self.disc.layer_dims})"

    def new_iteration(self):
        self.reals = sample_mixture(self.cfg, self.cfg.batch_real, self._rng)
        self.noise = self._rng.standard_normal((self.cfg.batch_fake, self.cfg.noise_dim))
        self._cache_key = None

    def set_batch(self, reals, noise):
        self.reals = np.asarray(reals, dtype=np.float64)
        self.noise = np.asarray(noise, dtype=np.float64)
        self._cache_key = None

    def default_state(self) -> JointState:
        rng = generator(self.seed, STREAM_INIT)
        return JointState(self.disc.init_params(rng), self.gen.init_params(rng))

    def generate(self, s: JointState, noise) -> np.ndarray:
        return self.gen.forward(s.y, noise)[0]

    def sample(self, s: JointState, count: int, rng: np.random.Generator) -> np.ndarray:
        return self.generate(s, rng.standard_normal((count, self.cfg.noise_dim)))

    def _logits(self, s):
        fake, gcache = self.gen.forward(s.y, self.noise)
        inputs = np.vstack([self.reals, fake])
        logits, dcache = self.disc.forward(s.x, inputs)
        return logits[:, 0], dcache, gcache

    def eval_f(self, s):
        self.check_state(s)
        logits, _, _ = self._logits(s)
        br = len(self.reals)
        lr, _ = _log_sigmoid_terms(logits[:br])
        _, lf = _log_sigmoid_terms(logits[br:])
        return float((lr.sum() + lf.sum()) / len(logits))

    def eval_g(self, s):
        return -self.eval_f(s)

    def _grads(self, s):
        key = (s.x.tobytes(), s.y.tobytes())
        if key == self._cache_key:
            return self._cache_val
        logits, dcache, gcache = self._logits(s)
        br, total = len(self.reals), len(logits)
        up = np.empty((total, 1))
        up[:br, 0] = (_sigmoid(logits[:br]) - 1.0) / total
        up[br:, 0] = _sigmoid(logits[br:]) / total
        gx, dinputs = self.disc.backward(dcache, up)
        gy_f, _ = self.gen.backward(gcache, dinputs[br:])
        val = (gx, -gy_f)
        self._cache_key, self._cache_val = key, val
        return val

    def grad_x_f(self, s):
        self.check_state(s)
        return self._grads(s)[0].copy()

    def grad_y_g(self, s):
        self.check_state(s)
        return self._grads(s)[1].copy()

    def _tangent(self, s, dx, dy):
        fake, dfake, gcache = self.gen.forward_tangent(s.y, dy, self.noise)
        br = len(self.reals)
        inputs = np.vstack([self.reals, fake])
        dinputs = np.vstack([np.zeros_like(self.reals), dfake])
        logits, dlogits, dcache = self.disc.forward_tangent(s.x, dx, inputs, dinputs)
        total = len(logits)
        sig = _sigmoid(logits)
        up = sig.copy()
        up[:br] -= 1.0
        up /= total
        dup = sig * (1.0 - sig) * dlogits / total
        _, dgx, din, ddin = self.disc.backward_tangent(dcache, up, dup)
        _, dgy_f, _, _ = self.gen.backward_tangent(gcache, din[br:], ddin[br:])
        return dgx, -dgy_f

    def _hvp(self, s, v, which):
        self.check_state(s)
        if self.hvp_mode == "fd":
            base = self._grads(s) if self.fd.step_mode == "forward" else None
            return fd_hvp(self._grads, s, v, which, self.fd, base=base)
        v = np.asarray(v, dtype=np.float64)
        if which in ("xy", "yy"):
            dgx, dgy = self._tangent(s, None, v)
        else:
            dgx, dgy = self._tangent(s, v, None)
        return dgx if which in ("xy", "xx") else dgy

    def hvp_xy_f(self, s, v):
        return self._hvp(s, v, "xy")

    def hvp_yx_g(self, s, v):
        return self._hvp(s, v, "yx")

    def hvp_xx_f(self, s, v):
        return self._hvp(s, v, "xx")

    def hvp_yy_g(self, s, v):
        return self._hvp(s, v, "yy")

    def residual(self, s):
        return self.eval_f(s)


def gan_oracle(cfg: GanConfig, gen_dims=None, disc_dims=None, seed: int = 0,
               hvp: str = "exact") -> GanOracle:
    return GanOracle(cfg, gen_dims, disc_dims, seed, hvp=hvp)


def make_gan(name: str, seed: int, overrides: dict) -> GanOracle:
    """``gmm-gan`` (reduced) or ``gmm-gan:full``.

    ``overrides`` may set any GanConfig field, plus ``hvp`` (``exact`` or ``fd``).
    """
    cfg = FULL_SCALE if name.endswith(":full") else GanConfig()
    kw = dict(overrides or {})
    hvp = kw.pop("hvp", "exact")
    if kw:
        if "hidden" in kw:
            kw["hidden"] = tuple(int(h) for h in kw["hidden"])
        cfg = replace(cfg, **kw)
    return GanOracle(cfg, seed=seed, hvp=hvp)


@dataclass
class RmsState:
    second_moment_x: Optional[np.ndarray] = None
    second_moment_y: Optional[np.ndarray] = None


def rmsprop_scale(update, grads, state: Optional[np.ndarray], rho: float = 0.9,
                  eps: float = 1e-8):
    """Rescale ``update`` elementwise by the running RMS of ``grads``.

    ``state <- rho state + (1 - rho) grads^2`` (a missing state counts as
    zero), and the result is ``update / sqrt(state + eps)``.
    """
    update = np.asarray(update, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if update.shape != grads.shape:
        raise ValueError(f"update shape {update.shape} != grads shape {grads.shape}")
    if state is None:
        state = np.zeros_like(grads)
    new = rho * state + (1.0 - rho) * grads * grads
    return update / np.sqrt(new + eps), new
