"""Discriminators and generators with the derivative access the dynamics need.

Parameters are never stored on the objects: every method takes the flat
parameter vector (``psi`` for discriminators, ``theta`` for generators), so a
single instance describes an architecture and can be evaluated anywhere.

Discriminator methods (``x`` is ``(n, dim)``):

* ``value(x, psi)`` -> ``(n,)``
* ``grad_x(x, psi)`` -> ``(n, dim)``
* ``grad_psi(x, psi, weights=None)`` -> ``sum_i w_i grad_psi D(x_i)``
* ``grad_psi_per_sample(x, psi)`` -> ``(n, P)``
* ``mixed_grad(x, psi, v)`` -> ``sum_i grad_psi (v_i . grad_x D(x_i))``
* ``mixed_grad_per_sample(x, psi, v)`` -> ``(n, P)``

Generator methods (``z`` is ``(n, latent_dim)``):

* ``sample(z, theta)`` -> ``(n, dim)``
* ``vjp(z, theta, cot)`` -> ``sum_i J_theta G(z_i)^T cot_i``
* ``vjp_per_sample(z, theta, cot)`` -> ``(n, T)``
* ``jvp(z, theta, dtheta)`` -> ``(n, dim)``
"""

from __future__ import annotations

import numpy as np

from ._kernels import mlp as _mlp
from .errors import ConfigError


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _col(x):
    x = np.asarray(x, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x


class MLP:
    """Fully connected network, tanh hidden layers, affine output."""

    def __init__(self, sizes):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ConfigError(f"invalid layer sizes {sizes}")
        self.sizes = np.array(sizes, dtype=np.int64)
        self.n_params = int(_mlp.offsets(self.sizes)[-1])

    @property
    def arch(self):
        return [int(s) for s in self.sizes]

    def init(self, seed: int) -> np.ndarray:
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        out = np.zeros(self.n_params)
        offs = _mlp.offsets(self.sizes)
        for l in range(len(self.sizes) - 1):
            fi, fo = int(self.sizes[l]), int(self.sizes[l + 1])
            lim = np.sqrt(6.0 / (fi + fo))
            out[offs[l]:offs[l] + fi * fo] = rng.uniform(-lim, lim, fi * fo)
        return out

    def check(self, params):
        params = _c(params)
        if params.shape != (self.n_params,):
            raise ConfigError(f"expected {self.n_params} parameters, got shape {params.shape}")
        return params

    def forward(self, x, params):
        return _mlp.forward(self.check(params), self.sizes, _c(_col(x)))

    def first_bad_layer(self, x, params):
        """Index of the first layer producing a non-finite activation, or -1."""
        params, x = self.check(params), _c(_col(x))
        offs = _mlp.offsets(self.sizes)
        h = x
        for l in range(len(self.sizes) - 1):
            W, b = _mlp._layer(params, self.sizes, offs, l)
            h = h @ W + b
            if l < len(self.sizes) - 2:
                h = np.tanh(h)
            if not np.all(np.isfinite(h)):
                return l
        return -1


class MLPDiscriminator(MLP):
    """Scalar-output critic ``D(x; psi)``."""

    def __init__(self, in_dim=2, hidden=(64, 64, 64)):
        super().__init__([in_dim, *hidden, 1])
        self.dim = int(in_dim)

    def value(self, x, psi):
        return self.forward(x, psi)[:, 0]

    def grad_x(self, x, psi):
        x = _c(_col(x))
        g, _ = _mlp.input_vjp(self.check(psi), self.sizes, x, np.ones((x.shape[0], 1)))
        return g

    def grad_psi(self, x, psi, weights=None):
        x = _c(_col(x))
        w = np.ones((x.shape[0], 1)) if weights is None else _c(np.asarray(weights, float).reshape(-1, 1))
        return _mlp.param_vjp(self.check(psi), self.sizes, x, w)

    def grad_psi_per_sample(self, x, psi):
        x = _c(_col(x))
        return _mlp.param_vjp_per_sample(self.check(psi), self.sizes, x, np.ones((x.shape[0], 1)))

    def mixed_grad(self, x, psi, v):
        return _mlp.mixed_vjp(self.check(psi), self.sizes, _c(_col(x)), _c(_col(v)))

    def mixed_grad_per_sample(self, x, psi, v):
        return _mlp.mixed_vjp_per_sample(self.check(psi), self.sizes, _c(_col(x)), _c(_col(v)))


class MLPGenerator(MLP):
    """Generator ``G(z; theta)`` mapping latent codes to samples."""

    def __init__(self, latent_dim=2, out_dim=2, hidden=(64, 64, 64)):
        super().__init__([latent_dim, *hidden, out_dim])
        self.latent_dim = int(latent_dim)
        self.dim = int(out_dim)

    def sample(self, z, theta):
        return self.forward(z, theta)

    def vjp(self, z, theta, cot):
        return _mlp.param_vjp(self.check(theta), self.sizes, _c(_col(z)), _c(_col(cot)))

    def vjp_per_sample(self, z, theta, cot):
        return _mlp.param_vjp_per_sample(self.check(theta), self.sizes, _c(_col(z)), _c(_col(cot)))

    def jvp(self, z, theta, dtheta):
        return _mlp.param_jvp(self.check(theta), self.sizes, _c(_col(z)), self.check(dtheta))


# ---------------------------------------------------------------------------
# closed-form toy maps (one scalar parameter, one-dimensional samples)


class MonomialDiscriminator:
    """``D(x; psi) = psi x^k`` on the real line."""

    n_params = 1
    dim = 1

    def __init__(self, power: int = 1):
        if power < 1:
            raise ConfigError("power must be >= 1")
        self.power = int(power)

    def value(self, x, psi):
        return float(psi[0]) * _col(x)[:, 0] ** self.power

    def _dx(self, x):
        # d/dx x^k
        x = _col(x)[:, 0]
        return self.power * x ** (self.power - 1)

    def grad_x(self, x, psi):
        return (float(psi[0]) * self._dx(x))[:, None]

    def grad_psi(self, x, psi, weights=None):
        f = _col(x)[:, 0] ** self.power
        if weights is not None:
            f = f * np.asarray(weights, float).reshape(-1)
        return np.array([f.sum()])

    def grad_psi_per_sample(self, x, psi):
        return (_col(x)[:, 0] ** self.power)[:, None]

    def mixed_grad(self, x, psi, v):
        return np.array([np.sum(_col(v)[:, 0] * self._dx(x))])

    def mixed_grad_per_sample(self, x, psi, v):
        return (_col(v)[:, 0] * self._dx(x))[:, None]


class DiracGenerator:
    """``G(z; theta) = theta``: the generator distribution is ``delta_theta``."""

    n_params = 1
    dim = 1
    latent_dim = 1

    def sample(self, z, theta):
        return np.full((_col(z).shape[0], 1), float(theta[0]))

    def vjp(self, z, theta, cot):
        return np.array([_col(cot)[:, 0].sum()])

    def vjp_per_sample(self, z, theta, cot):
        return _col(cot)[:, :1].copy()

    def jvp(self, z, theta, dtheta):
        return np.full((_col(z).shape[0], 1), float(dtheta[0]))


class ScaleGenerator:
    """``G(z; theta) = theta z``; with ``z ~ U(-1,1)`` this is ``U(-|theta|, |theta|)``."""

    n_params = 1
    dim = 1
    latent_dim = 1

    def sample(self, z, theta):
        return float(theta[0]) * _col(z)[:, :1]

    def vjp(self, z, theta, cot):
        return np.array([np.sum(_col(z)[:, 0] * _col(cot)[:, 0])])

    def vjp_per_sample(self, z, theta, cot):
        return (_col(z)[:, 0] * _col(cot)[:, 0])[:, None]

    def jvp(self, z, theta, dtheta):
        return float(dtheta[0]) * _col(z)[:, :1]
