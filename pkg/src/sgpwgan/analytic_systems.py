"""Closed-form two-parameter toy systems.

* Dirac GAN ``D = psi x``, data ``delta_0``, generator ``delta_theta`` with a
  penalty point mass of mass ``M(psi, theta)``.
* Quadratic GAN ``D = psi x^2``, data ``U(-1,1)``, generator
  ``U(-|theta|,|theta|)``, penalty second moment supplied as a callable.
* The non-convergent variant ``D = psi x^2`` on the Dirac data/generator
  pair with the interpolation penalty.

Fields accept scalars or broadcastable arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._kernels import rk4 as _rk4
from .errors import ConfigError, InvalidMeasure
from .measure import MassFunction, parse_mass

TOY_NAMES = ("dirac", "quadratic", "quadratic-dirac")


def dirac_gan_field(psi, theta, rho, mass_fn, mass_grad_psi):
    """``(-theta - rho/2 (2 psi M + psi^2 dM/dpsi), psi)``."""
    m = mass_fn(psi, theta)
    dm = mass_grad_psi(psi, theta)
    psi_dot = -theta - 0.5 * rho * (2.0 * psi * m + psi * psi * dm)
    return psi_dot, psi + 0.0 * theta


def dirac_gan_lyapunov(psi, theta, rho, mass_fn, mass_grad_psi):
    """``L = psi^2 + theta^2`` and its time derivative along the flow."""
    m = mass_fn(psi, theta)
    dm = mass_grad_psi(psi, theta)
    L = psi * psi + theta * theta
    L_dot = -rho * psi * psi * (2.0 * m + psi * dm)
    return L, L_dot


def basin_radius(mass_fn, mass_grad_psi, search_max: float = 10.0, tol: float = 1e-3,
                 n_angles: int = 10_000, n_radii: int = 64) -> float:
    """Largest disk radius on which ``2M + psi dM/dpsi >= 0`` holds.

    Bisection over the radius; each candidate disk is checked on a polar grid
    of ``n_radii`` circles with ``n_angles`` points each (angle 0 included).
    Returns ``math.inf`` when the condition holds up to ``search_max``.
    """
    if search_max <= 0:
        raise ConfigError("search_max must be positive")
    angles = np.linspace(0.0, 2.0 * np.pi, n_angles, endpoint=False)
    cos, sin = np.cos(angles), np.sin(angles)

    def holds(eta):
        radii = np.linspace(0.0, eta, n_radii)[:, None]
        psi = radii * cos
        theta = radii * sin
        m = np.asarray(mass_fn(psi, theta), float)
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise InvalidMeasure(f"mass function negative or non-finite inside radius {eta}")
        cond = 2.0 * m + psi * np.asarray(mass_grad_psi(psi, theta), float)
        return bool(np.all(cond >= 0.0))

    if holds(search_max):
        return math.inf
    lo, hi = 0.0, float(search_max)
    if not holds(lo):
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if holds(mid):
            lo = mid
        else:
            hi = mid
    return lo


def quadratic_gan_field(psi, theta, rho, second_moment):
    """``(1/3 - theta^2/3 - 4 rho psi E[x^2], 2 psi theta / 3)``."""
    m2 = second_moment(theta)
    psi_dot = 1.0 / 3.0 - theta * theta / 3.0 - 4.0 * rho * psi * m2
    theta_dot = 2.0 * psi * theta / 3.0
    return psi_dot, theta_dot


def quadratic_gan_spectrum(rho: float, m2: float):
    """Both Jacobian eigenvalues at ``(0, +-1)``: ``-2 rho m2 +- sqrt(4 rho^2 m2^2 - 4/9)``."""
    centre = -2.0 * rho * m2
    root = np.sqrt(complex(4.0 * rho * rho * m2 * m2 - 4.0 / 9.0))
    return complex(centre + root), complex(centre - root)


def quadratic_dirac_field(psi, theta, rho):
    """``(-theta^2 - 4/3 rho psi theta^2, 2 psi theta)``."""
    psi_dot = -theta * theta - (4.0 / 3.0) * rho * psi * theta * theta
    theta_dot = 2.0 * psi * theta
    return psi_dot, theta_dot


def quadratic_dirac_nullclines(rho: float) -> dict:
    """Straight-line nullclines as ``(axis, value)`` pairs.

    ``("psi", c)`` is the vertical line ``psi = c``, ``("theta", c)`` the
    horizontal line ``theta = c``.
    """
    return {
        "psi_dot": [("psi", -3.0 / (4.0 * rho)), ("theta", 0.0)],
        "theta_dot": [("psi", 0.0), ("theta", 0.0)],
    }


@dataclass(frozen=True)
class ToySystem2D:
    """A named planar vector field with its known equilibria.

    ``kernel`` is ``(system_id, params)`` for the compiled RK4 path, or
    ``None`` when only the Python field is available.
    """

    name: str
    field: Callable
    equilibria: list = field(default_factory=list)
    equilibrium_lines: list = field(default_factory=list)
    nullclines: Optional[dict] = None
    kernel: Optional[tuple] = None
    meta: dict = field(default_factory=dict)

    def __call__(self, psi, theta):
        return self.field(psi, theta)

    def as_vector_field(self):
        def f(x):
            a, b = self.field(float(x[0]), float(x[1]))
            return np.array([a, b], dtype=float)
        return f


def _dirac_kernel(rho, mass: MassFunction):
    name = mass.name
    if name.startswith("const:"):
        return (_rk4.DIRAC_CONST, np.array([rho, float(name[6:])]))
    if name.startswith("bump:"):
        return (_rk4.DIRAC_BUMP, np.array([rho, float(name[5:])]))
    if name == "psisq":
        return (_rk4.DIRAC_PSISQ, np.array([rho]))
    return None


def toy_system(name: str, rho: float, mass="const:1", second_moment=None) -> ToySystem2D:
    """Build one of ``dirac``, ``quadratic``, ``quadratic-dirac``.

    ``mass`` (dirac only) is a mass spec or :class:`MassFunction`.
    ``second_moment`` (quadratic only) is ``None`` for the uniform family
    ``theta^2/3``, a number for a fixed ``E[x^2]``, or a callable of theta.
    """
    rho = float(rho)
    if name == "dirac":
        mf = mass if isinstance(mass, MassFunction) else parse_mass(mass)
        return ToySystem2D(
            name="dirac",
            field=lambda p, t: dirac_gan_field(p, t, rho, mf, mf.grad_psi),
            equilibria=[(0.0, 0.0)],
            nullclines={"psi_dot": None, "theta_dot": [("psi", 0.0)]},
            kernel=_dirac_kernel(rho, mf),
            meta={"rho": rho, "mass": mf.name},
        )
    if name == "quadratic":
        if second_moment is None:
            sm = lambda t: t * t / 3.0  # noqa: E731
            kern = (_rk4.QUADRATIC_UNIFORM, np.array([rho]))
            label = "uniform"
        elif callable(second_moment):
            sm, kern, label = second_moment, None, "callable"
        else:
            c = float(second_moment)
            if c < 0:
                raise ConfigError("second moment must be non-negative")
            sm = lambda t: c + 0.0 * t  # noqa: E731
            kern = (_rk4.QUADRATIC_CONST, np.array([rho, c]))
            label = c
        return ToySystem2D(
            name="quadratic",
            field=lambda p, t: quadratic_gan_field(p, t, rho, sm),
            equilibria=[(0.0, 1.0), (0.0, -1.0)],
            kernel=kern,
            meta={"rho": rho, "second_moment": label},
        )
    if name == "quadratic-dirac":
        if rho <= 0:
            raise ConfigError("quadratic-dirac needs rho > 0")
        return ToySystem2D(
            name="quadratic-dirac",
            field=lambda p, t: quadratic_dirac_field(p, t, rho),
            equilibrium_lines=[("theta", 0.0)],
            nullclines=quadratic_dirac_nullclines(rho),
            kernel=(_rk4.QUADRATIC_DIRAC, np.array([rho])),
            meta={"rho": rho},
        )
    raise ConfigError(f"unknown toy system {name!r}; expected one of {TOY_NAMES}")


def oscillator() -> ToySystem2D:
    """Harmonic oscillator ``(-theta, psi)``, used for integrator checks."""
    return ToySystem2D(
        name="oscillator",
        field=lambda p, t: (-t + 0.0 * p, p + 0.0 * t),
        equilibria=[(0.0, 0.0)],
        kernel=(_rk4.OSCILLATOR, np.zeros(1)),
    )


def field_grid(system: ToySystem2D, psi_range, theta_range, resolution: int):
    """Evaluate on a lattice; rows of ``(psi, theta, psi_dot, theta_dot)``."""
    ps = np.linspace(psi_range[0], psi_range[1], resolution)
    ts = np.linspace(theta_range[0], theta_range[1], resolution)
    P, T = np.meshgrid(ps, ts)
    U, V = system.field(P, T)
    U = np.broadcast_to(np.asarray(U, float), P.shape)
    V = np.broadcast_to(np.asarray(V, float), P.shape)
    return np.column_stack([P.ravel(), T.ravel(), U.ravel(), V.ravel()])
