"""Finite penalty measures.

A finite measure is stored as ``mass * normalized probability measure``;
the normalized part is only ever touched through a sampler, so point
masses and measures on lower-dimensional supports are as cheap as
densities would be.  Expectations are Monte Carlo means scaled by the mass.

Derivatives of ``param -> integral of phi d mu`` use the product rule
``(M P)' = M' P + M c (P+ - P-)`` when the family exposes a weak-derivative
triple ``(c, P+, P-)``, and a central finite difference with common random
numbers otherwise.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, InvalidMeasure, NoWeakDerivative, NumericalFailure

TABLE1_KINDS = ("pg", "pd", "gp", "mid", "g_anc")
DEFAULT_ANCHOR = (2.0, -1.0)
SUPPORT_TOL = 1e-6
FD_REL_STEP = 1e-4


# ---------------------------------------------------------------------------
# seeds


def substream(seed: int, *keys) -> int:
    """Deterministic child seed for a named sub-stream of ``seed``."""
    words = [int(seed) & 0xFFFFFFFF, (int(seed) >> 32) & 0xFFFFFFFF]
    for k in keys:
        if isinstance(k, str):
            words.append(zlib.crc32(k.encode()))
        else:
            words.append(int(k) & 0xFFFFFFFF)
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 31 | int(state[1]) >> 1


def stratified_uniform(n: int, seed: int) -> np.ndarray:
    """``n`` draws from U(0,1), one per stratum ``[k/n, (k+1)/n)``, shuffled.

    Each draw is marginally uniform; the sample mean of a smooth function has
    error O(n^-1.5) instead of O(n^-0.5).
    """
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    return (perm + rng.random(n)) / n


# ---------------------------------------------------------------------------
# mass functions


@dataclass(frozen=True)
class MassFunction:
    """Scalar mass ``M(psi, theta)`` for one-parameter toys (elementwise)."""

    name: str
    fn: Callable
    grad_psi: Callable
    grad_theta: Callable
    depends: frozenset = frozenset()

    def __call__(self, psi, theta):
        return self.fn(psi, theta)


def _const_mass(c):
    c = float(c)
    return MassFunction(
        f"const:{c!r}",
        lambda psi, theta: c + 0.0 * np.asarray(psi, dtype=float) + 0.0 * np.asarray(theta, dtype=float),
        lambda psi, theta: 0.0 * np.asarray(psi, dtype=float) + 0.0 * np.asarray(theta, dtype=float),
        lambda psi, theta: 0.0 * np.asarray(psi, dtype=float) + 0.0 * np.asarray(theta, dtype=float),
    )


def _bump_mass(radius):
    r2 = float(radius) ** 2

    def fn(psi, theta):
        return np.maximum(0.0, 1.0 - (np.asarray(psi, float) ** 2 + np.asarray(theta, float) ** 2) / r2)

    def inside(psi, theta):
        return (np.asarray(psi, float) ** 2 + np.asarray(theta, float) ** 2) < r2

    return MassFunction(
        f"bump:{float(radius)!r}",
        fn,
        lambda psi, theta: np.where(inside(psi, theta), -2.0 * np.asarray(psi, float) / r2, 0.0),
        lambda psi, theta: np.where(inside(psi, theta), -2.0 * np.asarray(theta, float) / r2, 0.0),
        frozenset({"psi", "theta"}),
    )


def _psisq_mass():
    return MassFunction(
        "psisq",
        lambda psi, theta: np.asarray(psi, float) ** 2 + 0.0 * np.asarray(theta, float),
        lambda psi, theta: 2.0 * np.asarray(psi, float) + 0.0 * np.asarray(theta, float),
        lambda psi, theta: 0.0 * np.asarray(psi, float) + 0.0 * np.asarray(theta, float),
        frozenset({"psi"}),
    )


def parse_mass(spec) -> MassFunction:
    """Parse ``const:<c>``, ``bump:<radius>``, ``psisq`` or a bare number."""
    if isinstance(spec, MassFunction):
        return spec
    if isinstance(spec, (int, float)):
        return _const_mass(spec)
    text = str(spec).strip()
    kind, _, arg = text.partition(":")
    try:
        if kind == "const":
            return _const_mass(float(arg))
        if kind == "bump":
            radius = float(arg)
            if radius <= 0:
                raise ConfigError("bump radius must be positive")
            return _bump_mass(radius)
        if kind == "psisq" and not arg:
            return _psisq_mass()
        return _const_mass(float(text))
    except ValueError as exc:
        raise ConfigError(f"unrecognised mass spec {spec!r}") from exc


# ---------------------------------------------------------------------------
# measures


def _as_vec(p):
    return np.atleast_1d(np.asarray(p, dtype=float))


@dataclass(frozen=True)
class WeakDerivativeTriple:
    """``P' = c (P+ - P-)`` with probability measures ``P+`` and ``P-``."""

    c: float
    plus: "FiniteMeasure"
    minus: "FiniteMeasure"


@dataclass(frozen=True)
class FiniteMeasure:
    """A parametric finite measure ``mu_{psi,theta} = M(psi,theta) * mu_bar``.

    ``sampler(psi, theta, n, seed)`` draws ``(n, dim)`` points from the
    normalized measure.  ``mass_depends`` / ``shape_depends`` name the
    parameter blocks (``"psi"``, ``"theta"``) that the mass and the
    normalized part depend on.  ``weak_derivative(psi, theta, component)``
    returns a :class:`WeakDerivativeTriple` for the normalized part or raises
    :class:`NoWeakDerivative`.
    """

    name: str
    sampler: Callable
    mass_fn: Callable = lambda psi, theta: 1.0
    mass_grad: Optional[Callable] = None
    support_predicate: Optional[Callable] = None
    mass_depends: frozenset = frozenset()
    shape_depends: frozenset = frozenset()
    weak_derivative: Optional[Callable] = None
    spec: dict = field(default_factory=dict)

    @property
    def depends_on_psi(self) -> bool:
        return "psi" in self.mass_depends or "psi" in self.shape_depends

    @property
    def depends_on_theta(self) -> bool:
        return "theta" in self.mass_depends or "theta" in self.shape_depends

    @property
    def param_dependence(self) -> dict:
        return {"depends_on_psi": self.depends_on_psi, "depends_on_theta": self.depends_on_theta}

    def mass(self, psi, theta) -> float:
        m = float(self.mass_fn(_as_vec(psi), _as_vec(theta)))
        if not np.isfinite(m) or m < 0.0:
            raise InvalidMeasure(f"{self.name}: mass {m} at psi={psi!r}, theta={theta!r}")
        return m

    def sample(self, psi, theta, n: int, seed: int) -> np.ndarray:
        pts = np.asarray(self.sampler(_as_vec(psi), _as_vec(theta), int(n), int(seed)), dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        return pts

    def in_support(self, points, psi, theta, tol: float = SUPPORT_TOL):
        if self.support_predicate is None:
            return None
        return np.asarray(self.support_predicate(np.atleast_2d(points), _as_vec(psi), _as_vec(theta), tol), dtype=bool)

    def mass_derivative(self, psi, theta, block: str, index: int) -> float:
        if block not in self.mass_depends:
            return 0.0
        psi, theta = _as_vec(psi), _as_vec(theta)
        if self.mass_grad is not None:
            g_psi, g_theta = self.mass_grad(psi, theta)
            return float(np.atleast_1d(g_psi if block == "psi" else g_theta)[index])
        vec = (psi if block == "psi" else theta).copy()
        h = FD_REL_STEP * max(1.0, abs(vec[index]))
        up, dn = vec.copy(), vec.copy()
        up[index] += h
        dn[index] -= h
        if block == "psi":
            return (self.mass(up, theta) - self.mass(dn, theta)) / (2 * h)
        return (self.mass(psi, up) - self.mass(psi, dn)) / (2 * h)

    def scaled(self, k: float) -> "FiniteMeasure":
        """The measure ``k * mu`` (same normalized part, mass times ``k``)."""
        k = float(k)
        if k < 0:
            raise InvalidMeasure("scale factor must be non-negative")
        base_fn, base_grad = self.mass_fn, self.mass_grad
        grad = None
        if base_grad is not None:
            def grad(psi, theta):
                gp, gt = base_grad(psi, theta)
                return k * np.asarray(gp, float), k * np.asarray(gt, float)
        spec = dict(self.spec)
        if isinstance(spec.get("mass"), (int, float)):
            spec["mass"] = k * spec["mass"]
        return replace(self, name=f"{k!r}*{self.name}", mass_fn=lambda psi, theta: k * base_fn(psi, theta),
                       mass_grad=grad, spec=spec)


def _probability(name, sampler, predicate=None):
    return FiniteMeasure(name=name, sampler=sampler, support_predicate=predicate)


def point_mass(point, mass=1.0) -> FiniteMeasure:
    """``M(psi, theta) * delta_point``.

    ``mass`` is a constant or a :class:`MassFunction`/mass spec string, in
    which case it is evaluated on the first components of ``psi``/``theta``.
    """
    pt = _as_vec(point)

    def sampler(psi, theta, n, seed):
        return np.broadcast_to(pt, (n, pt.size)).copy()

    def predicate(points, psi, theta, tol):
        return np.linalg.norm(points - pt, axis=1) <= tol

    spec = {"kind": "dirac", "anchor": None, "params": {"point": pt.tolist()}}
    if isinstance(mass, (int, float)):
        m = float(mass)
        spec["mass"] = m
        return FiniteMeasure(name=f"{m!r}*delta{pt.tolist()}", sampler=sampler, mass_fn=lambda p, t: m,
                             support_predicate=predicate, spec=spec)
    mf = parse_mass(mass)
    spec["mass"] = mf.name
    return FiniteMeasure(
        name=f"{mf.name}*delta{pt.tolist()}",
        sampler=sampler,
        mass_fn=lambda p, t: mf(p[0], t[0]),
        mass_grad=lambda p, t: (np.array([mf.grad_psi(p[0], t[0])], float), np.array([mf.grad_theta(p[0], t[0])], float)),
        support_predicate=predicate,
        mass_depends=mf.depends,
        spec=spec,
    )


def uniform(low: float, high: float, mass: float = 1.0) -> FiniteMeasure:
    """``mass * U(low, high)`` on the real line (stratified sampler)."""
    lo, hi = float(low), float(high)
    if hi < lo:
        raise ConfigError("uniform: high < low")

    def sampler(psi, theta, n, seed):
        return (lo + (hi - lo) * stratified_uniform(n, seed))[:, None]

    def predicate(points, psi, theta, tol):
        x = points[:, 0]
        return (x >= lo - tol) & (x <= hi + tol)

    m = float(mass)
    return FiniteMeasure(name=f"{m!r}*U({lo!r},{hi!r})", sampler=sampler, mass_fn=lambda p, t: m,
                         support_predicate=predicate,
                         spec={"kind": "uniform", "anchor": None, "mass": m, "params": {"low": lo, "high": hi}})


def uniform_scaled(index: int = 0) -> FiniteMeasure:
    """``U(0, theta_i)`` with ``U(0,0) = delta_0``; triple ``(1/theta, delta_theta, U(0,theta))``."""

    def sampler(psi, theta, n, seed):
        return (theta[index] * stratified_uniform(n, seed))[:, None]

    def predicate(points, psi, theta, tol):
        x = points[:, 0]
        lo, hi = min(0.0, theta[index]), max(0.0, theta[index])
        return (x >= lo - tol) & (x <= hi + tol)

    def triple(psi, theta, component):
        block, i = component
        if block != "theta" or i != index:
            raise NoWeakDerivative("uniform_scaled depends only on its own theta component")
        t = float(theta[index])
        if t <= 0.0:
            raise NoWeakDerivative("U(0, theta) triple defined for theta > 0")
        frozen_theta = theta.copy()
        return WeakDerivativeTriple(
            c=1.0 / t,
            plus=point_mass([t]),
            minus=_probability("U(0,theta)", lambda p, th, n, s: sampler(p, frozen_theta, n, s)),
        )

    return FiniteMeasure(name=f"U(0,theta[{index}])", sampler=sampler, support_predicate=predicate,
                         shape_depends=frozenset({"theta"}), weak_derivative=triple,
                         spec={"kind": "uniform_scaled", "anchor": None, "mass": 1.0, "params": {"index": index}})


def uniform_symmetric(scale: float = 1.0, index: int = 0) -> FiniteMeasure:
    """``U(-c|theta_i|, c|theta_i|)``; second moment ``c^2 theta_i^2 / 3``."""
    c = float(scale)

    def sampler(psi, theta, n, seed):
        a = c * abs(theta[index])
        return (a * (2.0 * stratified_uniform(n, seed) - 1.0))[:, None]

    def predicate(points, psi, theta, tol):
        return np.abs(points[:, 0]) <= c * abs(theta[index]) + tol

    def triple(psi, theta, component):
        block, i = component
        if block != "theta" or i != index:
            raise NoWeakDerivative("uniform_symmetric depends only on its own theta component")
        t = float(theta[index])
        if t == 0.0:
            raise NoWeakDerivative("symmetric uniform triple undefined at theta = 0")
        a = c * abs(t)
        frozen_theta = theta.copy()

        def ends(p, th, n, s):
            # stratified: the two endpoints appear in equal proportion
            return np.where(stratified_uniform(n, s) < 0.5, -a, a)[:, None]

        edges = _probability("endpoints", ends)
        body = _probability("U(-a,a)", lambda p, th, n, s: sampler(p, frozen_theta, n, s))
        if t > 0:
            return WeakDerivativeTriple(1.0 / abs(t), edges, body)
        return WeakDerivativeTriple(1.0 / abs(t), body, edges)

    return FiniteMeasure(name=f"U(-{c!r}|theta|,{c!r}|theta|)", sampler=sampler, support_predicate=predicate,
                         shape_depends=frozenset({"theta"}), weak_derivative=triple,
                         spec={"kind": "uniform_symmetric", "anchor": None, "mass": 1.0,
                               "params": {"scale": c, "index": index}})


def translated_dirac() -> FiniteMeasure:
    """``delta_theta``: continuous in theta but without a weak derivative."""

    def sampler(psi, theta, n, seed):
        return np.broadcast_to(theta, (n, theta.size)).copy()

    def predicate(points, psi, theta, tol):
        return np.linalg.norm(points - theta, axis=1) <= tol

    def triple(psi, theta, component):
        raise NoWeakDerivative("the translated Dirac family delta_theta has no weak derivative")

    return FiniteMeasure(name="delta_theta", sampler=sampler, support_predicate=predicate,
                         shape_depends=frozenset({"theta"}), weak_derivative=triple,
                         spec={"kind": "translated_dirac", "anchor": None, "mass": 1.0, "params": {}})


def _cloud_predicate(measure_sampler, size=4096, seed=0):
    """Support test against a reference sample (distance <= tol)."""

    def predicate(points, psi, theta, tol):
        ref = np.asarray(measure_sampler(psi, theta, size, seed), float).reshape(size, -1)
        dist, _ = cKDTree(ref).query(points.reshape(len(points), -1), k=1)
        return dist <= tol

    return predicate


def make_table1_measure(kind: str, anchor=None, data_sampler=None, gen_sampler=None) -> FiniteMeasure:
    """One of the five probability penalty measures built from data/generator batches.

    ``data_sampler(n, seed)`` draws from ``p_d``; ``gen_sampler(theta, n, seed)``
    from ``p_theta``.  Sub-seeds ``"data"``, ``"latent"`` and ``"alpha"`` are
    derived from the call seed, so the data and generator points coincide
    with the batches the vector field draws for the same seed.
    """
    if kind not in TABLE1_KINDS:
        raise ConfigError(f"unknown penalty kind {kind!r}; expected one of {TABLE1_KINDS}")
    if kind == "g_anc":
        if anchor is None:
            raise ConfigError("penalty kind g_anc requires an anchor point")
        anchor = _as_vec(anchor)
    elif anchor is not None:
        raise ConfigError(f"anchor is only meaningful for g_anc, got kind {kind!r}")
    needs_data = kind in ("pd", "gp", "mid")
    needs_gen = kind != "pd"
    if needs_data and data_sampler is None:
        raise ConfigError(f"kind {kind!r} needs a data sampler")
    if needs_gen and gen_sampler is None:
        raise ConfigError(f"kind {kind!r} needs a generator sampler")

    def sampler(psi, theta, n, seed):
        xd = np.asarray(data_sampler(n, substream(seed, "data")), float) if needs_data else None
        xg = np.asarray(gen_sampler(theta, n, substream(seed, "latent")), float) if needs_gen else None
        if kind == "pg":
            return xg
        if kind == "pd":
            return xd
        if kind == "mid":
            return 0.5 * xd + 0.5 * xg
        alpha = np.random.default_rng(substream(seed, "alpha")).random((n, 1))
        if kind == "gp":
            return alpha * xd + (1.0 - alpha) * xg
        return alpha * anchor + (1.0 - alpha) * xg

    shape = frozenset() if kind == "pd" else frozenset({"theta"})

    def triple(psi, theta, component):
        raise NoWeakDerivative(f"no analytic weak derivative for pushforward measure {kind!r}")

    return FiniteMeasure(
        name=f"mu_{kind}",
        sampler=sampler,
        support_predicate=_cloud_predicate(sampler),
        shape_depends=shape,
        weak_derivative=triple,
        spec={"kind": kind, "anchor": None if anchor is None else anchor.tolist(), "mass": 1.0, "params": {}},
    )


# ---------------------------------------------------------------------------
# integrals


def _evaluate(phi, pts):
    vals = np.asarray(phi(pts), dtype=float)
    vals = np.broadcast_to(vals, (pts.shape[0],)) if vals.ndim == 0 else vals.reshape(pts.shape[0])
    bad = ~np.isfinite(vals)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise NumericalFailure(f"integrand is not finite at sample {k}", where=pts[k].copy())
    return vals


def normalized_mean(measure: FiniteMeasure, psi, theta, phi, n: int, seed: int) -> float:
    """Sample mean of ``phi`` under the normalized measure."""
    if n < 1:
        raise ConfigError("sample count must be >= 1")
    pts = measure.sample(psi, theta, n, seed)
    return float(_evaluate(phi, pts).mean())


def expect(measure: FiniteMeasure, psi, theta, phi, n: int, seed: int) -> float:
    """Monte Carlo ``integral of phi d mu_{psi,theta}`` = ``M * mean(phi)``.

    ``phi`` maps an ``(n, dim)`` batch to ``n`` values (a constant is
    broadcast).  Deterministic for a fixed seed.
    """
    mass = measure.mass(psi, theta)
    return mass * normalized_mean(measure, psi, theta, phi, n, seed)


def _parse_component(component):
    if isinstance(component, str):
        block, _, idx = component.partition(":")
        component = (block, int(idx or 0))
    block, idx = component
    if block not in ("psi", "theta"):
        raise ConfigError(f"component block must be 'psi' or 'theta', got {block!r}")
    return block, int(idx)


def _shift(psi, theta, block, idx, h):
    psi, theta = _as_vec(psi).copy(), _as_vec(theta).copy()
    if block == "psi":
        psi[idx] += h
    else:
        theta[idx] += h
    return psi, theta


def differentiate_expectation(measure: FiniteMeasure, psi, theta, phi, component, n: int, seed: int,
                              method: str = "auto") -> float:
    """``d/d(param) integral of phi d mu`` for one parameter component.

    ``component`` is ``("psi", i)``, ``("theta", j)`` or ``"theta:j"``.
    ``method`` is ``"analytic"`` (weak-derivative product rule, raises
    :class:`NoWeakDerivative` when unavailable), ``"fd"`` (central difference
    with a common seed) or ``"auto"`` (analytic, else fd).
    """
    block, idx = _parse_component(component)
    if method not in ("auto", "analytic", "fd"):
        raise ConfigError(f"unknown method {method!r}")
    if block not in measure.mass_depends and block not in measure.shape_depends:
        return 0.0
    if method in ("auto", "analytic"):
        try:
            return _analytic_derivative(measure, psi, theta, phi, block, idx, n, seed)
        except NoWeakDerivative:
            if method == "analytic":
                raise
    vec = _as_vec(psi if block == "psi" else theta)
    h = FD_REL_STEP * max(1.0, abs(vec[idx]))
    up = expect(measure, *_shift(psi, theta, block, idx, h), phi, n, seed)
    dn = expect(measure, *_shift(psi, theta, block, idx, -h), phi, n, seed)
    return (up - dn) / (2.0 * h)


def _analytic_derivative(measure, psi, theta, phi, block, idx, n, seed):
    total = 0.0
    if block in measure.shape_depends:
        if measure.weak_derivative is None:
            raise NoWeakDerivative(f"{measure.name} has no weak-derivative representation")
        trip = measure.weak_derivative(_as_vec(psi), _as_vec(theta), (block, idx))
        mass = measure.mass(psi, theta)
        if trip.c != 0.0 and mass != 0.0:
            plus = normalized_mean(trip.plus, psi, theta, phi, n, substream(seed, "plus"))
            minus = normalized_mean(trip.minus, psi, theta, phi, n, substream(seed, "minus"))
            total += mass * trip.c * (plus - minus)
    dm = measure.mass_derivative(psi, theta, block, idx)
    if dm != 0.0:
        total += dm * normalized_mean(measure, psi, theta, phi, n, seed)
    return total


# ---------------------------------------------------------------------------
# serialization


def measure_to_json(measure: FiniteMeasure) -> dict:
    spec = dict(measure.spec)
    spec.setdefault("kind", measure.name)
    spec.setdefault("anchor", None)
    spec.setdefault("mass", None)
    spec.setdefault("params", {})
    return spec


def measure_from_json(spec: dict, data_sampler=None, gen_sampler=None) -> FiniteMeasure:
    """Inverse of :func:`measure_to_json` for the built-in kinds."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("measure spec must be an object with a 'kind'")
    kind = spec["kind"]
    params = spec.get("params") or {}
    mass = spec.get("mass", 1.0)
    if mass is None:
        mass = 1.0
    if kind in TABLE1_KINDS:
        m = make_table1_measure(kind, spec.get("anchor"), data_sampler, gen_sampler)
    elif kind == "dirac":
        return point_mass(params.get("point", [0.0]), mass)
    elif kind == "uniform":
        return uniform(params["low"], params["high"], mass if isinstance(mass, (int, float)) else 1.0)
    elif kind == "uniform_scaled":
        m = uniform_scaled(int(params.get("index", 0)))
    elif kind == "uniform_symmetric":
        m = uniform_symmetric(float(params.get("scale", 1.0)), int(params.get("index", 0)))
    elif kind == "translated_dirac":
        m = translated_dirac()
    else:
        raise ConfigError(f"unknown measure kind {kind!r}")
    if isinstance(mass, (int, float)) and float(mass) != 1.0:
        m = m.scaled(float(mass))
    return m
