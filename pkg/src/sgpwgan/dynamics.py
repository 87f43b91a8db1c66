"""The joint (psi, theta) vector field of the simple-gradient-penalty WGAN.

    psi_dot   = E_pd[grad_psi D] - E_ptheta[grad_psi D] - rho/2 grad_psi E_mu[|grad_x D|^2]
    theta_dot = E_z[J_theta G(z)^T grad_x D(G(z))]

All expectations inside one call share their random numbers: the data batch
uses sub-seed ``"data"``, the latent batch ``"latent"``, and the penalty
measure is sampled with the call seed itself (the Table 1 measures derive
the same sub-seeds, so ``mu_pd`` is literally the data batch).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, NumericalFailure
from .measure import (
    FiniteMeasure,
    differentiate_expectation,
    make_table1_measure,
    point_mass,
    stratified_uniform,
    substream,
    uniform_symmetric,
)
from .nets import DiracGenerator, MonomialDiscriminator, ScaleGenerator

DEFAULT_TOL = 1e-4
PROBE_RADIUS = 1e-2
PROBE_DIRECTIONS = 8


@dataclass(frozen=True)
class MCConfig:
    n: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if int(self.n) < 1:
            raise ConfigError("mc.n must be >= 1")


def as_mc(mc) -> MCConfig:
    if isinstance(mc, MCConfig):
        return mc
    if mc is None:
        return MCConfig()
    if isinstance(mc, dict):
        return MCConfig(int(mc.get("n", 10_000)), int(mc.get("seed", 0)))
    n, seed = mc
    return MCConfig(int(n), int(seed))


@dataclass(frozen=True)
class SGPProblem:
    """``(D, p_d, p_theta, mu)`` with penalty weight ``rho``.

    ``data_sampler(n, seed)`` and ``latent_sampler(n, seed)`` return
    ``(n, dim)`` batches.  ``rho = 0`` is accepted so the unpenalized system
    can be studied with the same code.
    """

    discriminator: object
    generator: object
    data_sampler: Callable
    latent_sampler: Callable
    penalty: FiniteMeasure
    rho: float
    name: str = "problem"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.rho) or self.rho < 0:
            raise ConfigError(f"rho must be a finite non-negative number, got {self.rho}")

    @property
    def dim_psi(self) -> int:
        return int(self.discriminator.n_params)

    @property
    def dim_theta(self) -> int:
        return int(self.generator.n_params)

    def gen_sampler(self, theta, n, seed):
        z = np.asarray(self.latent_sampler(n, seed), float)
        return self.generator.sample(z, np.atleast_1d(np.asarray(theta, float)))

    def with_rho(self, rho):
        from dataclasses import replace
        return replace(self, rho=float(rho))

    def with_penalty(self, penalty):
        from dataclasses import replace
        return replace(self, penalty=penalty)


def _vec(p):
    return np.atleast_1d(np.asarray(p, dtype=float))


def _check_finite(arr, what, problem, x=None, psi=None):
    if np.all(np.isfinite(arr)):
        return
    where, layer = None, None
    if x is not None and arr.ndim >= 1 and arr.shape[0] == x.shape[0]:
        bad = ~np.isfinite(arr.reshape(arr.shape[0], -1)).all(axis=1)
        k = int(np.flatnonzero(bad)[0])
        where = x[k].copy()
        locate = getattr(problem.discriminator, "first_bad_layer", None)
        if locate is not None and psi is not None:
            layer = locate(x[k:k + 1], psi)
    msg = f"non-finite {what}"
    if layer is not None and layer >= 0:
        msg += f" (first non-finite activation in layer {layer})"
    raise NumericalFailure(msg, where=where)


def _batches(problem, theta, mc):
    xd = np.asarray(problem.data_sampler(mc.n, substream(mc.seed, "data")), float)
    z = np.asarray(problem.latent_sampler(mc.n, substream(mc.seed, "latent")), float)
    if xd.ndim == 1:
        xd = xd[:, None]
    if z.ndim == 1:
        z = z[:, None]
    xg = problem.generator.sample(z, theta)
    return xd, z, xg


# ---------------------------------------------------------------------------
# penalty


def penalty_value(problem: SGPProblem, psi, theta, mc) -> float:
    """``E_mu[|grad_x D|^2]`` (non-negative)."""
    mc = as_mc(mc)
    psi, theta = _vec(psi), _vec(theta)
    mu = problem.penalty
    pts = mu.sample(psi, theta, mc.n, mc.seed)
    g = problem.discriminator.grad_x(pts, psi)
    _check_finite(g, "discriminator input gradient on penalty samples", problem, pts, psi)
    return mu.mass(psi, theta) * float(np.mean(np.sum(g * g, axis=1)))


def _penalty_correction(problem, psi, theta, mc):
    mu = problem.penalty
    if "psi" not in mu.mass_depends and "psi" not in mu.shape_depends:
        return np.zeros_like(psi)
    D = problem.discriminator

    def phi(x):
        g = D.grad_x(x, psi)
        return np.sum(g * g, axis=1)

    return np.array([differentiate_expectation(mu, psi, theta, phi, ("psi", i), mc.n, mc.seed)
                     for i in range(psi.size)])


def _penalty_rows(problem, psi, theta, mc):
    mu = problem.penalty
    pts = mu.sample(psi, theta, mc.n, mc.seed)
    mass = mu.mass(psi, theta)
    g = problem.discriminator.grad_x(pts, psi)
    _check_finite(g, "discriminator input gradient on penalty samples", problem, pts, psi)
    return pts, g, mass


def penalty_gradient(problem: SGPProblem, psi, theta, mc) -> np.ndarray:
    """``grad_psi E_mu[|grad_x D|^2]``.

    The integrand part is ``M * mean(2 grad_psix D^T grad_x D)``, computed as
    ``grad_psi (v . grad_x D)`` with ``v = 2 grad_x D`` held fixed.  When the
    measure itself moves with ``psi`` the product-rule term from
    :func:`differentiate_expectation` is added.
    """
    mc = as_mc(mc)
    psi, theta = _vec(psi), _vec(theta)
    pts, g, mass = _penalty_rows(problem, psi, theta, mc)
    out = problem.discriminator.mixed_grad(pts, psi, 2.0 * g) * (mass / pts.shape[0])
    out = out + _penalty_correction(problem, psi, theta, mc)
    _check_finite(out, "penalty gradient", problem)
    return out


# ---------------------------------------------------------------------------
# vector field


@dataclass
class DriftEstimate:
    psi_dot: np.ndarray
    theta_dot: np.ndarray
    psi_se: np.ndarray
    theta_se: np.ndarray


def vector_field(problem: SGPProblem, psi, theta, mc) -> tuple:
    """Monte Carlo ``(psi_dot, theta_dot)``; deterministic for a fixed seed."""
    mc = as_mc(mc)
    psi, theta = _vec(psi), _vec(theta)
    D = problem.discriminator
    xd, z, xg = _batches(problem, theta, mc)
    _check_finite(xg, "generator output", problem)
    n = mc.n
    g_data = D.grad_psi(xd, psi) / n
    g_gen = D.grad_psi(xg, psi) / n
    _check_finite(g_data, "discriminator parameter gradient on data", problem)
    _check_finite(g_gen, "discriminator parameter gradient on generator samples", problem)
    psi_dot = g_data - g_gen
    if problem.rho != 0.0:
        psi_dot = psi_dot - 0.5 * problem.rho * penalty_gradient(problem, psi, theta, mc)
    cot = D.grad_x(xg, psi)
    _check_finite(cot, "discriminator input gradient on generator samples", problem, xg, psi)
    theta_dot = problem.generator.vjp(z, theta, cot) / n
    _check_finite(theta_dot, "generator drift", problem)
    return psi_dot, theta_dot


def vector_field_stats(problem: SGPProblem, psi, theta, mc) -> DriftEstimate:
    """Drifts with per-component standard errors from per-sample contributions.

    The product-rule correction for psi-dependent measures is added to the
    mean without an error bar.
    """
    mc = as_mc(mc)
    psi, theta = _vec(psi), _vec(theta)
    D = problem.discriminator
    xd, z, xg = _batches(problem, theta, mc)
    rows = D.grad_psi_per_sample(xd, psi) - D.grad_psi_per_sample(xg, psi)
    correction = np.zeros_like(psi)
    if problem.rho != 0.0:
        pts, g, mass = _penalty_rows(problem, psi, theta, mc)
        if pts.shape[0] != rows.shape[0]:
            raise ConfigError("penalty sampler returned a batch of the wrong size")
        rows = rows - 0.5 * problem.rho * mass * D.mixed_grad_per_sample(pts, psi, 2.0 * g)
        correction = -0.5 * problem.rho * _penalty_correction(problem, psi, theta, mc)
    cot = D.grad_x(xg, psi)
    trows = problem.generator.vjp_per_sample(z, theta, cot)
    _check_finite(rows, "psi drift", problem)
    _check_finite(trows, "theta drift", problem)
    n = mc.n
    se = lambda r: r.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full(r.shape[1], np.inf)  # noqa: E731
    return DriftEstimate(rows.mean(axis=0) + correction, trows.mean(axis=0), se(rows), se(trows))


def field_function(problem: SGPProblem, mc) -> Callable:
    """``x -> concat(psi_dot, theta_dot)`` on the stacked state ``(psi, theta)``."""
    mc = as_mc(mc)
    p = problem.dim_psi

    def f(x):
        x = np.asarray(x, float)
        a, b = vector_field(problem, x[:p], x[p:], mc)
        return np.concatenate([a, b])

    return f


# ---------------------------------------------------------------------------
# equilibrium blocks


def _basis_rows(D, pts, psi):
    dim = pts.shape[1]
    rows = []
    for k in range(dim):
        v = np.zeros_like(pts)
        v[:, k] = 1.0
        rows.append(D.mixed_grad_per_sample(pts, psi, v))
    return rows


def q_matrix(problem: SGPProblem, psi, theta, mc):
    """``Q = E_mu[grad_psix D grad_psix D^T]`` and the elementwise standard error."""
    mc = as_mc(mc)
    psi, theta = _vec(psi), _vec(theta)
    mu = problem.penalty
    pts = mu.sample(psi, theta, mc.n, mc.seed)
    mass = mu.mass(psi, theta)
    rows = _basis_rows(problem.discriminator, pts, psi)
    n, P = pts.shape[0], psi.size
    Q = np.zeros((P, P))
    for r in rows:
        Q += r.T @ r
    Q *= mass / n
    Q = 0.5 * (Q + Q.T)
    if P <= 64:
        outer = sum(r[:, :, None] * r[:, None, :] for r in rows) * mass
        se = outer.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full((P, P), np.inf)
    else:
        se = None
    return Q, se


def r_matrix(problem: SGPProblem, psi, theta, mc):
    """``R = grad_theta E_ptheta[grad_psi D]`` (``dim psi x dim theta``) by reparameterization.

    Column ``j`` is ``E_z[grad_psi (v . grad_x D(G(z)))]`` with ``v = dG/dtheta_j``.
    """
    mc = as_mc(mc)
    psi, theta = _vec(psi), _vec(theta)
    z = np.asarray(problem.latent_sampler(mc.n, substream(mc.seed, "latent")), float)
    if z.ndim == 1:
        z = z[:, None]
    xg = problem.generator.sample(z, theta)
    D = problem.discriminator
    cols, ses = [], []
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = 1.0
        v = problem.generator.jvp(z, theta, e)
        per = D.mixed_grad_per_sample(xg, psi, v) if psi.size <= 4096 else None
        if per is not None:
            cols.append(per.mean(axis=0))
            ses.append(per.std(axis=0, ddof=1) / np.sqrt(mc.n) if mc.n > 1 else np.full(psi.size, np.inf))
        else:
            cols.append(D.mixed_grad(xg, psi, v) / mc.n)
            ses.append(np.full(psi.size, np.nan))
    return np.column_stack(cols), np.column_stack(ses)


# ---------------------------------------------------------------------------
# assumptions


@dataclass
class AssumptionCheck:
    verdict: str  # pass / fail / inconclusive
    value: Optional[float] = None
    witness: object = None
    detail: str = ""

    def to_dict(self):
        w = self.witness
        if isinstance(w, np.ndarray):
            w = w.tolist()
        return {"verdict": self.verdict, "value": self.value, "witness": w, "detail": self.detail}


@dataclass
class AssumptionReport:
    checks: dict
    equilibrium: tuple
    tol: float

    def __getitem__(self, key):
        return self.checks[key]

    def to_dict(self):
        psi, theta = self.equilibrium
        return {
            "equilibrium": {"psi": _vec(psi).tolist(), "theta": _vec(theta).tolist()},
            "tol": self.tol,
            "checks": {k: v.to_dict() for k, v in sorted(self.checks.items())},
        }


def _probe_thetas(theta, seed, radius=PROBE_RADIUS, k=PROBE_DIRECTIONS):
    rng = np.random.default_rng(substream(seed, "probe"))
    dirs = rng.standard_normal((k, theta.size))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return [theta] + [theta + radius * d for d in dirs]


def _max_abs_check(values_by_probe, tol, label):
    best, witness = -1.0, None
    for vals, pts in values_by_probe:
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, witness = float(vals[k]), pts[k]
    verdict = "pass" if best <= tol else "fail"
    return AssumptionCheck(verdict, best, None if verdict == "pass" else np.asarray(witness), label)


def check_assumptions(problem: SGPProblem, equilibrium, cfg=None) -> AssumptionReport:
    """Sample-based checks of the equilibrium and penalty-measure assumptions.

    ``cfg`` carries ``n``, ``seed`` and ``tol`` (absolute, default 1e-4).
    A3 and A6c probe ``theta*`` plus 8 random directions at radius 1e-2.
    A6b is the eigenvalue test on ``Q``; the support-inclusion alternative is
    reported separately as ``A6b-support``.
    """
    cfg = dict(cfg or {})
    mc = MCConfig(int(cfg.get("n", 10_000)), int(cfg.get("seed", 0)))
    tol = float(cfg.get("tol", DEFAULT_TOL))
    psi, theta = _vec(equilibrium[0]), _vec(equilibrium[1])
    D, mu = problem.discriminator, problem.penalty
    checks = {}

    xd = np.asarray(problem.data_sampler(mc.n, substream(mc.seed, "data")), float).reshape(mc.n, -1)
    checks["A1"] = _max_abs_check([(np.abs(D.value(xd, psi)), xd)], tol, "max |D(x; psi*)| over data samples")

    probes = _probe_thetas(theta, mc.seed)
    gen_vals = []
    for i, th in enumerate(probes):
        xg = problem.gen_sampler(th, mc.n, substream(mc.seed, "latent", i))
        gen_vals.append((np.abs(D.value(xg, psi)), xg))
    checks["A3"] = _max_abs_check(gen_vals, tol, "max |D(x; psi*)| over generator samples at probed theta")

    # A6a: mass finite, non-negative and bounded at the probes; support free of psi
    masses = []
    try:
        masses = [mu.mass(psi, th) for th in probes]
        mass_ok = True
    except Exception as exc:  # InvalidMeasure
        mass_ok = False
        mass_detail = str(exc)
    if not mass_ok:
        checks["A6a-mass"] = AssumptionCheck("fail", None, None, mass_detail)
    elif "psi" in mu.shape_depends:
        checks["A6a-mass"] = AssumptionCheck("fail", max(masses), "psi", "normalized measure depends on psi")
    else:
        checks["A6a-mass"] = AssumptionCheck("pass", max(masses), None, "max mass over probes")

    Q, _ = q_matrix(problem, psi, theta, mc)
    evals, evecs = np.linalg.eigh(Q)
    lam = float(evals[0])
    if lam > tol:
        checks["A6b"] = AssumptionCheck("pass", lam, None, "smallest eigenvalue of Q")
    else:
        checks["A6b"] = AssumptionCheck("fail", lam, {"eigenvalue": lam, "eigenvector": evecs[:, 0].tolist()},
                                        "smallest eigenvalue of Q")

    inside = mu.in_support(xd, psi, theta)
    if inside is None:
        checks["A6b-support"] = AssumptionCheck("inconclusive", None, None, "measure has no support predicate")
    elif inside.all():
        checks["A6b-support"] = AssumptionCheck("pass", 1.0, None, "fraction of data samples inside supp(mu*)")
    else:
        k = int(np.flatnonzero(~inside)[0])
        checks["A6b-support"] = AssumptionCheck("fail", float(inside.mean()), xd[k],
                                                "fraction of data samples inside supp(mu*)")

    grad_vals = []
    for i, th in enumerate(probes):
        pts = mu.sample(psi, th, mc.n, substream(mc.seed, "penalty", i))
        grad_vals.append((np.linalg.norm(D.grad_x(pts, psi), axis=1), pts))
    checks["A6c"] = _max_abs_check(grad_vals, tol, "max |grad_x D(x; psi*)| over penalty samples at probed theta")

    for name, why in (("A2", "quantifies over a neighbourhood of the equilibrium"),
                      ("A4", "quantifies over all nearby equilibria"),
                      ("A5", "strong form of A6; checked through A6a-c")):
        checks[name] = AssumptionCheck("inconclusive", None, None, f"not machine-checkable: {why}")
    return AssumptionReport(checks, (psi, theta), tol)


# ---------------------------------------------------------------------------
# toy problems


def _zeros(n, seed):
    return np.zeros((n, 1))


def _sym_uniform(n, seed):
    return (2.0 * stratified_uniform(n, seed) - 1.0)[:, None]


def dirac_problem(rho=1.0, mass="const:1") -> SGPProblem:
    """``D = psi x``, ``p_d = delta_0``, ``p_theta = delta_theta``, ``mu = M delta_0``."""
    return SGPProblem(MonomialDiscriminator(1), DiracGenerator(), _zeros, _zeros,
                      point_mass([0.0], mass), float(rho), name="dirac", meta={"mass": str(mass)})


def quadratic_problem(rho=1.0, penalty="uniform") -> SGPProblem:
    """``D = psi x^2``, ``p_d = U(-1,1)``, ``p_theta = U(-|theta|,|theta|)``.

    ``penalty`` is ``"uniform"`` (``mu_theta = U(-|theta|, |theta|)``) or a
    Table 1 kind.
    """
    D, G = MonomialDiscriminator(2), ScaleGenerator()
    if penalty == "uniform":
        mu = uniform_symmetric(1.0)
    else:
        mu = make_table1_measure(penalty, None if penalty != "g_anc" else [0.0], _sym_uniform,
                                 lambda th, n, s: G.sample(_sym_uniform(n, s), th))
    return SGPProblem(D, G, _sym_uniform, _sym_uniform, mu, float(rho), name="quadratic",
                      meta={"penalty": penalty})


def quadratic_dirac_problem(rho=0.375, penalty="gp") -> SGPProblem:
    """``D = psi x^2`` on the Dirac pair ``(delta_0, delta_theta)`` with a Table 1 penalty."""
    G = DiracGenerator()
    mu = make_table1_measure(penalty, None if penalty != "g_anc" else [0.0], _zeros,
                             lambda th, n, s: G.sample(_zeros(n, s), th))
    return SGPProblem(MonomialDiscriminator(2), G, _zeros, _zeros, mu, float(rho), name="quadratic-dirac",
                      meta={"penalty": penalty})


def toy_problem(name: str, rho: float, mass="const:1", penalty=None) -> SGPProblem:
    if name == "dirac":
        return dirac_problem(rho, mass)
    if name == "quadratic":
        return quadratic_problem(rho, penalty or "uniform")
    if name == "quadratic-dirac":
        return quadratic_dirac_problem(rho, penalty or "gp")
    raise ConfigError(f"unknown toy problem {name!r}")
