"""Jacobians, spectra and the equilibrium block structure.

At an equilibrium satisfying the assumptions the Jacobian of the joint field
is ``[[-rho Q, -R], [R^T, 0]]``.  :func:`qr_blocks` estimates ``Q`` and ``R``
directly and compares them with a finite-difference Jacobian of the Monte
Carlo field; :func:`projected_spectrum` drops the nullspaces of ``Q`` and
``R^T R`` and analyses what is left.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from ._kernels.eig import eigvals_dense
from .dynamics import MCConfig, as_mc, field_function, q_matrix, r_matrix
from .errors import ConfigError, NumericalFailure, StructureViolation

SPECTRUM_TOL = 1e-7
DENSE_LIMIT = 512
NULL_REL = 1e-6
JAC_REL_STEP = 1e-5


def jacobian_fd(field_fn, x0, h=None, seed=None) -> np.ndarray:
    """Central-difference Jacobian.

    ``field_fn(x)`` or, when ``seed`` is given, ``field_fn(x, seed)``; every
    evaluation receives the same seed.  Default step ``1e-5 max(1, |x0|_inf)``.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if h is None:
        h = JAC_REL_STEP * max(1.0, float(np.max(np.abs(x0))) if x0.size else 1.0)
    if h <= 0:
        raise ConfigError("step h must be positive")
    call = (lambda x: field_fn(x)) if seed is None else (lambda x: field_fn(x, seed))
    cols = []
    for j in range(x0.size):
        up, dn = x0.copy(), x0.copy()
        up[j] += h
        dn[j] -= h
        cols.append((np.asarray(call(up), float) - np.asarray(call(dn), float)) / (2.0 * h))
    J = np.column_stack(cols) if cols else np.zeros((0, 0))
    if not np.all(np.isfinite(J)):
        bad = np.argwhere(~np.isfinite(J))[0]
        raise NumericalFailure(f"non-finite Jacobian entry {tuple(int(i) for i in bad)}", where=x0.copy())
    return J


def _sort_eigs(ev):
    return np.array(sorted(ev, key=lambda z: (-z.real, -z.imag)), dtype=complex)


def eigenvalues(a, max_iter=None) -> np.ndarray:
    """All eigenvalues of a dense real matrix (balance, Hessenberg, Francis QR)."""
    a = np.array(a, dtype=np.float64, order="C", copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigError(f"square matrix required, got shape {a.shape}")
    n = a.shape[0]
    if n == 0:
        return np.zeros(0, dtype=complex)
    if not np.all(np.isfinite(a)):
        raise NumericalFailure("matrix has non-finite entries")
    if max_iter is None:
        max_iter = 100 * n
    wr, wi, ok = eigvals_dense(a, int(max_iter))
    if not ok:
        raise NumericalFailure(f"QR iteration did not converge within {max_iter} iterations")
    return _sort_eigs(wr + 1j * wi)


def _shift_invert(a, sigma, k, iters, seed):
    n = a.shape[0]
    lu = lu_factor(a - sigma * np.eye(n))
    m = min(n, 2 * k + 8)
    V = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, m)))[0]
    prev = None
    lam = None
    for _ in range(iters):
        W = lu_solve(lu, V)
        H = V.T @ W
        mu = eigenvalues(H)
        mu = mu[np.abs(mu) > 0]
        lam = sigma + 1.0 / mu
        lam = np.array(sorted(lam, key=lambda z: abs(z - sigma)))[:k]
        if prev is not None and np.allclose(lam, prev, rtol=1e-10, atol=1e-12):
            break
        prev = lam
        V = np.linalg.qr(W)[0]
    return lam


def leading_eigenvalues(a, k=6, sigma=None, iters=300, rounds=4, seed=0) -> np.ndarray:
    """Eigenvalues near the right edge of the spectrum by shifted inverse subspace iteration.

    Each round iterates on ``(A - sigma I)^-1`` with an LU factorization and
    moves the shift just right of the largest real part found so far.  The
    first shift is the Gershgorin bound unless ``sigma`` is given.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    k = min(int(k), n)
    if sigma is None:
        sigma = float(np.max(np.diag(a) + np.sum(np.abs(a), axis=1) - np.abs(np.diag(a)))) + 1.0
    lam = None
    for _ in range(rounds):
        lam = _shift_invert(a, sigma, k, iters, seed)
        top = float(np.max(lam.real))
        new = top + 1e-2 * max(1.0, abs(top))
        if abs(new - sigma) <= 1e-12 * max(1.0, abs(sigma)):
            break
        sigma = new
    return _sort_eigs(lam)[:k]


def verdict_of(max_real: float, tol: float = SPECTRUM_TOL) -> str:
    if max_real < -tol:
        return "stable"
    if abs(max_real) <= tol:
        return "marginal"
    return "unstable"


def _complex_list(ev):
    return [[float(z.real), float(z.imag)] for z in ev]


@dataclass
class SpectralReport:
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    verdict: str
    max_real_part: float
    tol: float = SPECTRUM_TOL
    partial: bool = False

    def to_dict(self):
        return {
            "jacobian": np.asarray(self.jacobian).tolist(),
            "eigenvalues": _complex_list(self.eigenvalues),
            "verdict": self.verdict,
            "max_real_part": self.max_real_part,
            "tol": self.tol,
            "partial": self.partial,
        }


def spectrum(matrix, tol: float = SPECTRUM_TOL) -> SpectralReport:
    """Eigenvalues and Hurwitz verdict.

    Dense QR up to dimension 512; beyond that only the leading eigenvalues
    (shift-invert subspace iteration) are reported and ``partial`` is set.
    """
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    if a.size == 0:
        a = np.zeros((0, 0))
    if a.shape[0] != a.shape[1]:
        raise ConfigError(f"square matrix required, got shape {a.shape}")
    partial = a.shape[0] > DENSE_LIMIT
    ev = leading_eigenvalues(a) if partial else eigenvalues(a)
    mr = float(np.max(ev.real)) if ev.size else 0.0
    return SpectralReport(a, ev, verdict_of(mr, tol), mr, tol, partial)


# ---------------------------------------------------------------------------
# block structure


@dataclass
class BlockReport:
    Q: np.ndarray
    R: np.ndarray
    rho: float
    residual_KDD: Optional[float] = None
    residual_KGG: Optional[float] = None
    residual_offdiag: Optional[float] = None
    nullspace_inclusion: bool = True
    sigma: Optional[float] = None
    jacobian: Optional[np.ndarray] = None
    predicted: Optional[np.ndarray] = None
    null_tol: float = 1e-6
    extra: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        vals = [v for v in (self.residual_KDD, self.residual_KGG, self.residual_offdiag) if v is not None]
        return max(vals) if vals else 0.0

    def to_dict(self):
        arr = lambda m: None if m is None else np.asarray(m).tolist()  # noqa: E731
        return {
            "Q": arr(self.Q),
            "R": arr(self.R),
            "rho": self.rho,
            "residual_KDD": self.residual_KDD,
            "residual_KGG": self.residual_KGG,
            "residual_offdiag": self.residual_offdiag,
            "nullspace_inclusion": self.nullspace_inclusion,
            "sigma": self.sigma,
            "jacobian": arr(self.jacobian),
            "predicted": arr(self.predicted),
            "null_tol": self.null_tol,
        }


def predicted_jacobian(Q, R, rho) -> np.ndarray:
    Q, R = np.atleast_2d(Q), np.atleast_2d(R)
    p, t = R.shape
    return np.block([[-rho * Q, -R], [R.T, np.zeros((t, t))]])


def _split(sym, rel=NULL_REL):
    """Eigen-split of a symmetric PSD matrix: ``(T, lam, S)`` for kept / dropped directions."""
    lam, vec = np.linalg.eigh(0.5 * (sym + sym.T))
    top = float(lam[-1]) if lam.size else 0.0
    keep = lam > rel * top if top > 0 else np.zeros(lam.size, bool)
    return vec[:, keep], lam[keep], vec[:, ~keep]


def nullspace_inclusion(Q, R, tol=1e-6) -> bool:
    """``N(Q) subset N(R^T)``: ``|R^T u| <= tol`` for an orthonormal basis of ``N(Q)``."""
    _, _, S = _split(np.atleast_2d(Q))
    if S.shape[1] == 0:
        return True
    return bool(np.max(np.linalg.norm(np.atleast_2d(R).T @ S, axis=0)) <= tol)


def block_report(Q, R, rho, null_tol=1e-6) -> BlockReport:
    """A :class:`BlockReport` from given ``Q`` and ``R`` (no Jacobian comparison)."""
    Q, R = np.atleast_2d(np.asarray(Q, float)), np.atleast_2d(np.asarray(R, float))
    if R.shape[0] != Q.shape[0]:
        raise ConfigError("R must have as many rows as Q")
    return BlockReport(Q, R, float(rho), nullspace_inclusion=nullspace_inclusion(Q, R, null_tol),
                       null_tol=null_tol)


def qr_blocks(problem, equilibrium, mc, h=None) -> BlockReport:
    """Estimate ``Q``, ``R`` and compare ``[[-rho Q, -R], [R^T, 0]]`` with the FD Jacobian."""
    mc = as_mc(mc)
    psi = np.atleast_1d(np.asarray(equilibrium[0], float))
    theta = np.atleast_1d(np.asarray(equilibrium[1], float))
    Q, Q_se = q_matrix(problem, psi, theta, mc)
    R, R_se = r_matrix(problem, psi, theta, mc)
    x0 = np.concatenate([psi, theta])
    J = jacobian_fd(field_function(problem, mc), x0, h)
    P = psi.size
    pred = predicted_jacobian(Q, R, problem.rho)
    fro = lambda m: float(np.linalg.norm(m))  # noqa: E731
    r_dd = fro(J[:P, :P] - pred[:P, :P])
    r_gg = fro(J[P:, P:])
    r_off = float(np.hypot(fro(J[:P, P:] - pred[:P, P:]), fro(J[P:, :P] - pred[P:, :P])))
    q_sig = fro(Q_se) if Q_se is not None else 0.0
    r_sig = fro(np.nan_to_num(R_se)) if R_se is not None else 0.0
    sigma = float(np.hypot(problem.rho * q_sig, np.sqrt(2.0) * r_sig))
    null_tol = max(1e-6, 3.0 * r_sig)
    return BlockReport(Q, R, float(problem.rho), r_dd, r_gg, r_off, nullspace_inclusion(Q, R, null_tol),
                       sigma, J, pred, null_tol, {"Q_se": Q_se, "R_se": R_se, "mc": {"n": mc.n, "seed": mc.seed}})


def projected_matrix(Q, R, rho) -> np.ndarray:
    """``[[-rho Lambda_D, -T_D^T R T_G], [T_G^T R^T T_D, 0]]`` on the non-null directions."""
    Q, R = np.atleast_2d(Q), np.atleast_2d(R)
    T_D, lam_D, _ = _split(Q)
    T_G, _, _ = _split(R.T @ R)
    if T_G.shape[1] == 0:
        return -rho * np.diag(lam_D)
    C = T_D.T @ R @ T_G
    g = T_G.shape[1]
    return np.block([[-rho * np.diag(lam_D), -C], [C.T, np.zeros((g, g))]])


def projected_spectrum(block: BlockReport, rho=None, tol: float = SPECTRUM_TOL) -> SpectralReport:
    """Spectrum of the system restricted to the non-null directions of ``Q`` and ``R^T R``.

    With no generator directions left only the discriminator block
    ``-rho Lambda_D`` remains; with nothing left the verdict is marginal.
    """
    if not block.nullspace_inclusion:
        raise StructureViolation("N(Q) is not contained in N(R^T): the block hypotheses fail")
    rho = block.rho if rho is None else float(rho)
    return spectrum(projected_matrix(block.Q, block.R, rho), tol)
