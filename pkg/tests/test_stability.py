import cmath

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sgpwgan.analytic_systems import toy_system
from sgpwgan.dynamics import dirac_problem, quadratic_dirac_problem, quadratic_problem
from sgpwgan.errors import NumericalFailure, StructureViolation
from sgpwgan.stability import (
    block_report,
    eigenvalues,
    jacobian_fd,
    leading_eigenvalues,
    nullspace_inclusion,
    predicted_jacobian,
    projected_matrix,
    projected_spectrum,
    qr_blocks,
    spectrum,
    verdict_of,
)


def _closed_2x2(m):
    tr, det = m[0, 0] + m[1, 1], m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    r = cmath.sqrt(tr * tr / 4 - det)
    return sorted([tr / 2 + r, tr / 2 - r], key=lambda z: (-z.real, -z.imag))


def test_jacobian_of_linear_field_is_exact():
    A = np.array([[0.0, -1.0], [1.0, 0.0]])
    assert np.allclose(jacobian_fd(lambda x: A @ x, [0.3, -0.2]), A, atol=1e-10, rtol=0)


def test_jacobian_examples():
    J = jacobian_fd(toy_system("dirac", 1.0).as_vector_field(), [0.0, 0.0])
    assert np.allclose(J, [[-1, -1], [1, 0]], atol=1e-8)
    J = jacobian_fd(toy_system("quadratic", 1.5, second_moment=1 / 3).as_vector_field(), [0.0, 1.0])
    assert np.allclose(J, [[-2, -2 / 3], [2 / 3, 0]], atol=1e-6)


def test_jacobian_passes_seed_to_every_evaluation():
    seen = []
    jacobian_fd(lambda x, s: seen.append(s) or x, [1.0, 2.0], seed=42)
    assert seen == [42] * 4


def test_jacobian_non_finite_raises():
    with pytest.raises(NumericalFailure):
        jacobian_fd(lambda x: np.where(x > 1.0, np.inf, x), [1.0])


def test_spectrum_examples():
    r = spectrum([[-1, -1], [1, 0]])
    assert np.allclose(r.eigenvalues, [-0.5 + np.sqrt(3) / 2 * 1j, -0.5 - np.sqrt(3) / 2 * 1j], atol=1e-12)
    assert r.verdict == "stable"
    r = spectrum([[0, -2 / 3], [2 / 3, 0]])
    assert np.allclose(r.eigenvalues, [2j / 3, -2j / 3], atol=1e-12) and r.verdict == "marginal"
    r = spectrum(np.eye(2))
    assert np.allclose(r.eigenvalues, [1, 1]) and r.verdict == "unstable"


def test_verdict_boundaries():
    assert verdict_of(-2e-7) == "stable"
    assert verdict_of(1e-7) == "marginal" and verdict_of(-1e-7) == "marginal"
    assert verdict_of(2e-7) == "unstable"


def test_spectrum_agrees_with_2x2_closed_form_on_1000_matrices():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        m = rng.uniform(-5, 5, (2, 2))
        worst = max(worst, np.max(np.abs(eigenvalues(m) - np.array(_closed_2x2(m)))))
    assert worst <= 1e-9


@settings(max_examples=60)
@given(st.integers(1, 40), st.integers(0, 2**31))
def test_eigenvalues_match_lapack(n, seed):
    a = np.random.default_rng(seed).normal(size=(n, n))
    ours = eigenvalues(a)
    ref = np.sort_complex(np.linalg.eigvals(a))
    # compare as multisets: each of ours is close to some reference eigenvalue and traces agree
    assert np.max(np.min(np.abs(ours[:, None] - ref[None, :]), axis=1)) <= 1e-8 * max(1, np.abs(ref).max())
    assert abs(ours.sum().real - np.trace(a)) <= 1e-9 * n * max(1, np.abs(a).max())


@settings(max_examples=100)
@given(st.integers(1, 4), st.integers(1, 3), st.floats(0.1, 5), st.integers(0, 2**31))
def test_block_jacobian_never_has_positive_real_part(p, t, rho, seed):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(p, p))
    Q = B @ B.T
    R = rng.normal(size=(p, t))
    ev = eigenvalues(predicted_jacobian(Q, R, rho))
    assert np.max(ev.real) <= 1e-8 * max(1.0, np.abs(ev).max())


def test_dirac_blocks_at_origin():
    b = qr_blocks(dirac_problem(1.0), ([0.0], [0.0]), (4, 0))
    assert np.allclose(b.Q, [[1.0]]) and np.allclose(b.R, [[1.0]])
    assert b.max_residual <= 1e-6 and b.nullspace_inclusion
    assert projected_spectrum(b).verdict == spectrum(b.jacobian).verdict == "stable"


@pytest.mark.parametrize("eq", [(0.0, 1.0), (0.0, -1.0)])
def test_quadratic_blocks(eq):
    b = qr_blocks(quadratic_problem(1.5), ([eq[0]], [eq[1]]), (10**5, 0))
    assert abs(b.Q[0, 0] - 4 / 3) <= 3 * b.extra["Q_se"][0, 0] + 1e-6
    assert abs(abs(b.R[0, 0]) - 2 / 3) <= 3 * b.extra["R_se"][0, 0] + 1e-6
    assert b.max_residual <= max(3 * b.sigma, 1e-6)
    rep = projected_spectrum(b)
    assert rep.verdict == "stable"
    lam = sorted(rep.eigenvalues.real)
    assert lam == pytest.approx([-1 - np.sqrt(5) / 3, -1 + np.sqrt(5) / 3], abs=1e-2)


def test_degenerate_zero_blocks():
    b = qr_blocks(quadratic_dirac_problem(0.375), ([0.0], [0.0]), (16, 0))
    assert np.all(b.Q == 0) and np.all(b.R == 0) and b.nullspace_inclusion
    rep = projected_spectrum(b)
    assert rep.eigenvalues.size == 0 and rep.verdict == "marginal"


def test_inclusion_requires_r_zero_when_q_zero():
    assert not nullspace_inclusion([[0.0]], [[1.0]])
    with pytest.raises(StructureViolation):
        projected_spectrum(block_report([[0.0]], [[1.0]], 1.0))


def test_projection_drops_one_nullspace_direction():
    b = block_report(np.diag([1.0, 0.0]), [[1.0], [0.0]], 1.0)
    Jp = projected_matrix(b.Q, b.R, 1.0)
    assert Jp.shape == (2, 2)
    assert np.allclose(np.abs(Jp), [[1, 1], [1, 0]])
    assert projected_spectrum(b).verdict == "stable"


def test_projection_with_no_generator_directions():
    b = block_report(np.diag([2.0, 0.5]), np.zeros((2, 1)), 1.5)
    rep = projected_spectrum(b)
    assert sorted(rep.eigenvalues.real) == pytest.approx([-3.0, -0.75])
    assert rep.verdict == "stable"


def test_full_rank_projection_matches_raw_spectrum():
    rng = np.random.default_rng(3)
    for _ in range(20):
        B = rng.normal(size=(3, 3))
        Q, R = B @ B.T + 0.1 * np.eye(3), rng.normal(size=(3, 2))
        raw = spectrum(predicted_jacobian(Q, R, 1.0))
        proj = projected_spectrum(block_report(Q, R, 1.0))
        assert raw.verdict == proj.verdict
        assert np.allclose(np.sort_complex(raw.eigenvalues), np.sort_complex(proj.eigenvalues), atol=1e-8)


def _rand_orth(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))


@settings(max_examples=40)
@given(st.integers(2, 5), st.integers(1, 3), st.integers(0, 4), st.integers(0, 2**31))
def test_projected_verdict_invariant_under_rebasing(p, t, null, seed):
    rng = np.random.default_rng(seed)
    k = max(1, p - null)
    B = rng.normal(size=(p, k))
    Q = B @ B.T
    # R must vanish on N(Q): build it from range(Q)
    R = B @ rng.normal(size=(k, t))
    U, V = _rand_orth(rng, p), _rand_orth(rng, t)
    a = projected_spectrum(block_report(Q, R, 1.0, null_tol=1e-8 * (1 + np.abs(R).max())))
    b = projected_spectrum(block_report(U @ Q @ U.T, U @ R @ V, 1.0, null_tol=1e-8 * (1 + np.abs(R).max())))
    assert a.verdict == b.verdict
    assert np.allclose(np.sort_complex(a.eigenvalues), np.sort_complex(b.eigenvalues), atol=1e-6)


def test_large_dimension_uses_partial_path():
    rng = np.random.default_rng(0)
    n = 600
    a = np.diag(-np.linspace(1.0, 10.0, n)) + 0.01 * rng.normal(size=(n, n))
    rep = spectrum(a)
    assert rep.partial and rep.verdict == "stable"
    ref = np.linalg.eigvals(a)
    top = ref[np.argmax(ref.real)]
    assert abs(rep.max_real_part - top.real) <= 1e-6
    assert leading_eigenvalues(a, k=3).size == 3


def test_reports_serialise():
    from sgpwgan.export import dumps
    b = qr_blocks(dirac_problem(1.0), ([0.0], [0.0]), (4, 0))
    assert '"residual_KDD"' in dumps(b)
    assert '"verdict": "stable"' in dumps(spectrum(b.jacobian))
