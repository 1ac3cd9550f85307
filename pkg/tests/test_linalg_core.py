import math

import numpy as np
import pytest
import scipy.linalg

from modules.error_handler import NumericalError, ValidationError
from modules.linalg_core import (
    RankTolerance,
    char_poly,
    eigenvalues,
    expm,
    min_norm_lstsq,
    null_space,
    numerical_rank,
    pinv,
    singular_values,
)

ROTATION = np.array([[0.0, -1.0], [1.0, 0.0]])


# ------------------ expm ------------------

def test_expm_at_zero_time_is_identity(rng):
    M = rng.standard_normal((4, 4))
    assert np.array_equal(expm(M, 0.0), np.eye(4))


@pytest.mark.parametrize("t", [0.3, 1.0, 2.5, -1.7])
def test_expm_rotation_closed_form(t):
    expected = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    assert np.allclose(expm(ROTATION, t), expected, atol=1e-13)


def test_expm_diagonal():
    result = expm(np.diag([-1.0, 2.0]), 1.0)
    assert result[0, 0] == pytest.approx(math.exp(-1.0), rel=1e-13)
    assert result[1, 1] == pytest.approx(math.exp(2.0), rel=1e-13)
    assert result[0, 1] == 0.0 and result[1, 0] == 0.0


def test_expm_matches_scipy_across_norms(rng):
    for scale in (1e-3, 0.1, 1.0, 5.0, 20.0):
        for _ in range(5):
            n = int(rng.integers(1, 7))
            M = rng.standard_normal((n, n))
            M *= scale / np.linalg.norm(M, 1)
            ref = scipy.linalg.expm(M)
            err = np.linalg.norm(expm(M) - ref) / np.linalg.norm(ref)
            assert err <= 1e-12


def test_expm_semigroup_and_inverse(rng):
    M = rng.standard_normal((3, 3))
    M *= 2.0 / np.linalg.norm(M, 2)
    s, t = 0.7, 1.9
    lhs = expm(M, s + t)
    assert np.linalg.norm(lhs - expm(M, s) @ expm(M, t)) <= 1e-10 * np.linalg.norm(lhs)
    assert np.allclose(expm(M, t) @ expm(-M, t), np.eye(3), atol=1e-10)


def test_expm_rejects_bad_input():
    with pytest.raises(ValidationError):
        expm(np.ones((2, 3)))
    with pytest.raises(ValidationError):
        expm(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_expm_overflow_is_numerical_error():
    with pytest.raises(NumericalError):
        expm(np.array([[800.0]]), 2.0)


# ------------------ SVD kernels ------------------

def test_singular_values_simple_cases():
    assert np.allclose(singular_values(np.eye(3)), [1.0, 1.0, 1.0])
    assert np.allclose(singular_values(np.array([[1.0, 0.0], [0.0, 0.0]])), [1.0, 0.0])


def test_singular_values_match_symmetric_eigen_oracle(rng):
    M = rng.standard_normal((4, 3))
    oracle = np.sqrt(np.sort(np.linalg.eigvalsh(M.T @ M))[::-1])
    assert np.allclose(singular_values(M), oracle, atol=1e-10)


def test_numerical_rank_examples():
    assert numerical_rank(np.eye(5)) == 5
    tau1 = 0.4
    deg = RankTolerance(absolute=1e-10)
    S_pi = np.hstack([expm(ROTATION, tau1) @ [[1.0], [0.0]], expm(ROTATION, tau1 + math.pi) @ [[1.0], [0.0]]])
    S_half = np.hstack([expm(ROTATION, tau1) @ [[1.0], [0.0]], expm(ROTATION, tau1 + math.pi / 2) @ [[1.0], [0.0]]])
    assert numerical_rank(S_pi, deg) == 1
    assert numerical_rank(S_half) == 2


def test_numerical_rank_invariant_under_orthogonal_transforms(rng):
    M = rng.standard_normal((5, 2)) @ rng.standard_normal((2, 4))
    Q1, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    Q2, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    tol = RankTolerance(absolute=1e-10)
    assert numerical_rank(M, tol) == 2
    assert numerical_rank(Q1 @ M @ Q2, tol) == 2
    assert numerical_rank(M[::-1, ::-1], tol) == 2


def test_rank_tolerance_policies():
    sv = np.array([2.0, 1e-12])
    assert RankTolerance().threshold(sv, (3, 4)) == pytest.approx(2.0 * 4 * np.finfo(float).eps)
    assert RankTolerance(absolute=1e-6).threshold(sv, (3, 4)) == 1e-6


def test_min_norm_lstsq_identity(rng):
    r = rng.standard_normal(4)
    sol = min_norm_lstsq(np.eye(4), r)
    assert np.allclose(sol.x, r)
    assert sol.residual == pytest.approx(0.0, abs=1e-14)
    assert sol.rank == 4


def test_min_norm_lstsq_rank_deficient_projection():
    sol = min_norm_lstsq(np.array([[1.0, 0.0], [0.0, 0.0]]), [2.0, 3.0])
    assert np.allclose(sol.x, [2.0, 0.0])
    assert sol.residual == pytest.approx(3.0)
    assert sol.rank == 1


def test_min_norm_lstsq_underdetermined_is_orthogonal_to_null_space(rng):
    M = rng.standard_normal((3, 5))
    r = rng.standard_normal(3)
    sol = min_norm_lstsq(M, r)
    assert np.allclose(M @ sol.x, r, atol=1e-10)
    kernel = null_space(M)
    assert kernel.shape == (5, 2)
    assert np.allclose(kernel.T @ sol.x, 0.0, atol=1e-10)


def test_min_norm_lstsq_dimension_mismatch():
    with pytest.raises(ValidationError):
        min_norm_lstsq(np.eye(3), [1.0, 2.0])


def test_pinv_penrose_identities(rng):
    B = rng.standard_normal((4, 2))
    P = pinv(B)
    assert np.allclose(B @ P @ B, B, atol=1e-10)
    assert np.allclose(P @ B @ P, P, atol=1e-10)
    assert np.allclose((B @ P).T, B @ P, atol=1e-10)
    assert np.allclose((P @ B).T, P @ B, atol=1e-10)
    assert np.allclose(pinv(np.eye(3)), np.eye(3))


def test_pinv_right_inverse_on_range():
    B = np.array([[1.0], [0.0]])
    alpha = np.array([3.5, 0.0])
    assert np.allclose(B @ pinv(B) @ alpha, alpha)


def test_pinv_acts_as_identity_on_columns(rng):
    M = rng.standard_normal((4, 2)) @ rng.standard_normal((2, 6))
    assert np.allclose(M @ pinv(M) @ M, M, atol=1e-10)


# ------------------ Spectrum ------------------

def test_eigenvalues_of_rotation():
    spectrum = eigenvalues(ROTATION)
    values = sorted(spectrum.eigenvalues, key=lambda z: z.imag)
    assert values[0] == pytest.approx(-1j, abs=1e-12)
    assert values[1] == pytest.approx(1j, abs=1e-12)


def test_eigenvalues_of_triangular_matrix():
    T = np.array([[1.0, 5.0, -2.0], [0.0, -3.0, 4.0], [0.0, 0.0, 2.5]])
    values = np.sort(eigenvalues(T).eigenvalues.real)
    assert np.allclose(values, [-3.0, 1.0, 2.5], atol=1e-9)
    assert np.all(eigenvalues(T).is_real())


def test_eigenvalues_of_repeated_root():
    values = eigenvalues(np.array([[2.0, 1.0], [0.0, 2.0]])).eigenvalues
    assert np.allclose(values, [2.0, 2.0], atol=1e-6)


def test_eigenvalues_keeps_close_distinct_roots_apart():
    values = eigenvalues(np.array([[1.0, 0.3], [0.0, 1.000002]])).eigenvalues
    assert np.allclose(np.sort(values.real), [1.0, 1.000002], rtol=0.0, atol=1e-8)
    assert np.allclose(values.imag, 0.0, atol=1e-8)


def test_eigenvalues_of_close_rotations():
    R = scipy.linalg.block_diag(ROTATION, 1.000004 * ROTATION)
    speeds = np.sort(np.abs(eigenvalues(R).eigenvalues.imag))
    assert np.allclose(speeds, [1.0, 1.0, 1.000004, 1.000004], rtol=0.0, atol=1e-8)


def test_eigenvalues_of_repeated_complex_pair():
    values = eigenvalues(scipy.linalg.block_diag(ROTATION, ROTATION)).eigenvalues
    assert np.allclose(np.sort(np.abs(values.imag)), [1.0, 1.0, 1.0, 1.0], atol=1e-6)


def test_eigenvalues_match_symmetric_oracle(rng):
    for _ in range(10):
        X = rng.standard_normal((4, 4))
        S = X + X.T
        ours = np.sort(eigenvalues(S).eigenvalues.real)
        assert np.allclose(ours, np.linalg.eigvalsh(S), atol=1e-8)


def test_eigenvalues_conjugate_closed_and_trace(rng):
    for _ in range(20):
        n = int(rng.integers(2, 7))
        M = rng.uniform(-2.0, 2.0, (n, n))
        values = eigenvalues(M).eigenvalues
        assert len(values) == n
        assert abs(values.sum() - np.trace(M)) <= 1e-8
        assert np.allclose(np.sort_complex(values), np.sort_complex(np.conj(values)), atol=1e-10)


def test_eigenvalues_dimension_cap():
    with pytest.raises(ValidationError):
        eigenvalues(np.eye(33))


def test_char_poly_examples():
    assert np.allclose(char_poly(ROTATION).coefficients, [1.0, 0.0])
    assert np.allclose(char_poly(np.eye(2)).coefficients, [1.0, -2.0])


def test_char_poly_matches_root_product_and_cayley_hamilton(rng):
    M = rng.uniform(-1.0, 1.0, (4, 4))
    poly = char_poly(M)
    expected = np.poly(np.linalg.eigvals(M))[1:][::-1].real
    assert np.allclose(poly.coefficients, expected, atol=1e-10)
    residual = np.linalg.norm(poly.evaluate_matrix(M))
    assert residual <= 1e-8 * max(1.0, np.linalg.norm(M)) ** 4
