"""
Dense Linear Algebra Kernels
Matrix exponential (scaling and squaring with Pade approximants), SVD based
rank, minimum-norm least squares and pseudo-inverse, and the spectrum of
small real matrices through the characteristic polynomial.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .config import TOLERANCE_POLICY
from .error_handler import NumericalError, ValidationError

logger = logging.getLogger(__name__)

EPS = float(np.finfo(float).eps)


# ==================== Validation ====================

def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Return M as a finite 2-D float array or raise ValidationError."""
    try:
        arr = np.array(M, dtype=float)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{name} is not a numeric matrix", details=str(e))
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"{name} must be a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


def as_square(M, name: str = "matrix") -> np.ndarray:
    arr = as_matrix(M, name)
    if arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {arr.shape}")
    return arr


def as_vector(v, length: Optional[int] = None, name: str = "vector") -> np.ndarray:
    try:
        arr = np.array(v, dtype=float).reshape(-1)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{name} is not a numeric vector", details=str(e))
    if length is not None and arr.size != length:
        raise ValidationError(f"{name} must have length {length}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


# ==================== Domain Types ====================

@dataclass(frozen=True)
class RankTolerance:
    """Cut between 'zero' and 'nonzero' singular values.

    With no absolute value the relative policy sigma_max * max(rows, cols) * eps
    is used.
    """
    absolute: Optional[float] = None

    def threshold(self, singular_vals: np.ndarray, shape) -> float:
        if self.absolute is not None:
            return float(self.absolute)
        if singular_vals.size == 0:
            return 0.0
        return float(singular_vals[0]) * max(shape) * EPS

    @classmethod
    def default(cls) -> "RankTolerance":
        return cls(absolute=TOLERANCE_POLICY["rank_atol"])

    def describe(self) -> str:
        if self.absolute is not None:
            return f"absolute {self.absolute:g}"
        return "relative sigma_max*max(dim)*eps"


@dataclass(frozen=True)
class Spectrum:
    """Multiplicity-counted eigenvalues of a real matrix."""
    eigenvalues: np.ndarray

    def __len__(self) -> int:
        return len(self.eigenvalues)

    def is_real(self, rtol: Optional[float] = None) -> np.ndarray:
        rtol = TOLERANCE_POLICY["real_eigenvalue_rtol"] if rtol is None else rtol
        return np.abs(self.eigenvalues.imag) <= rtol * (1.0 + np.abs(self.eigenvalues))

    def as_pairs(self) -> List[List[float]]:
        return [[float(z.real), float(z.imag)] for z in self.eigenvalues]


@dataclass(frozen=True)
class CharPoly:
    """Monic polynomial lambda^n + sum a_i lambda^i, stored as a_0..a_{n-1}."""
    coefficients: np.ndarray

    @property
    def degree(self) -> int:
        return len(self.coefficients)

    def descending(self) -> np.ndarray:
        """Coefficients highest power first, leading 1 included (numpy.polyval order)."""
        return np.concatenate(([1.0], self.coefficients[::-1]))

    def __call__(self, z):
        return np.polyval(self.descending(), z)

    def evaluate_matrix(self, M) -> np.ndarray:
        """g(M) by Horner's scheme; ~0 on the source matrix (Cayley-Hamilton)."""
        A = as_square(M)
        result = np.eye(A.shape[0])
        for a in self.coefficients[::-1]:
            result = result @ A + a * np.eye(A.shape[0])
        return result


# ==================== Matrix Exponential ====================

# Pade numerator coefficients b_0..b_m for each degree used
_PADE_COEFFS = {
    3: (120., 60., 12., 1.),
    5: (30240., 15120., 3360., 420., 30., 1.),
    7: (17297280., 8648640., 1995840., 277200., 25200., 1512., 56., 1.),
    9: (17643225600., 8821612800., 2075673600., 302702400., 30270240.,
        2162160., 110880., 3960., 90., 1.),
    13: (64764752532480000., 32382376266240000., 7771770303897600.,
         1187353796428800., 129060195264000., 10559470521600.,
         670442572800., 33522128640., 1323241920., 40840800., 960960.,
         16380., 182., 1.),
}

# 1-norm bounds below which each degree is accurate to unit roundoff
_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}


def _pade_uv(a: np.ndarray, degree: int):
    """Odd (u) and even (v) parts of the degree-m Pade numerator."""
    b = _PADE_COEFFS[degree]
    ident = np.eye(a.shape[0])
    a2 = a @ a
    if degree == 13:
        a4 = a2 @ a2
        a6 = a2 @ a4
        u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
                 + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
        v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
             + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
        return u, v
    powers = [ident, a2]
    while len(powers) <= degree // 2:
        powers.append(powers[-1] @ a2)
    u_inner = sum(b[2 * k + 1] * powers[k] for k in range(degree // 2 + 1))
    v = sum(b[2 * k] * powers[k] for k in range(degree // 2 + 1))
    return a @ u_inner, v


def expm(M, t: float = 1.0) -> np.ndarray:
    """
    Matrix exponential e^{Mt}

    Args:
        M: square real matrix
        t: time multiplier

    Returns:
        e^{Mt} computed by scaling and squaring with a Pade approximant
        (degree 13 once the norm exceeds the low-degree bounds)
    """
    A = as_square(M, "M")
    if not np.isfinite(t):
        raise ValidationError("t must be finite")
    a = A * float(t)
    n = a.shape[0]
    norm = np.linalg.norm(a, 1)
    if norm == 0.0:
        return np.eye(n)

    squarings = 0
    degree = 13
    for candidate in (3, 5, 7, 9):
        if norm <= _THETA[candidate]:
            degree = candidate
            break
    else:
        squarings = max(0, int(np.ceil(np.log2(norm / _THETA[13]))))
        a = a / (2.0 ** squarings)

    u, v = _pade_uv(a, degree)
    try:
        result = np.linalg.solve(v - u, v + u)
    except np.linalg.LinAlgError as e:
        raise NumericalError("Pade denominator is singular", details=str(e))
    for _ in range(squarings):
        result = result @ result

    if not np.all(np.isfinite(result)):
        raise NumericalError(f"matrix exponential overflowed (||Mt||_1 = {norm:.3e})")
    return result


# ==================== SVD Kernels ====================

def singular_values(M) -> np.ndarray:
    """Singular values in descending order, count min(rows, cols)."""
    A = as_matrix(M)
    try:
        return np.linalg.svd(A, compute_uv=False)
    except np.linalg.LinAlgError as e:
        raise NumericalError("SVD did not converge", details=str(e))


def numerical_rank(M, tol: Optional[RankTolerance] = None) -> int:
    """Number of singular values above the rank tolerance."""
    tol = tol or RankTolerance.default()
    A = as_matrix(M)
    sv = singular_values(A)
    return int(np.sum(sv > tol.threshold(sv, A.shape)))


def _truncated_svd(A: np.ndarray, tol: RankTolerance):
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as e:
        raise NumericalError("SVD did not converge", details=str(e))
    cutoff = tol.threshold(s, A.shape)
    keep = s > cutoff
    return U[:, keep], s[keep], Vt[keep], cutoff


@dataclass
class LeastSquaresSolution:
    x: np.ndarray
    residual: float
    rank: int
    cutoff: float = field(default=0.0)


def min_norm_lstsq(M, r, tol: Optional[RankTolerance] = None) -> LeastSquaresSolution:
    """
    Minimum-norm least-squares solution of M x ~ r via the truncated SVD

    Args:
        M: real matrix (rows x cols)
        r: right-hand side of length rows
        tol: rank tolerance used as the singular value cutoff

    Returns:
        LeastSquaresSolution with x, the residual norm ||Mx - r|| and the rank used
    """
    tol = tol or RankTolerance.default()
    A = as_matrix(M, "M")
    rhs = as_vector(r, name="r")
    if rhs.size != A.shape[0]:
        raise ValidationError(f"r has length {rhs.size}, expected {A.shape[0]} (rows of M)")

    U, s, Vt, cutoff = _truncated_svd(A, tol)
    x = Vt.T @ ((U.T @ rhs) / s)
    residual = float(np.linalg.norm(A @ x - rhs))
    logger.debug(f"min_norm_lstsq: shape={A.shape}, rank={s.size}, cutoff={cutoff:.3e}, residual={residual:.3e}")
    return LeastSquaresSolution(x=x, residual=residual, rank=int(s.size), cutoff=cutoff)


def pinv(M, tol: Optional[RankTolerance] = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse with the truncated-SVD cutoff."""
    tol = tol or RankTolerance.default()
    A = as_matrix(M)
    U, s, Vt, _ = _truncated_svd(A, tol)
    return (Vt.T / s) @ U.T


def null_space(M, tol: Optional[RankTolerance] = None) -> np.ndarray:
    """Orthonormal basis (columns) of the numerical null space of M."""
    tol = tol or RankTolerance.default()
    A = as_matrix(M)
    try:
        _, s, Vt = np.linalg.svd(A, full_matrices=True)
    except np.linalg.LinAlgError as e:
        raise NumericalError("SVD did not converge", details=str(e))
    rank = int(np.sum(s > tol.threshold(s, A.shape)))
    return Vt[rank:].T


# ==================== Characteristic Polynomial & Spectrum ====================

def char_poly(M) -> CharPoly:
    """Monic characteristic polynomial by the Faddeev-LeVerrier recursion."""
    A = as_square(M)
    n = A.shape[0]
    ident = np.eye(n)
    coeffs = np.zeros(n)
    Mk = np.zeros((n, n))
    c = 1.0
    for k in range(1, n + 1):
        Mk = A @ Mk + c * ident
        c = -np.trace(A @ Mk) / k
        coeffs[n - k] = c
    return CharPoly(coefficients=coeffs)


def _aberth_roots(desc: np.ndarray, max_iterations: int) -> np.ndarray:
    """All roots of a monic polynomial (descending coefficients) by Aberth-Ehrlich."""
    n = len(desc) - 1
    bound = max(abs(desc[k]) ** (1.0 / k) for k in range(1, n + 1))
    if bound == 0.0:
        return np.zeros(n, dtype=complex)
    radius = 2.0 * bound
    angles = 2.0 * np.pi * np.arange(n) / n + 0.4
    z = radius * np.exp(1j * angles)
    dp = np.polyder(desc)
    abs_desc = np.abs(desc)
    active = np.ones(n, dtype=bool)

    for iteration in range(max_iterations):
        p = np.polyval(desc, z)
        dpz = np.polyval(dp, z)
        # rounding floor of |p(z)|, reached at multiple roots before the step size shrinks
        floor = 8.0 * n * EPS * np.polyval(abs_desc, np.abs(z))
        active &= ~(np.abs(p) <= floor)
        if not np.any(active):
            logger.debug(f"aberth converged after {iteration} iterations")
            return z
        dpz = np.where(dpz == 0.0, EPS, dpz)
        ratio = p / dpz
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        inv = 1.0 / diff
        np.fill_diagonal(inv, 0.0)
        repulsion = inv.sum(axis=1)
        step = ratio / (1.0 - ratio * repulsion)
        step = np.where(active, step, 0.0)
        z = z - step
        active &= ~(np.abs(step) <= 4.0 * EPS * (1.0 + np.abs(z)))
        if not np.any(active):
            logger.debug(f"aberth converged after {iteration + 1} iterations")
            return z

    raise NumericalError(
        f"Aberth-Ehrlich iteration did not converge in {max_iterations} steps",
        details="matrix is likely ill-conditioned for the characteristic polynomial route",
    )


def _newton_polish(desc: np.ndarray, dp: np.ndarray, z: complex, steps: int = 4) -> complex:
    """Newton steps on one root, kept only while |g| decreases."""
    value = abs(np.polyval(desc, z))
    for _ in range(steps):
        slope = np.polyval(dp, z)
        if slope == 0.0 or value == 0.0:
            break
        candidate = z - np.polyval(desc, z) / slope
        candidate_value = abs(np.polyval(desc, candidate))
        if candidate_value >= value:
            break
        z, value = candidate, candidate_value
    return z


def _cluster_average(roots: np.ndarray, rtol: float, desc: np.ndarray) -> np.ndarray:
    """
    Resolve groups of nearly coincident roots

    A group collapses to its mean only when g(mean) is at rounding level, i.e.
    the group is one multiple root. Otherwise each member is Newton-polished
    on its own, so close but distinct eigenvalues stay apart.
    """
    roots = roots.copy()
    n = len(roots)
    label = list(range(n))
    for i in range(n):
        for j in range(i + 1, n):
            if abs(roots[i] - roots[j]) <= rtol * (1.0 + abs(roots[i])):
                old, new = label[j], label[i]
                label = [new if lab == old else lab for lab in label]
    label = np.array(label)
    dp = np.polyder(desc)
    abs_desc = np.abs(desc)
    for lab in np.unique(label):
        members = np.flatnonzero(label == lab)
        if members.size < 2:
            continue
        mean = roots[members].mean()
        floor = 64.0 * n * EPS * np.polyval(abs_desc, abs(mean))
        if abs(np.polyval(desc, mean)) <= floor:
            roots[members] = mean
        else:
            for k in members:
                roots[k] = _newton_polish(desc, dp, roots[k])
    return roots


def _conjugate_close(roots: np.ndarray, real_rtol: float) -> np.ndarray:
    roots = roots.copy()
    real = np.abs(roots.imag) <= real_rtol * (1.0 + np.abs(roots))
    roots[real] = roots[real].real
    upper = sorted(roots[~real & (roots.imag > 0)], key=lambda z: (z.real, z.imag))
    lower = list(roots[~real & (roots.imag < 0)])
    if len(upper) != len(lower):
        raise NumericalError("computed spectrum is not closed under conjugation")
    result = sorted(roots[real].real.tolist())
    paired = []
    for z in upper:
        k = int(np.argmin([abs(z - np.conj(w)) for w in lower]))
        w = lower.pop(k)
        mean = 0.5 * (z + np.conj(w))
        paired.extend([mean, np.conj(mean)])
    return np.array(result + paired, dtype=complex)


def eigenvalues(M) -> Spectrum:
    """
    Spectrum of a small real matrix

    The characteristic polynomial (Faddeev-LeVerrier) is solved by
    Aberth-Ehrlich iteration. Clusters that form a multiple root are averaged,
    other close roots are polished separately, and the result is made
    conjugate-closed.

    Raises:
        ValidationError: dimension above the configured cap
        NumericalError: non-convergence or a root failing the residual check
    """
    A = as_square(M)
    n = A.shape[0]
    cap = TOLERANCE_POLICY["eigenvalue_dimension_cap"]
    if n > cap:
        raise ValidationError(f"eigenvalues supports dimension <= {cap}, got {n}")
    if n == 1:
        return Spectrum(eigenvalues=np.array([complex(A[0, 0])]))

    poly = char_poly(A)
    desc = poly.descending()
    roots = _aberth_roots(desc, TOLERANCE_POLICY["aberth_max_iterations"])
    roots = _cluster_average(roots, TOLERANCE_POLICY["eigenvalue_cluster_rtol"], desc)
    roots = _conjugate_close(roots, TOLERANCE_POLICY["real_eigenvalue_rtol"])

    residual = np.abs(np.polyval(desc, roots))
    limit = 1e-8 * (1.0 + np.abs(roots)) ** n
    if np.any(residual > limit):
        worst = int(np.argmax(residual / limit))
        raise NumericalError(
            f"eigenvalue {roots[worst]:.6g} fails the characteristic residual check",
            details=f"|g(lambda)| = {residual[worst]:.3e}",
        )
    return Spectrum(eigenvalues=roots)