"""
Finite-Dimensional Impulse Controllability
Kalman test, the critical window d_A, sampled controllability matrices,
impulse steering of z' = Az, and the companion-matrix expansion of e^{At}.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .config import TOLERANCE_POLICY
from .error_handler import NumericalError, ValidationError, validate_and_raise
from .linalg_core import (
    RankTolerance,
    as_matrix,
    as_square,
    as_vector,
    char_poly,
    eigenvalues,
    expm,
    min_norm_lstsq,
    numerical_rank,
)

logger = logging.getLogger(__name__)

FORWARD = "forward"
TIME_REVERSED = "time-reversed"


# ==================== Domain Types ====================

@dataclass(frozen=True)
class ControlPair:
    """The pair (A, B) with A n x n and B n x m."""
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = as_square(self.A, "A")
        B = as_matrix(self.B, "B")
        if B.shape[0] != A.shape[0]:
            raise ValidationError(f"B must have {A.shape[0]} rows (size of A), got {B.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @classmethod
    def rotation(cls, a: float = 0.0, b: float = 1.0, c: float = 1.0, d: float = 0.0) -> "ControlPair":
        """A = [[a, -b], [b, a]], B = (c, d)^T."""
        return cls(A=np.array([[a, -b], [b, a]]), B=np.array([[c], [d]]))

    def scaled(self, gamma: float) -> "ControlPair":
        return ControlPair(A=self.A, B=gamma * self.B)

    def to_dict(self) -> Dict:
        return {"A": self.A.tolist(), "B": self.B.tolist()}


@dataclass(frozen=True)
class InstantSequence:
    """Strictly increasing instants, optionally with a horizon T > tau_p."""
    instants: Tuple[float, ...]
    horizon: Optional[float] = None
    allow_empty = False

    def __post_init__(self):
        taus = tuple(float(t) for t in np.asarray(self.instants, dtype=float).reshape(-1))
        if not taus and not self.allow_empty:
            raise ValidationError("at least one instant is required")
        if not all(math.isfinite(t) for t in taus):
            raise ValidationError("instants must be finite")
        if taus and taus[0] < 0.0:
            raise ValidationError(f"instants must be nonnegative, got tau_1 = {taus[0]}")
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise ValidationError("instants must be strictly increasing")
        if self.horizon is not None:
            T = float(self.horizon)
            if not math.isfinite(T) or T <= 0.0 or (taus and taus[-1] >= T):
                raise ValidationError(f"horizon T = {self.horizon} must be positive and exceed every instant")
            object.__setattr__(self, "horizon", T)
        object.__setattr__(self, "instants", taus)

    def __len__(self) -> int:
        return len(self.instants)

    @property
    def spread(self) -> float:
        return self.instants[-1] - self.instants[0]

    def as_array(self) -> np.ndarray:
        return np.array(self.instants)

    def to_dict(self) -> Dict:
        return {"instants": list(self.instants), "T": self.horizon}


@dataclass(frozen=True)
class CompanionSystem:
    """Characteristic coefficients a_0..a_{n-1} and their companion matrix."""
    coefficients: np.ndarray
    matrix: np.ndarray

    @property
    def n(self) -> int:
        return len(self.coefficients)


@dataclass(frozen=True)
class FactorizationPair:
    """phi_1 = -b(t-t0) + log|cos c(t-t0)|, phi_2 = -b(t-t0) - log|cos c(t-t0)|.

    Only the derivatives enter the factorization, so they are the stored callables.
    """
    b: float
    c: float
    t0: float
    dphi1: Callable[[np.ndarray], np.ndarray] = field(init=False, repr=False)
    dphi2: Callable[[np.ndarray], np.ndarray] = field(init=False, repr=False)
    ddphi2: Callable[[np.ndarray], np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        validate_and_raise(self.c != 0.0, ValidationError,
                           "c must be nonzero; with c = 0 the operator factors with constant coefficients")
        b, c, t0 = float(self.b), float(self.c), float(self.t0)
        object.__setattr__(self, "dphi1", lambda t: -b - c * np.tan(c * (t - t0)))
        object.__setattr__(self, "dphi2", lambda t: -b + c * np.tan(c * (t - t0)))
        object.__setattr__(self, "ddphi2", lambda t: c ** 2 / np.cos(c * (t - t0)) ** 2)

    @property
    def half_width(self) -> float:
        return math.pi / (2.0 * abs(self.c))

    def sample_points(self, samples: int, margin: float) -> np.ndarray:
        """Uniform samples of (t0 - h, t0 + h) kept margin*h away from both ends."""
        validate_and_raise(1e-3 <= margin < 1.0, ValidationError,
                           f"margin must lie in [1e-3, 1), got {margin}")
        validate_and_raise(samples >= 1, ValidationError, "samples must be positive")
        reach = self.half_width * (1.0 - margin)
        if samples == 1:
            return np.array([self.t0])
        return np.linspace(self.t0 - reach, self.t0 + reach, samples)


@dataclass
class WindowReport:
    window_ok: bool
    rank: int
    rank_full: bool
    spread: float
    critical_window: float
    controllable: bool
    diagnostic: Optional[str] = None

    def to_dict(self) -> Dict:
        return {
            "window_ok": self.window_ok,
            "rank": self.rank,
            "rank_full": self.rank_full,
            "spread": self.spread,
            "d_A": self.critical_window,
            "controllable": self.controllable,
            "diagnostic": self.diagnostic,
        }


@dataclass
class OdeSteering:
    controls: np.ndarray  # p x m, row k is u_k
    residual: float
    rank: int
    rank_full: bool
    endpoint: np.ndarray

    @property
    def control_norm(self) -> float:
        return float(np.linalg.norm(self.controls))


@dataclass
class CoefficientMatrix:
    matrix: np.ndarray  # matrix[i, k] = f_i(tau_k)
    rank: int


# ==================== Kalman Test & Critical Window ====================

def kalman_matrix(pair: ControlPair) -> np.ndarray:
    """(B, AB, ..., A^{n-1}B) as an n x (n*m) block matrix."""
    blocks = [pair.B]
    for _ in range(pair.n - 1):
        blocks.append(pair.A @ blocks[-1])
    return np.hstack(blocks)


def is_kalman_controllable(pair: ControlPair, tol: Optional[RankTolerance] = None) -> bool:
    rank = numerical_rank(kalman_matrix(pair), tol)
    logger.debug(f"Kalman rank {rank} of {pair.n}")
    return rank == pair.n


def critical_window(A) -> float:
    """
    d_A = min over eigenvalues of pi / |Im lambda|

    Eigenvalues with |Im| <= rtol*(1+|lambda|) count as real; a purely real
    spectrum gives math.inf.
    """
    spectrum = eigenvalues(A)
    complex_part = ~spectrum.is_real()
    if not np.any(complex_part):
        return math.inf
    return float(math.pi / np.max(np.abs(spectrum.eigenvalues[complex_part].imag)))


def horizon_within_window(A, T: float) -> bool:
    """True when T <= d_A, i.e. every increasing instant set inside (0, T) is admissible."""
    validate_and_raise(T > 0.0, ValidationError, f"horizon must be positive, got {T}")
    return T <= critical_window(A)


# ==================== Sampled Controllability ====================

def _sample_times(instants: InstantSequence, mode: str) -> np.ndarray:
    if mode == FORWARD:
        return instants.as_array()
    if mode == TIME_REVERSED:
        validate_and_raise(instants.horizon is not None, ValidationError,
                           "time-reversed sampling needs the horizon T")
        return instants.horizon - instants.as_array()
    raise ValidationError(f"unknown sampling mode '{mode}' (expected '{FORWARD}' or '{TIME_REVERSED}')")


def sampled_controllability_matrix(pair: ControlPair, instants: InstantSequence,
                                   mode: str = FORWARD) -> np.ndarray:
    """
    Block matrix of e^{A s_k} B

    Args:
        pair: the control pair
        instants: control instants
        mode: 'forward' uses s_k = tau_k, 'time-reversed' uses s_k = T - tau_k

    Returns:
        n x (p*m) matrix
    """
    times = _sample_times(instants, mode)
    return np.hstack([expm(pair.A, s) @ pair.B for s in times])


def single_instant_rank(pair: ControlPair, tau: float, tol: Optional[RankTolerance] = None) -> int:
    """Rank of e^{A tau} B; below n means one impulse can never steer."""
    return numerical_rank(expm(pair.A, tau) @ pair.B, tol)


def check_sampled_rank(pair: ControlPair, instants: InstantSequence,
                       tol: Optional[RankTolerance] = None) -> WindowReport:
    """
    Compare the window tau_n - tau_1 with d_A and measure the sampled rank

    For a Kalman-controllable pair inside the window the sampled matrix must
    have full rank; a numerical violation of that raises NumericalError.
    Outside the window the measured rank is reported without a claim.
    """
    if len(instants) != pair.n:
        raise ValidationError(f"expected {pair.n} instants (one per state dimension), got {len(instants)}")

    d_A = critical_window(pair.A)
    spread = instants.spread
    band = TOLERANCE_POLICY["window_boundary_band"]
    boundary = math.isfinite(d_A) and abs(spread - d_A) < band
    window_ok = spread < d_A and not boundary
    rank = numerical_rank(sampled_controllability_matrix(pair, instants, FORWARD), tol)
    controllable = is_kalman_controllable(pair, tol)

    diagnostic = None
    if boundary:
        diagnostic = (f"instant spread {spread:.12g} equals d_A = {d_A:.12g} within {band:g}: "
                      f"boundary of the critical-window hypothesis")
    elif not window_ok:
        diagnostic = (f"instant spread {spread:.6g} exceeds d_A = {d_A:.6g}: "
                      f"measured rank reported, no guarantee applies")

    report = WindowReport(window_ok=window_ok, rank=rank, rank_full=rank == pair.n,
                          spread=spread, critical_window=d_A, controllable=controllable,
                          diagnostic=diagnostic)

    if controllable and window_ok and not report.rank_full:
        raise NumericalError(
            f"sampled rank {rank} < {pair.n} inside the critical window",
            details="sampled matrix too ill-conditioned for the rank tolerance",
            anchor="sampled-rank",
        )
    logger.debug(f"check_sampled_rank: spread={spread:.6g}, d_A={d_A:.6g}, rank={rank}")
    return report


def adjoint_kernel_dimension(pair: ControlPair, instants: InstantSequence, T: Optional[float] = None,
                             tol: Optional[RankTolerance] = None) -> int:
    """Dimension of the intersection over k of ker(B^T e^{-A^T (T - tau_k)})."""
    T = instants.horizon if T is None else float(T)
    validate_and_raise(T is not None and T > instants.instants[-1], ValidationError,
                       "horizon T beyond the last instant is required")
    rows = np.vstack([pair.B.T @ expm(-pair.A.T, T - tau) for tau in instants.instants])
    return pair.n - numerical_rank(rows, tol)


# ==================== ODE Steering ====================

def ode_endpoint(pair: ControlPair, instants: InstantSequence, z0, controls) -> np.ndarray:
    """z(T) = e^{AT} z0 + sum_k e^{A(T - tau_k)} B u_k."""
    T = instants.horizon
    validate_and_raise(T is not None, ValidationError, "steering needs the horizon T")
    z0 = as_vector(z0, pair.n, "z0")
    U = np.asarray(controls, dtype=float).reshape(len(instants), pair.m)
    z = expm(pair.A, T) @ z0
    for tau, u in zip(instants.instants, U):
        z = z + expm(pair.A, T - tau) @ (pair.B @ u)
    return z


def steer_ode(pair: ControlPair, instants: InstantSequence, z0, z1,
              tol: Optional[RankTolerance] = None) -> OdeSteering:
    """
    Minimum-norm impulses u_1..u_p driving z0 to z1 at time T

    Solves sum_k e^{A(T - tau_k)} B u_k = z1 - e^{AT} z0 in the least-squares
    sense. The residual vanishes for every target exactly when the
    time-reversed sampled matrix has rank n.
    """
    validate_and_raise(instants.horizon is not None, ValidationError, "steering needs the horizon T")
    z0 = as_vector(z0, pair.n, "z0")
    z1 = as_vector(z1, pair.n, "z1")

    M = sampled_controllability_matrix(pair, instants, TIME_REVERSED)
    rhs = z1 - expm(pair.A, instants.horizon) @ z0
    solution = min_norm_lstsq(M, rhs, tol)
    controls = solution.x.reshape(len(instants), pair.m)
    endpoint = ode_endpoint(pair, instants, z0, controls)

    logger.debug(f"steer_ode: rank={solution.rank}/{pair.n}, residual={solution.residual:.3e}")
    return OdeSteering(controls=controls, residual=solution.residual, rank=solution.rank,
                       rank_full=solution.rank == pair.n, endpoint=endpoint)


def steering_is_exact(result: OdeSteering, target) -> bool:
    """Residual below steer_ode_rtol relative to max(1, ||target||)."""
    scale = max(1.0, float(np.linalg.norm(target)))
    return result.residual <= TOLERANCE_POLICY["steer_ode_rtol"] * scale


# ==================== Companion Expansion ====================

def companion_system(A) -> CompanionSystem:
    """Companion matrix: ones on the subdiagonal, last column -a_0..-a_{n-1}."""
    poly = char_poly(A)
    n = poly.degree
    C = np.zeros((n, n))
    if n > 1:
        C[np.arange(1, n), np.arange(n - 1)] = 1.0
    C[:, -1] = -poly.coefficients
    return CompanionSystem(coefficients=poly.coefficients, matrix=C)


def expm_companion_coeffs(A, t: float, companion: Optional[CompanionSystem] = None) -> np.ndarray:
    """f(t) = e^{C t} e_1 for the companion matrix C, so that e^{At} = sum_i f_i(t) A^i."""
    companion = companion or companion_system(A)
    return expm(companion.matrix, t)[:, 0].copy()


def companion_reconstruction(A, t: float) -> np.ndarray:
    """sum_i f_i(t) A^i."""
    A = as_square(A, "A")
    coeffs = expm_companion_coeffs(A, t)
    result = np.zeros_like(A)
    power = np.eye(A.shape[0])
    for f in coeffs:
        result = result + f * power
        power = power @ A
    return result


def instant_coefficient_matrix(A, instants: InstantSequence,
                               tol: Optional[RankTolerance] = None) -> CoefficientMatrix:
    """
    Matrix [f_i(tau_k)] of companion coefficients at n instants

    Its rank is n whenever tau_n - tau_1 < d_A: a solution of the scalar
    characteristic ODE vanishing at all n instants is identically zero.
    """
    A = as_square(A, "A")
    n = A.shape[0]
    if len(instants) != n:
        raise ValidationError(f"expected {n} instants, got {len(instants)}")
    companion = companion_system(A)
    M = np.column_stack([expm_companion_coeffs(A, tau, companion) for tau in instants.instants])
    return CoefficientMatrix(matrix=M, rank=numerical_rank(M, tol))


# ==================== Second-Order Factorization ====================

def factorization_coeff_check(b: float, c: float, t0: float, samples: int = 1000,
                              margin: float = 0.25) -> float:
    """
    Max defect of phi1' + phi2' = -2b and phi1' phi2' + phi2'' = b^2 + c^2

    Args:
        b, c, t0: factorization parameters (c != 0)
        samples: number of sample points
        margin: fraction of the half-width (pi / 2|c|) kept clear at both ends

    Returns:
        maximum absolute defect over both identities
    """
    pair = FactorizationPair(b=b, c=c, t0=t0)
    t = pair.sample_points(samples, margin)
    p1, p2, pp2 = pair.dphi1(t), pair.dphi2(t), pair.ddphi2(t)
    sum_defect = np.abs(p1 + p2 + 2.0 * b)
    product_defect = np.abs(p1 * p2 + pp2 - (b ** 2 + c ** 2))
    return float(max(sum_defect.max(), product_defect.max()))


def factorized_operator_defect(b: float, c: float, t0: float, samples: int = 200,
                               margin: float = 0.25) -> float:
    """
    Compare (D + phi1')(D + phi2') h with h'' - 2b h' + (b^2 + c^2) h for h = e^t

    The composition is evaluated step by step from analytic derivatives.
    """
    pair = FactorizationPair(b=b, c=c, t0=t0)
    t = pair.sample_points(samples, margin)
    h = np.exp(t)
    dh = h
    ddh = h
    inner = dh + pair.dphi2(t) * h
    d_inner = ddh + pair.ddphi2(t) * h + pair.dphi2(t) * dh
    composed = d_inner + pair.dphi1(t) * inner
    direct = ddh - 2.0 * b * dh + (b ** 2 + c ** 2) * h
    return float(np.max(np.abs(composed - direct)))
