"""
Spectral Realization of the Impulse-Controlled Coupled Heat System
y_t = y_xx - A y on (0, L) with Dirichlet conditions, jumps
y(tau_k) - y(tau_k-) = chi_omega B u_k, represented in the sine eigenbasis.
"""

import logging
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate

from .config import DEFAULT_DOMAIN
from .error_handler import ValidationError, validate_and_raise
from .linalg_core import as_matrix, expm
from .ode_control import ControlPair, InstantSequence

logger = logging.getLogger(__name__)


# ==================== Domain Types ====================

@dataclass(frozen=True)
class DomainSpec:
    """Interval (0, L), control region omega as disjoint subintervals, N modes."""
    length: float = DEFAULT_DOMAIN["length"]
    omega: Optional[Tuple[Tuple[float, float], ...]] = None
    modes: int = DEFAULT_DOMAIN["modes"]

    def __post_init__(self):
        L = float(self.length)
        validate_and_raise(math.isfinite(L) and L > 0.0, ValidationError,
                           f"domain length must be positive, got {self.length}")
        validate_and_raise(int(self.modes) == self.modes and self.modes >= 1, ValidationError,
                           f"modes must be a positive integer, got {self.modes}")
        intervals = ((0.0, L),) if self.omega is None else tuple(
            (float(a), float(b)) for a, b in self.omega
        )
        validate_and_raise(len(intervals) > 0, ValidationError, "omega needs at least one interval")
        for a, b in intervals:
            if not (0.0 <= a < b <= L):
                raise ValidationError(f"omega interval ({a}, {b}) must satisfy 0 <= a < b <= {L}")
        ordered = sorted(intervals)
        for (a1, b1), (a2, b2) in zip(ordered, ordered[1:]):
            if a2 < b1:
                raise ValidationError(f"omega intervals ({a1}, {b1}) and ({a2}, {b2}) overlap")
        object.__setattr__(self, "length", L)
        object.__setattr__(self, "omega", tuple(ordered))
        object.__setattr__(self, "modes", int(self.modes))

    @property
    def covers_domain(self) -> bool:
        """True when the closure of omega is [0, L]."""
        if self.omega[0][0] != 0.0 or self.omega[-1][1] != self.length:
            return False
        return all(b1 == a2 for (_, b1), (a2, _) in zip(self.omega, self.omega[1:]))

    def with_modes(self, modes: int) -> "DomainSpec":
        return DomainSpec(length=self.length, omega=self.omega, modes=modes)

    def to_dict(self) -> Dict:
        return {"length": self.length, "omega": [list(iv) for iv in self.omega], "modes": self.modes}


@dataclass(frozen=True)
class Eigenbasis:
    """Dirichlet eigenvalues lambda_j = (j pi / L)^2 and phi_j = sqrt(2/L) sin(j pi x / L)."""
    length: float
    eigenvalues: np.ndarray

    @property
    def modes(self) -> int:
        return len(self.eigenvalues)

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(1, self.modes + 1) * math.pi / self.length

    def values(self, x) -> np.ndarray:
        """Matrix Phi with Phi[i, j] = phi_{j+1}(x_i)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return math.sqrt(2.0 / self.length) * np.sin(np.outer(x, self.wavenumbers))

    def function(self, j: int):
        k = j * math.pi / self.length
        scale = math.sqrt(2.0 / self.length)
        return lambda x: scale * np.sin(k * x)


@dataclass(frozen=True)
class OmegaGram:
    """W[j, l] = integral over omega of phi_j phi_l."""
    matrix: np.ndarray

    @property
    def modes(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class SystemSpec:
    """One coupled heat system: the pair (A, B) and its spatial data."""
    pair: ControlPair
    domain: DomainSpec = field(default_factory=DomainSpec)

    @property
    def A(self) -> np.ndarray:
        return self.pair.A

    @property
    def B(self) -> np.ndarray:
        return self.pair.B

    @property
    def n(self) -> int:
        return self.pair.n

    @property
    def m(self) -> int:
        return self.pair.m

    @property
    def modes(self) -> int:
        return self.domain.modes

    @cached_property
    def basis(self) -> Eigenbasis:
        return eigenbasis(self.domain)

    @cached_property
    def gram(self) -> OmegaGram:
        return omega_gram(self.domain)

    def with_modes(self, modes: int) -> "SystemSpec":
        return SystemSpec(pair=self.pair, domain=self.domain.with_modes(modes))


class ImpulseSchedule(InstantSequence):
    """Instants 0 < tau_1 < ... < tau_p < T; the horizon is mandatory, p = 0 is allowed."""
    allow_empty = True

    def __post_init__(self):
        if self.horizon is None:
            raise ValidationError("an impulse schedule needs the horizon T")
        super().__post_init__()
        if self.instants and self.instants[0] <= 0.0:
            raise ValidationError(f"impulse instants must be positive, got tau_1 = {self.instants[0]}")

    @property
    def T(self) -> float:
        return self.horizon


@dataclass(frozen=True)
class SpectralState:
    """Coefficients c (N x n): y(x) = sum_j phi_j(x) c_j."""
    coefficients: np.ndarray

    def __post_init__(self):
        C = as_matrix(self.coefficients, "state coefficients")
        object.__setattr__(self, "coefficients", C)

    @classmethod
    def zeros(cls, modes: int, n: int) -> "SpectralState":
        return cls(np.zeros((modes, n)))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.coefficients.shape

    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    def inner(self, other: "SpectralState") -> float:
        return float(np.sum(self.coefficients * _coeffs(other)))

    def mode_norms(self) -> np.ndarray:
        return np.linalg.norm(self.coefficients, axis=1)

    def component_norms(self) -> np.ndarray:
        return np.linalg.norm(self.coefficients, axis=0)

    def as_vector(self) -> np.ndarray:
        return self.coefficients.reshape(-1)

    def __add__(self, other: "SpectralState") -> "SpectralState":
        return SpectralState(self.coefficients + _coeffs(other))

    def __sub__(self, other: "SpectralState") -> "SpectralState":
        return SpectralState(self.coefficients - _coeffs(other))


@dataclass(frozen=True)
class ControlSet:
    """Per-impulse control coefficients d^(k) (N x m each)."""
    blocks: Tuple[np.ndarray, ...]

    def __post_init__(self):
        blocks = tuple(as_matrix(b, f"control block {k + 1}") for k, b in enumerate(self.blocks))
        if blocks and any(b.shape != blocks[0].shape for b in blocks):
            raise ValidationError("all control blocks must share one shape")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def zeros(cls, impulses: int, modes: int, m: int) -> "ControlSet":
        return cls(tuple(np.zeros((modes, m)) for _ in range(impulses)))

    @classmethod
    def from_vector(cls, vec, impulses: int, modes: int, m: int) -> "ControlSet":
        """Inverse of as_vector: index k*N*m + l*m + i."""
        arr = np.asarray(vec, dtype=float).reshape(impulses, modes, m)
        return cls(tuple(arr[k] for k in range(impulses)))

    def __len__(self) -> int:
        return len(self.blocks)

    def as_vector(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros(0)
        return np.concatenate([b.reshape(-1) for b in self.blocks])

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_vector()))

    def scaled(self, gamma: float) -> "ControlSet":
        return ControlSet(tuple(gamma * b for b in self.blocks))


StateLike = Union[SpectralState, np.ndarray]


def _coeffs(state: StateLike) -> np.ndarray:
    if isinstance(state, SpectralState):
        return state.coefficients
    return as_matrix(state, "state coefficients")


@dataclass
class TrajectoryPoint:
    t: float
    label: str
    state: SpectralState


@dataclass
class Trajectory:
    points: List[TrajectoryPoint]

    @property
    def initial(self) -> SpectralState:
        return self.points[0].state

    @property
    def final(self) -> SpectralState:
        return self.points[-1].state

    @property
    def times(self) -> np.ndarray:
        return np.array([p.t for p in self.points])

    def jumps(self) -> List[SpectralState]:
        """y(tau_k) - y(tau_k-) for every impulse."""
        pre = [p.state for p in self.points if p.label.startswith("pre-impulse")]
        post = [p.state for p in self.points if p.label.startswith("post-impulse")]
        return [b - a for a, b in zip(pre, post)]


@dataclass
class DualityReport:
    direct: float
    dual: float

    @property
    def defect(self) -> float:
        return abs(self.direct - self.dual)


# ==================== Basis & Gram Matrix ====================

def eigenbasis(domain: DomainSpec) -> Eigenbasis:
    j = np.arange(1, domain.modes + 1)
    return Eigenbasis(length=domain.length, eigenvalues=(j * math.pi / domain.length) ** 2)


def _sine_product_antiderivative(j: np.ndarray, l: np.ndarray, x: float, L: float) -> np.ndarray:
    """Antiderivative of sin(j pi x/L) sin(l pi x/L), elementwise over the index grids."""
    diff = j - l
    total = j + l
    same = diff == 0
    safe_diff = np.where(same, 1, diff)
    off = (np.sin(safe_diff * math.pi * x / L) * L / (2.0 * safe_diff * math.pi)
           - np.sin(total * math.pi * x / L) * L / (2.0 * total * math.pi))
    diag = x / 2.0 - np.sin(2.0 * j * math.pi * x / L) * L / (4.0 * j * math.pi)
    return np.where(same, diag, off)


def omega_gram(domain: DomainSpec) -> OmegaGram:
    """
    Closed-form Gram matrix of the eigenfunctions restricted to omega

    Full coverage of (0, L) returns the identity exactly.
    """
    N = domain.modes
    if domain.covers_domain:
        return OmegaGram(matrix=np.eye(N))
    idx = np.arange(1, N + 1)
    j, l = np.meshgrid(idx, idx, indexing="ij")
    L = domain.length
    W = np.zeros((N, N))
    for a, b in domain.omega:
        W += _sine_product_antiderivative(j, l, b, L) - _sine_product_antiderivative(j, l, a, L)
    W *= 2.0 / L
    return OmegaGram(matrix=0.5 * (W + W.T))


# ==================== Flows & Impulses ====================

def _check_dt(dt: float):
    if not (math.isfinite(dt) and dt >= 0.0):
        raise ValidationError(f"time step must be finite and nonnegative, got {dt}")


def free_flow(state: StateLike, A, eigenvalues: np.ndarray, dt: float) -> SpectralState:
    """c_j <- e^{-lambda_j dt} e^{-A dt} c_j for every mode j."""
    _check_dt(dt)
    C = _coeffs(state)
    E = expm(A, -dt)
    decay = np.exp(-np.asarray(eigenvalues) * dt)
    return SpectralState(decay[:, None] * (C @ E.T))


def adjoint_flow(state: StateLike, A, eigenvalues: np.ndarray, dt: float) -> SpectralState:
    """c_j <- e^{-lambda_j dt} e^{-A^T dt} c_j for every mode j."""
    _check_dt(dt)
    C = _coeffs(state)
    E = expm(np.asarray(A, dtype=float).T, -dt)
    decay = np.exp(-np.asarray(eigenvalues) * dt)
    return SpectralState(decay[:, None] * (C @ E.T))


def apply_impulse(state: StateLike, W: OmegaGram, B, control) -> SpectralState:
    """c_j <- c_j + sum_l W[j, l] B d_l."""
    C = _coeffs(state)
    B = as_matrix(B, "B")
    d = as_matrix(control, "impulse control")
    if d.shape != (W.modes, B.shape[1]) or C.shape != (W.modes, B.shape[0]):
        raise ValidationError(
            f"impulse shapes disagree: state {C.shape}, control {d.shape}, "
            f"W {W.matrix.shape}, B {B.shape}"
        )
    return SpectralState(C + W.matrix @ d @ B.T)


def _check_run(spec: SystemSpec, y0: StateLike, schedule: ImpulseSchedule, controls: ControlSet):
    C = _coeffs(y0)
    if C.shape != (spec.modes, spec.n):
        raise ValidationError(f"initial state must be {spec.modes} x {spec.n}, got {C.shape}")
    if len(controls) != len(schedule):
        raise ValidationError(f"{len(controls)} control blocks for {len(schedule)} instants")
    for block in controls.blocks:
        if block.shape != (spec.modes, spec.m):
            raise ValidationError(f"control blocks must be {spec.modes} x {spec.m}, got {block.shape}")


def evolve(spec: SystemSpec, y0: StateLike, schedule: ImpulseSchedule,
           controls: ControlSet) -> Trajectory:
    """
    Alternate free flow and impulses from t = 0 to T

    Returns:
        Trajectory with the states at 0, at each tau_k- and tau_k, and at T
    """
    _check_run(spec, y0, schedule, controls)
    lam = spec.basis.eigenvalues
    state = SpectralState(_coeffs(y0))
    points = [TrajectoryPoint(0.0, "initial", state)]
    t = 0.0
    for k, (tau, d) in enumerate(zip(schedule.instants, controls.blocks), start=1):
        state = free_flow(state, spec.A, lam, tau - t)
        points.append(TrajectoryPoint(tau, f"pre-impulse {k}", state))
        state = apply_impulse(state, spec.gram, spec.B, d)
        points.append(TrajectoryPoint(tau, f"post-impulse {k}", state))
        t = tau
    state = free_flow(state, spec.A, lam, schedule.T - t)
    points.append(TrajectoryPoint(schedule.T, "final", state))
    return Trajectory(points=points)


def solution_formula(spec: SystemSpec, y0: StateLike, schedule: ImpulseSchedule,
                     controls: ControlSet, t: Optional[float] = None) -> SpectralState:
    """e^{At} y0 + sum over tau_k <= t of e^{A(t - tau_k)} chi_omega B u_k, term by term."""
    _check_run(spec, y0, schedule, controls)
    t = schedule.T if t is None else float(t)
    lam = spec.basis.eigenvalues
    total = free_flow(y0, spec.A, lam, t)
    zero = SpectralState.zeros(spec.modes, spec.n)
    for tau, d in zip(schedule.instants, controls.blocks):
        if tau <= t:
            jump = apply_impulse(zero, spec.gram, spec.B, d)
            total = total + free_flow(jump, spec.A, lam, t - tau)
    return total


def duality_pairing(spec: SystemSpec, y0: StateLike, schedule: ImpulseSchedule,
                    controls: ControlSet, z: StateLike) -> DualityReport:
    """
    <y(T), z> computed directly and through the adjoint flow

    The dual side is <y0, e^{A* T} z> + sum_k <u_k, chi_omega B^T e^{A*(T - tau_k)} z>.
    """
    Z = _coeffs(z)
    final = evolve(spec, y0, schedule, controls).final
    direct = final.inner(Z)
    lam = spec.basis.eigenvalues
    dual = SpectralState(_coeffs(y0)).inner(adjoint_flow(Z, spec.A, lam, schedule.T))
    for tau, d in zip(schedule.instants, controls.blocks):
        back = adjoint_flow(Z, spec.A, lam, schedule.T - tau).coefficients
        dual += float(np.sum(d * (spec.gram.matrix @ back @ spec.B)))
    return DualityReport(direct=direct, dual=dual)


def trajectory_samples(spec: SystemSpec, y0: StateLike, schedule: ImpulseSchedule,
                       controls: ControlSet, points: int = 101) -> List[TrajectoryPoint]:
    """States on a uniform grid of [0, T] merged with every tau_k- and tau_k."""
    _check_run(spec, y0, schedule, controls)
    validate_and_raise(points >= 2, ValidationError, "at least two sampling points are required")
    grid = np.linspace(0.0, schedule.T, points)
    impulse_times = set(schedule.instants)
    lam = spec.basis.eigenvalues

    rows: List[TrajectoryPoint] = []
    state = SpectralState(_coeffs(y0))
    t = 0.0
    g = 0
    for k, (tau, d) in enumerate(zip(schedule.instants, controls.blocks), start=1):
        while g < len(grid) and grid[g] < tau:
            rows.append(TrajectoryPoint(float(grid[g]), "sample", free_flow(state, spec.A, lam, grid[g] - t)))
            g += 1
        state = free_flow(state, spec.A, lam, tau - t)
        rows.append(TrajectoryPoint(tau, f"pre-impulse {k}", state))
        state = apply_impulse(state, spec.gram, spec.B, d)
        rows.append(TrajectoryPoint(tau, f"post-impulse {k}", state))
        t = tau
        # grid points landing on tau_k are covered by the pre/post rows
        while g < len(grid) and float(grid[g]) in impulse_times:
            g += 1
    for x in grid[g:]:
        rows.append(TrajectoryPoint(float(x), "sample", free_flow(state, spec.A, lam, x - t)))
    return rows


# ==================== Profiles ====================

_SINGLE_MODE = re.compile(r"^single-mode\s+(\d+)$")


def constant_profile_coefficients(basis: Eigenbasis) -> np.ndarray:
    """Sine coefficients of the constant function 1 on (0, L)."""
    j = np.arange(1, basis.modes + 1)
    L = basis.length
    return math.sqrt(2.0 / L) * L * (1.0 - (-1.0) ** j) / (j * math.pi)


def _bump(x: float, center: float, radius: float) -> float:
    s = (x - center) / radius
    if abs(s) >= 1.0:
        return 0.0
    return math.exp(-1.0 / (1.0 - s * s))


def profile_coefficients(name: str, basis: Eigenbasis, n: int, weights: Optional[Sequence[float]] = None) -> SpectralState:
    """
    Coefficients of a named spatial profile, one column per component

    Args:
        name: 'zero', 'constant', 'single-mode j' or 'bump'
        basis: eigenbasis fixing L and N
        n: number of components
        weights: per-component multipliers (default all ones)

    Returns:
        SpectralState of shape N x n
    """
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
    if w.size != n:
        raise ValidationError(f"profile weights must have length {n}, got {w.size}")
    N = basis.modes
    key = name.strip().lower()

    if key == "zero":
        column = np.zeros(N)
    elif key == "constant":
        column = constant_profile_coefficients(basis)
    elif key == "bump":
        L = basis.length
        center, radius = L / 2.0, L / 4.0
        column = np.array([
            integrate.quad(lambda x, j=j: _bump(x, center, radius) * basis.function(j)(x),
                           center - radius, center + radius, limit=200)[0]
            for j in range(1, N + 1)
        ])
    else:
        match = _SINGLE_MODE.match(key)
        if not match:
            raise ValidationError(f"unknown profile '{name}' (expected zero, constant, single-mode j, bump)")
        mode = int(match.group(1))
        if not 1 <= mode <= N:
            raise ValidationError(f"single-mode index must lie in 1..{N}, got {mode}")
        column = np.zeros(N)
        column[mode - 1] = 1.0
    return SpectralState(np.outer(column, w))


def reconstruct(state: StateLike, basis: Eigenbasis, x: Sequence[float]) -> np.ndarray:
    """Point values y(x) as an array len(x) x n."""
    return basis.values(np.asarray(x, dtype=float)) @ _coeffs(state)
