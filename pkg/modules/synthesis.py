"""
Control Synthesis and Obstructions
Reachability operator of the truncated heat system, minimum-norm steering,
the explicit null control for a full-domain control region, and the
orthogonality witnesses that block steering.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .config import TOLERANCE_POLICY
from .error_handler import NumericalError, PreconditionError, ValidationError, validate_and_raise
from .heat_spectral import (
    ControlSet,
    DomainSpec,
    ImpulseSchedule,
    SpectralState,
    StateLike,
    SystemSpec,
    constant_profile_coefficients,
    evolve,
    free_flow,
    profile_coefficients,
)
from .linalg_core import RankTolerance, expm, min_norm_lstsq, null_space, numerical_rank, pinv, singular_values
from .logging_config import log_performance
from .ode_control import (
    ControlPair,
    InstantSequence,
    critical_window,
    is_kalman_controllable,
    kalman_matrix,
    sampled_controllability_matrix,
)

logger = logging.getLogger(__name__)


# ==================== Domain Types ====================

@dataclass
class ReachabilityMap:
    """G: control vector (k*N*m + l*m + i) -> endpoint coefficients (j*n + r)."""
    matrix: np.ndarray
    modes: int
    n: int
    m: int
    impulses: int

    def apply(self, controls: ControlSet) -> SpectralState:
        return SpectralState((self.matrix @ controls.as_vector()).reshape(self.modes, self.n))

    def adjoint_apply(self, z: StateLike) -> np.ndarray:
        coeffs = z.coefficients if isinstance(z, SpectralState) else np.asarray(z, dtype=float)
        return self.matrix.T @ coeffs.reshape(-1)


@dataclass
class SteeringResult:
    controls: ControlSet
    residual: float
    control_norm: float
    achieved: SpectralState
    rank: int = 0

    def to_dict(self) -> Dict:
        return {
            "residual": self.residual,
            "control_norm": self.control_norm,
            "final_norm": self.achieved.norm(),
            "rank": self.rank,
        }


@dataclass
class ObstructionWitness:
    zhat: SpectralState
    alpha: np.ndarray
    defect: float

    def __post_init__(self):
        if not self.zhat.norm() > 0.0:
            raise NumericalError("obstruction witness vanished")


@dataclass
class GramianReport:
    rank: int
    rows: int
    min_eigenvalue: float
    full_rank: bool

    def to_dict(self) -> Dict:
        return {"rank": self.rank, "rows": self.rows,
                "min_eigenvalue": self.min_eigenvalue, "full_rank": self.full_rank}


@dataclass
class WindowObstructionReport:
    instants: List[float]
    horizon: float
    critical_window: float
    pairing_defect: float
    lower_bound: float
    min_residual_found: float
    contrast_instants: List[float]
    contrast_recover_residual: float
    contrast_zero_residual: float
    slack: float = field(default_factory=lambda: TOLERANCE_POLICY["lower_bound_slack"])

    @property
    def bound_holds(self) -> bool:
        return self.min_residual_found >= self.lower_bound - self.slack

    def to_dict(self) -> Dict:
        return {
            "instants": self.instants,
            "T": self.horizon,
            "d_A": self.critical_window,
            "pairing_defect": self.pairing_defect,
            "lower_bound": self.lower_bound,
            "min_residual_found": self.min_residual_found,
            "bound_holds": self.bound_holds,
            "contrast_instants": self.contrast_instants,
            "contrast_recover_residual": self.contrast_recover_residual,
            "contrast_zero_residual": self.contrast_zero_residual,
        }


# ==================== Reachability ====================

def assemble_reachability(spec: SystemSpec, schedule: ImpulseSchedule, check: bool = True,
                          seed: int = 0) -> ReachabilityMap:
    """
    Assemble G column block by column block

    Block k is kron(diag(e^{-lambda (T - tau_k)}) W, e^{-A (T - tau_k)} B).
    A random sample of columns is compared against evolve on unit controls.

    Raises:
        ValidationError: when G would exceed the configured entry budget
        NumericalError: when a checked column disagrees with evolve
    """
    N, n, m, p = spec.modes, spec.n, spec.m, len(schedule)
    entries = (N * n) * (p * N * m)
    if entries > TOLERANCE_POLICY["reachability_max_entries"]:
        raise ValidationError(
            f"reachability matrix would have {entries} entries "
            f"(limit {TOLERANCE_POLICY['reachability_max_entries']}); reduce modes or impulses"
        )

    lam = spec.basis.eigenvalues
    W = spec.gram.matrix
    with log_performance(f"assemble reachability {N * n}x{p * N * m}"):
        blocks = []
        for tau in schedule.instants:
            s = schedule.T - tau
            spatial = np.exp(-lam * s)[:, None] * W
            blocks.append(np.kron(spatial, expm(spec.A, -s) @ spec.B))
        matrix = np.hstack(blocks) if blocks else np.zeros((N * n, 0))

    reach = ReachabilityMap(matrix=matrix, modes=N, n=n, m=m, impulses=p)
    if check and matrix.shape[1] > 0:
        _spot_check(reach, spec, schedule, seed)
    return reach


def _spot_check(reach: ReachabilityMap, spec: SystemSpec, schedule: ImpulseSchedule, seed: int):
    cols = reach.matrix.shape[1]
    count = max(1, int(math.ceil(TOLERANCE_POLICY["reachability_check_fraction"] * cols)))
    rng = np.random.default_rng(seed)
    picked = rng.choice(cols, size=min(count, cols), replace=False)
    zero = SpectralState.zeros(spec.modes, spec.n)
    worst = 0.0
    for col in picked:
        unit = np.zeros(cols)
        unit[col] = 1.0
        controls = ControlSet.from_vector(unit, reach.impulses, reach.modes, reach.m)
        endpoint = evolve(spec, zero, schedule, controls).final.as_vector()
        column = reach.matrix[:, col]
        deviation = float(np.max(np.abs(endpoint - column))) / max(1.0, float(np.max(np.abs(column))))
        worst = max(worst, deviation)
    if worst > TOLERANCE_POLICY["reachability_check_tol"]:
        raise NumericalError(f"reachability column check failed: max relative deviation {worst:.3e}")
    logger.debug(f"reachability spot check on {len(picked)} columns: max deviation {worst:.3e}")


def gramian_check(spec: SystemSpec, schedule: ImpulseSchedule,
                  tol: Optional[RankTolerance] = None) -> GramianReport:
    """Numerical rank of G and smallest eigenvalue of G G^T (from the singular values)."""
    reach = assemble_reachability(spec, schedule)
    G = reach.matrix
    rows = G.shape[0]
    rank = numerical_rank(G, tol) if G.shape[1] else 0
    if G.shape[1] >= rows:
        sv = singular_values(G)
        min_eig = float(sv[rows - 1] ** 2)
    else:
        min_eig = 0.0
    return GramianReport(rank=rank, rows=rows, min_eigenvalue=min_eig, full_rank=rank == rows)


# ==================== Steering ====================

def steer_approx(spec: SystemSpec, schedule: ImpulseSchedule, y0: StateLike, y1: StateLike,
                 tol: Optional[RankTolerance] = None,
                 reach: Optional[ReachabilityMap] = None) -> SteeringResult:
    """
    Minimum-norm least-squares controls toward y1

    Solves G u ~ y1 - e^{AT} y0; the residual is measured on the endpoint
    recomputed by evolve. No residual bound is promised for arbitrary targets.
    """
    y0 = SpectralState(y0.coefficients if isinstance(y0, SpectralState) else y0)
    y1 = SpectralState(y1.coefficients if isinstance(y1, SpectralState) else y1)
    if y1.shape != (spec.modes, spec.n):
        raise ValidationError(f"target must be {spec.modes} x {spec.n}, got {y1.shape}")
    reach = reach or assemble_reachability(spec, schedule)

    free = free_flow(y0, spec.A, spec.basis.eigenvalues, schedule.T)
    rhs = (y1 - free).as_vector()
    if reach.matrix.shape[1] == 0:
        controls = ControlSet.zeros(0, spec.modes, spec.m)
        rank = 0
    else:
        with log_performance("steer_approx least squares"):
            solution = min_norm_lstsq(reach.matrix, rhs, tol)
        controls = ControlSet.from_vector(solution.x, len(schedule), spec.modes, spec.m)
        rank = solution.rank

    achieved = evolve(spec, y0, schedule, controls).final
    predicted = reach.apply(controls) + free if len(controls) else free
    scale = max(1.0, controls.norm() * float(np.linalg.norm(reach.matrix, 2)) if len(controls) else 1.0)
    mismatch = (achieved - predicted).norm()
    if mismatch > TOLERANCE_POLICY["reachability_check_tol"] * scale:
        raise NumericalError(f"evolved endpoint differs from G u + free flow by {mismatch:.3e}")

    residual = (achieved - y1).norm()
    logger.debug(f"steer_approx: rank={rank}, residual={residual:.3e}, control_norm={controls.norm():.3e}")
    return SteeringResult(controls=controls, residual=residual, control_norm=controls.norm(),
                          achieved=achieved, rank=rank)


def build_projections(pair: ControlPair, instants: InstantSequence,
                      tol: Optional[RankTolerance] = None) -> List[np.ndarray]:
    """
    Projections P_k with sum_k P_k = I and Range(P_k) inside Range(e^{A tau_k} B)

    Column j of the stacked decomposition is the minimum-norm solution of
    sum_k e^{A tau_k} B beta_k = e_j.
    """
    S = sampled_controllability_matrix(pair, instants)
    rank = numerical_rank(S, tol)
    if rank < pair.n:
        raise PreconditionError(f"sampled matrix has rank {rank} < {pair.n} at the given instants",
                                anchor="sampled-rank")
    X = pinv(S, tol)
    m = pair.m
    projections = []
    for k in range(len(instants)):
        S_k = S[:, k * m:(k + 1) * m]
        projections.append(S_k @ X[k * m:(k + 1) * m, :])
    return projections


def null_control_full_domain(spec: SystemSpec, schedule: ImpulseSchedule, y0: StateLike,
                             tol: Optional[RankTolerance] = None) -> ControlSet:
    """
    Controls driving y0 exactly to zero when omega is the whole interval

    Mode by mode d_j^(k) = -C e^{-lambda_j tau_k} e^{-A tau_k} P_k c_j(0) with
    C = pinv(B).

    Raises:
        PreconditionError: omega is a strict subregion, the pair fails the
            Kalman test or the instants leave the critical window
    """
    validate_and_raise(spec.domain.covers_domain, PreconditionError,
                       "control region must cover the whole interval for exact null control",
                       anchor="full-domain-control")
    if len(schedule) != spec.n:
        raise ValidationError(f"expected {spec.n} impulse instants, got {len(schedule)}")
    validate_and_raise(is_kalman_controllable(spec.pair, tol), PreconditionError,
                       "pair fails the Kalman rank condition", anchor="kalman-rank")
    d_A = critical_window(spec.A)
    validate_and_raise(schedule.spread < d_A, PreconditionError,
                       f"window tau_n - tau_1 = {schedule.spread:.6g} >= d_A = {d_A:.6g}: "
                       f"critical-window hypothesis violated",
                       anchor="critical-window")

    Y0 = y0.coefficients if isinstance(y0, SpectralState) else np.asarray(y0, dtype=float)
    if Y0.shape != (spec.modes, spec.n):
        raise ValidationError(f"initial state must be {spec.modes} x {spec.n}, got {Y0.shape}")

    C = pinv(spec.B, tol)
    lam = spec.basis.eigenvalues
    projections = build_projections(spec.pair, schedule, tol)
    blocks = []
    for tau, P in zip(schedule.instants, projections):
        M = C @ expm(spec.A, -tau) @ P
        blocks.append(-np.exp(-lam * tau)[:, None] * (Y0 @ M.T))
    controls = ControlSet(tuple(blocks))

    final = evolve(spec, Y0, schedule, controls).final.norm()
    y0_norm = float(np.linalg.norm(Y0))
    if y0_norm > 0.0 and final > TOLERANCE_POLICY["null_control_rtol"] * y0_norm:
        raise NumericalError(f"null control left ||y(T)|| = {final:.3e} for ||y0|| = {y0_norm:.3e}")
    logger.debug(f"null control: ||y(T)|| = {final:.3e}, ||y0|| = {y0_norm:.3e}")
    return controls


# ==================== Obstructions ====================

def obstruction_witness(spec: SystemSpec, schedule: ImpulseSchedule,
                        tol: Optional[RankTolerance] = None) -> ObstructionWitness:
    """
    Constant-profile state orthogonal to everything reachable

    alpha spans part of the common kernel of B^T (A^T)^k; z(x) = alpha is
    expanded in the sine basis and paired against every column of G.

    Raises:
        PreconditionError: the pair is Kalman controllable, so no witness exists
    """
    K = kalman_matrix(spec.pair)
    kernel = null_space(K.T, tol)
    validate_and_raise(kernel.shape[1] > 0, PreconditionError,
                       "pair satisfies the Kalman rank condition; no obstruction exists",
                       anchor="kalman-rank")
    alpha = kernel[:, 0]
    s = constant_profile_coefficients(spec.basis)
    zhat = SpectralState(np.outer(s, alpha))

    reach = assemble_reachability(spec, schedule)
    pairing = reach.adjoint_apply(zhat)
    defect = float(np.max(np.abs(pairing))) if pairing.size else 0.0
    if defect > TOLERANCE_POLICY["pairing_tol"] * max(1.0, zhat.norm()):
        raise NumericalError(f"obstruction witness pairs to {defect:.3e} with a reachable direction")
    return ObstructionWitness(zhat=zhat, alpha=alpha, defect=defect)


def window_obstruction_experiment(a: float = 0.0, b: float = 1.0, c: float = 1.0, d: float = 0.0,
                                  T: float = 4.0, modes: int = 16, tau1: Optional[float] = None,
                                  length: float = math.pi, omega=None, samples: int = 1000,
                                  seed: int = 0) -> WindowObstructionReport:
    """
    Rotation pair with impulses spaced exactly d_A = pi/|b| apart

    Builds alpha orthogonal to e^{A tau_k} B for both instants,
    z_T = alpha propagated by e^{A^T T} on the constant profile, and
    y0 = e^{AT} z_T. Every reachable direction is orthogonal to z_T, so no
    control brings ||y(T)|| below sum_j e^{-lambda_j T} |z_j|^2 / ||z_T||.
    The same system with spacing d_A / 2 recovers generated targets.
    """
    validate_and_raise(b * (c ** 2 + d ** 2) != 0.0, PreconditionError,
                       "rotation parameters must satisfy b (c^2 + d^2) != 0",
                       anchor="nondegenerate-rotation")
    pair = ControlPair.rotation(a, b, c, d)
    d_A = math.pi / abs(b)
    tau1 = (T - d_A) / 2.0 if tau1 is None else float(tau1)
    if not (tau1 > 0.0 and tau1 + d_A < T):
        raise ValidationError(f"instants ({tau1}, {tau1 + d_A}) must lie inside (0, {T}); increase T")

    if omega is None:
        omega = ((length / 4.0, 3.0 * length / 4.0),)
    spec = SystemSpec(pair=pair, domain=DomainSpec(length=length, omega=omega, modes=modes))
    schedule = ImpulseSchedule((tau1, tau1 + d_A), T)

    S = sampled_controllability_matrix(pair, schedule)
    U, sv, _ = np.linalg.svd(S)
    if sv[-1] > TOLERANCE_POLICY["degenerate_rank_atol"] * max(1.0, sv[0]):
        raise NumericalError(f"sampled matrix is not degenerate at spacing d_A (sigma_min = {sv[-1]:.3e})")
    alpha = U[:, -1]

    s = constant_profile_coefficients(spec.basis)
    zhat = np.outer(s, expm(pair.A.T, T) @ alpha)
    y0 = SpectralState(zhat @ expm(pair.A, T).T)

    reach = assemble_reachability(spec, schedule)
    rng = np.random.default_rng(seed)
    trial_controls = rng.standard_normal((samples, reach.matrix.shape[1]))
    trial_controls /= np.linalg.norm(trial_controls, axis=1, keepdims=True)
    pairing_defect = float(np.max(np.abs(trial_controls @ reach.adjoint_apply(zhat))))

    lam = spec.basis.eigenvalues
    zhat_norm = float(np.linalg.norm(zhat))
    lower_bound = float(np.sum(np.exp(-lam * T) * np.sum(zhat ** 2, axis=1)) / zhat_norm)

    zero = SpectralState.zeros(modes, pair.n)
    toward_zero = steer_approx(spec, schedule, y0, zero, reach=reach)

    contrast = ImpulseSchedule((tau1, tau1 + d_A / 2.0), T)
    contrast_reach = assemble_reachability(spec, contrast)
    target_controls = ControlSet.from_vector(
        rng.standard_normal(contrast_reach.matrix.shape[1]), len(contrast), modes, pair.m
    )
    target = evolve(spec, y0, contrast, target_controls).final
    recovered = steer_approx(spec, contrast, y0, target, reach=contrast_reach)
    contrast_zero = steer_approx(spec, contrast, y0, zero, reach=contrast_reach)

    report = WindowObstructionReport(
        instants=list(schedule.instants), horizon=T, critical_window=d_A,
        pairing_defect=pairing_defect, lower_bound=lower_bound,
        min_residual_found=toward_zero.residual,
        contrast_instants=list(contrast.instants),
        contrast_recover_residual=recovered.residual,
        contrast_zero_residual=contrast_zero.residual,
    )
    logger.info(f"window obstruction: defect={pairing_defect:.3e}, bound={lower_bound:.6g}, "
                f"residual={toward_zero.residual:.6g}, contrast={recovered.residual:.3e}")
    return report


def region_sweep(spec: SystemSpec, schedule: ImpulseSchedule, profile: str = "constant",
                 weights: Optional[Sequence[float]] = None,
                 modes: Sequence[int] = (4, 8, 16, 32),
                 tol: Optional[RankTolerance] = None) -> List[Dict]:
    """Steer a named profile toward zero at increasing truncation and tabulate the outcome."""
    rows = []
    for N in modes:
        sub = spec.with_modes(int(N))
        y0 = profile_coefficients(profile, sub.basis, sub.n, weights)
        result = steer_approx(sub, schedule, y0, SpectralState.zeros(sub.modes, sub.n), tol)
        y0_norm = y0.norm()
        rows.append({
            "modes": int(N),
            "residual": result.residual,
            "relative_residual": result.residual / y0_norm if y0_norm > 0.0 else 0.0,
            "control_norm": result.control_norm,
            "rank": result.rank,
        })
        logger.debug(f"region sweep N={N}: residual={result.residual:.3e}")
    return rows
