"""
Scenario Runner
Dispatches validated scenario configs to the numerical modules and builds
reports. Also hosts the reproduce scenarios and the batch runner.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import TOLERANCE_POLICY, load_config
from .error_handler import ErrorHandler, PreconditionError, ReproductionFailure, ValidationError, validate_and_raise
from .heat_spectral import (
    DomainSpec,
    ImpulseSchedule,
    SystemSpec,
    evolve,
    profile_coefficients,
    trajectory_samples,
)
from .linalg_core import RankTolerance, eigenvalues, numerical_rank
from .logging_config import RunAuditLogger, log_performance
from .ode_control import (
    FORWARD,
    TIME_REVERSED,
    ControlPair,
    InstantSequence,
    adjoint_kernel_dimension,
    check_sampled_rank,
    critical_window,
    horizon_within_window,
    instant_coefficient_matrix,
    kalman_matrix,
    sampled_controllability_matrix,
    single_instant_rank,
    steer_ode,
    steering_is_exact,
)
from .reports import Report, write_report, write_trajectory_csv
from .scenario import ScenarioConfig, known_reproduce_names, reproduce_scenario
from .synthesis import (
    gramian_check,
    null_control_full_domain,
    region_sweep,
    steer_approx,
    window_obstruction_experiment,
)

logger = logging.getLogger(__name__)


def _tolerance(config: Optional[ScenarioConfig], tol: Optional[float]) -> RankTolerance:
    if tol is not None:
        return RankTolerance(absolute=tol)
    if config is not None:
        return config.rank_tolerance()
    return RankTolerance.default()


# ==================== analyze ====================

def run_analyze(config: ScenarioConfig, tol: Optional[float] = None) -> Report:
    """Kalman rank, d_A, window check and sampled ranks of the configured pair."""
    start = time.perf_counter()
    rank_tol = _tolerance(config, tol)
    pair = config.pair()
    K = kalman_matrix(pair)
    kalman_rank = numerical_rank(K, rank_tol)
    d_A = critical_window(pair.A)

    results: Dict[str, Any] = {
        "n": pair.n,
        "m": pair.m,
        "kalman_rank": kalman_rank,
        "is_controllable": kalman_rank == pair.n,
        "d_A": d_A,
        "eigenvalues": eigenvalues(pair.A).as_pairs() if pair.n <= TOLERANCE_POLICY["eigenvalue_dimension_cap"] else None,
        "rank_tolerance": rank_tol.describe(),
    }

    if config.instants:
        instants = config.instant_sequence()
        results["instants"] = list(instants.instants)
        results["spread"] = instants.spread
        results["window_ok"] = instants.spread < d_A
        results["sampled_rank_forward"] = numerical_rank(
            sampled_controllability_matrix(pair, instants, FORWARD), rank_tol)
        results["single_instant_ranks"] = [single_instant_rank(pair, t, rank_tol) for t in instants.instants]
        if instants.horizon is not None:
            results["sampled_rank_time_reversed"] = numerical_rank(
                sampled_controllability_matrix(pair, instants, TIME_REVERSED), rank_tol)
            results["adjoint_kernel_dimension"] = adjoint_kernel_dimension(pair, instants, tol=rank_tol)
            results["horizon_within_window"] = horizon_within_window(pair.A, instants.horizon)
        if len(instants) == pair.n:
            window = check_sampled_rank(pair, instants, rank_tol)
            results["window_ok"] = window.window_ok
            results["window_diagnostic"] = window.diagnostic
            results["coefficient_matrix_rank"] = instant_coefficient_matrix(pair.A, instants, rank_tol).rank

    return Report(config=config.to_dict(), task="analyze", results=results,
                  wall_time=time.perf_counter() - start)


# ==================== simulate / steer ====================

def run_scenario(config: ScenarioConfig, tol: Optional[float] = None,
                 csv_dir: Optional[str] = None) -> Report:
    """
    Run simulate, steer-approx, steer-null or steer-ode

    Args:
        config: validated scenario
        tol: absolute rank tolerance override
        csv_dir: directory for the trajectory CSV (heat tasks only)

    Returns:
        Report with task-specific results
    """
    start = time.perf_counter()
    rank_tol = _tolerance(config, tol)
    task = config.task

    if task == "steer-ode":
        results = _run_steer_ode(config, rank_tol)
        return Report(config=config.to_dict(), task=task, results=results,
                      wall_time=time.perf_counter() - start)

    spec = SystemSpec(pair=config.pair(), domain=config.domain())
    schedule = config.schedule()
    y0 = config.state("initial", spec.basis, spec.n)
    results: Dict[str, Any] = {"initial_norm": y0.norm()}

    if task == "simulate":
        controls = config.control_set(len(schedule), spec.modes, spec.m)
    elif task == "steer-approx":
        y1 = config.state("target", spec.basis, spec.n)
        with log_performance("steer-approx"):
            steering = steer_approx(spec, schedule, y0, y1, rank_tol)
        controls = steering.controls
        results.update(steering.to_dict())
        results["target_norm"] = y1.norm()
        if not spec.domain.covers_domain:
            results["gramian"] = gramian_check(spec, schedule, rank_tol).to_dict()
    elif task == "steer-null":
        with log_performance("steer-null"):
            controls = null_control_full_domain(spec, schedule, y0, rank_tol)
        results["control_norm"] = controls.norm()
    else:
        raise ValidationError(f"task: {task!r} is not a scenario task")

    trajectory = evolve(spec, y0, schedule, controls)
    results["final_norm"] = trajectory.final.norm()
    results["jump_norms"] = [j.norm() for j in trajectory.jumps()]
    results["controls"] = list(controls.blocks)

    if csv_dir is not None:
        samples = trajectory_samples(spec, y0, schedule, controls, config.sampling_points)
        path = write_trajectory_csv(samples, Path(csv_dir) / f"{task}_trajectory.csv")
        results["csv"] = str(path)

    return Report(config=config.to_dict(), task=task, results=results,
                  wall_time=time.perf_counter() - start)


def _run_steer_ode(config: ScenarioConfig, rank_tol: RankTolerance) -> Dict[str, Any]:
    pair = config.pair()
    instants = config.instant_sequence()
    result = steer_ode(pair, instants, config.z0, config.z1, rank_tol)
    return {
        "controls": result.controls,
        "residual": result.residual,
        "exact": steering_is_exact(result, config.z1),
        "rank": result.rank,
        "rank_full": result.rank_full,
        "endpoint": result.endpoint,
        "control_norm": result.control_norm,
        "d_A": critical_window(pair.A),
        "window_ok": instants.spread < critical_window(pair.A),
    }


# ==================== reproduce ====================

def _rotation_degeneracy(params: Dict[str, float], seed: int, report: Report):
    a, b = params.get("a", 0.0), params.get("b", 1.0)
    c, d = params.get("c", 1.0), params.get("d", 0.0)
    validate_and_raise(b * (c ** 2 + d ** 2) != 0.0, PreconditionError,
                       "rotation parameters must satisfy b (c^2 + d^2) != 0", anchor="nondegenerate-rotation")
    pair = ControlPair.rotation(a, b, c, d)
    rng = np.random.default_rng(seed)
    degenerate = RankTolerance(absolute=TOLERANCE_POLICY["degenerate_rank_atol"])
    d_A = critical_window(pair.A)

    worst = 0.0
    for _ in range(int(params.get("samples", 200))):
        t1 = float(rng.uniform(0.0, math.pi))
        t2 = t1 + float(rng.uniform(0.01, 2.0 * math.pi))
        S = sampled_controllability_matrix(pair, InstantSequence((t1, t2)))
        law = math.exp(a * (t1 + t2)) * (c ** 2 + d ** 2) * math.sin(b * (t2 - t1))
        scale = max(1.0, math.exp(a * (t1 + t2)) * (c ** 2 + d ** 2))
        worst = max(worst, abs(np.linalg.det(S) - law) / scale)
    report.add_assertion("determinant law", worst, 1e-10, worst <= 1e-10)

    ranks = {}
    base = 0.1
    for label, spacing in (("d_A", math.pi / abs(b)), ("2 d_A", 2.0 * math.pi / abs(b)),
                           ("d_A / 2", math.pi / (2.0 * abs(b)))):
        S = sampled_controllability_matrix(pair, InstantSequence((base, base + spacing)))
        ranks[label] = numerical_rank(S, degenerate)
    report.add_assertion("rank drop at spacing d_A", ranks["d_A"], 1, ranks["d_A"] == 1)
    report.add_assertion("rank drop at spacing 2 d_A", ranks["2 d_A"], 1, ranks["2 d_A"] == 1)
    report.add_assertion("full rank at spacing d_A / 2", ranks["d_A / 2"], 2, ranks["d_A / 2"] == 2)

    boundary = check_sampled_rank(pair, InstantSequence((base, base + math.pi / abs(b))), degenerate)
    report.add_assertion("boundary spacing leaves the window", float(boundary.window_ok), 0.0,
                         not boundary.window_ok)
    report.results.update({
        "d_A": d_A,
        "kalman_rank": numerical_rank(kalman_matrix(pair)),
        "determinant_max_defect": worst,
        "ranks_by_spacing": ranks,
        "boundary_diagnostic": boundary.diagnostic,
        "single_instant_rank": single_instant_rank(pair, base),
    })


def _window_obstruction(params: Dict[str, float], seed: int, modes: Optional[int], report: Report):
    kwargs = {k: params[k] for k in ("a", "b", "c", "d", "T", "tau1", "length") if k in params}
    experiment = window_obstruction_experiment(
        modes=int(modes or params.get("modes", 16)),
        samples=int(params.get("samples", 1000)),
        seed=seed,
        **kwargs,
    )
    report.results.update(experiment.to_dict())
    report.add_assertion("pairing defect at spacing d_A", experiment.pairing_defect,
                         TOLERANCE_POLICY["pairing_tol"],
                         experiment.pairing_defect <= TOLERANCE_POLICY["pairing_tol"])
    report.add_assertion("residual above the lower bound", experiment.min_residual_found - experiment.lower_bound,
                         -TOLERANCE_POLICY["lower_bound_slack"], experiment.bound_holds)
    report.add_assertion("recovery at spacing d_A / 2", experiment.contrast_recover_residual,
                         TOLERANCE_POLICY["recover_tol"],
                         experiment.contrast_recover_residual <= TOLERANCE_POLICY["recover_tol"])


def _region_contrast(params: Dict[str, float], modes: Optional[int], report: Report):
    a, b = params.get("a", 0.0), params.get("b", 1.0)
    c, d = params.get("c", 1.0), params.get("d", 0.0)
    pair = ControlPair.rotation(a, b, c, d)
    length = params.get("length", math.pi)
    T = params.get("T", 1.0)
    schedule = ImpulseSchedule((params.get("tau1", 0.3), params.get("tau2", 0.9)), T)

    full = SystemSpec(pair=pair, domain=DomainSpec(length=length, modes=int(modes or params.get("modes", 32))))
    y0 = profile_coefficients("constant", full.basis, pair.n)
    controls = null_control_full_domain(full, schedule, y0)
    final = evolve(full, y0, schedule, controls).final.norm()
    ratio = final / y0.norm()
    report.add_assertion("full-domain null control", ratio, TOLERANCE_POLICY["null_control_rtol"],
                         ratio <= TOLERANCE_POLICY["null_control_rtol"])

    strict = SystemSpec(pair=pair, domain=DomainSpec(length=length, omega=((length / 4.0, 3.0 * length / 4.0),),
                                                     modes=4))
    sweep = region_sweep(strict, schedule, "constant", modes=(4, 8, 16))
    report.results.update({
        "full_domain_final_ratio": ratio,
        "full_domain_control_norm": controls.norm(),
        "strict_region_sweep": sweep,
    })


def run_reproduce(name: str, params: Optional[Dict[str, float]] = None, seed: int = 0,
                  modes: Optional[int] = None, config: Optional[ScenarioConfig] = None) -> Report:
    """
    Run a named reproduction scenario and record pass/fail per assertion

    Raises:
        ValidationError: unknown scenario name
    """
    scenario = reproduce_scenario(name)
    if scenario is None:
        raise ValidationError(f"unknown reproduce scenario {name!r} (known: {known_reproduce_names()})")
    name = scenario
    params = dict(params or {})
    start = time.perf_counter()
    echo = config.to_dict() if config is not None else {"task": "reproduce",
                                                        "reproduce": {"name": name, "params": params},
                                                        "seed": seed}
    report = Report(config=echo, task="reproduce", results={"scenario": name})
    audit = RunAuditLogger()

    with log_performance(f"reproduce {name}"):
        if name == "rotation-degeneracy":
            _rotation_degeneracy(params, seed, report)
        elif name == "window-obstruction":
            _window_obstruction(params, seed, modes, report)
        else:
            _region_contrast(params, modes, report)

    for assertion in report.assertions:
        audit.log_assertion(name, assertion["name"], assertion["passed"], float(assertion["value"]))
    report.wall_time = time.perf_counter() - start
    return report


# ==================== dispatch & batch ====================

def run_config(config: ScenarioConfig, tol: Optional[float] = None, csv_dir: Optional[str] = None,
               seed: Optional[int] = None) -> Report:
    if config.task == "analyze":
        return run_analyze(config, tol)
    if config.task == "reproduce":
        return run_reproduce(config.reproduce["name"], config.reproduce["params"],
                             seed=config.seed if seed is None else seed, modes=None, config=config)
    return run_scenario(config, tol, csv_dir)


def _run_one(path: str, out_dir: Path, tol: Optional[float]) -> Tuple[str, int]:
    audit = RunAuditLogger()
    audit.log_start("batch", path)
    try:
        config = ScenarioConfig.from_dict(load_config(path))
        report = run_config(config, tol, csv_dir=str(out_dir / Path(path).stem))
        write_report(report, out_dir / f"{Path(path).stem}.json")
        if not report.passed:
            raise ReproductionFailure(f"{Path(path).name}: reproduce assertions failed")
        audit.log_success("batch", path, report.wall_time)
        return path, 0
    except Exception as e:
        audit.log_failure("batch", path, str(e))
        return path, ErrorHandler.handle_exception(e, context={"config": path})


def run_batch(paths: Sequence[str], out_dir: str, workers: int = 4,
              tol: Optional[float] = None) -> List[Tuple[str, int]]:
    """Run independent configs on a thread pool; one report per config in out_dir."""
    if workers < 1:
        raise ValidationError(f"workers must be positive, got {workers}")
    target = Path(out_dir)
    target.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(lambda p: _run_one(p, target, tol), paths))
    for path, code in outcomes:
        logger.info(f"batch: {path} -> exit code {code}")
    return outcomes
