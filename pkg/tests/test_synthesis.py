import math

import numpy as np
import pytest

from conftest import admissible_instants, random_controllable_pair
from modules.config import TOLERANCE_POLICY
from modules.error_handler import PreconditionError, ValidationError
from modules.heat_spectral import (
    ControlSet,
    DomainSpec,
    ImpulseSchedule,
    SpectralState,
    SystemSpec,
    evolve,
    profile_coefficients,
)
from modules.linalg_core import RankTolerance
from modules.ode_control import ControlPair, InstantSequence, sampled_controllability_matrix
from modules.synthesis import (
    assemble_reachability,
    build_projections,
    gramian_check,
    null_control_full_domain,
    obstruction_witness,
    region_sweep,
    steer_approx,
    window_obstruction_experiment,
)

DEGENERATE = RankTolerance(absolute=1e-10)


def _random_controls(rng, impulses, modes, m):
    return ControlSet(tuple(rng.standard_normal((modes, m)) for _ in range(impulses)))


# ------------------ Reachability operator ------------------

def test_reachability_of_scalar_heat_equation():
    spec = SystemSpec(pair=ControlPair(A=[[0.0]], B=[[1.0]]), domain=DomainSpec(length=math.pi, modes=5))
    schedule = ImpulseSchedule((0.25,), horizon=1.0)
    reach = assemble_reachability(spec, schedule)
    lam = spec.basis.eigenvalues
    assert reach.matrix.shape == (5, 5)
    assert np.allclose(reach.matrix, np.diag(np.exp(-lam * 0.75)), atol=1e-15)


def test_reachability_matches_evolve(rng, strict_domain):
    pair = ControlPair(A=rng.standard_normal((3, 3)), B=rng.standard_normal((3, 2)))
    spec = SystemSpec(pair=pair, domain=strict_domain)
    schedule = ImpulseSchedule((0.1, 0.4, 0.55), horizon=0.8)
    reach = assemble_reachability(spec, schedule)
    assert reach.matrix.shape == (8 * 3, 3 * 8 * 2)
    for _ in range(5):
        controls = _random_controls(rng, 3, 8, 2)
        endpoint = evolve(spec, SpectralState.zeros(8, 3), schedule, controls).final
        assert np.allclose(reach.apply(controls).coefficients, endpoint.coefficients, atol=1e-12)


def test_reachability_adjoint_apply(rng, rotation_system):
    schedule = ImpulseSchedule((0.3, 0.8), horizon=1.0)
    reach = assemble_reachability(rotation_system, schedule)
    z = rng.standard_normal((16, 2))
    controls = _random_controls(rng, 2, 16, 1)
    lhs = reach.apply(controls).inner(z)
    rhs = float(controls.as_vector() @ reach.adjoint_apply(z))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_reachability_entry_budget(monkeypatch, rotation_system):
    monkeypatch.setitem(TOLERANCE_POLICY, "reachability_max_entries", 100)
    with pytest.raises(ValidationError):
        assemble_reachability(rotation_system, ImpulseSchedule((0.3, 0.8), horizon=1.0))


def test_reachability_without_impulses(rotation_system):
    reach = assemble_reachability(rotation_system, ImpulseSchedule((), horizon=1.0))
    assert reach.matrix.shape == (32, 0)


# ------------------ Gramian ------------------

def test_gramian_full_rank_with_strict_region(rotation_pair):
    spec = SystemSpec(pair=rotation_pair,
                      domain=DomainSpec(length=math.pi, omega=((math.pi / 4, 3 * math.pi / 4),), modes=8))
    report = gramian_check(spec, ImpulseSchedule((0.8, 0.9), horizon=1.0))
    assert report.rows == 16
    assert report.full_rank
    assert report.min_eigenvalue > 0.0


def test_gramian_too_few_impulses(rotation_system):
    report = gramian_check(rotation_system, ImpulseSchedule((0.5,), horizon=1.0))
    assert not report.full_rank
    assert report.rank < report.rows
    assert report.min_eigenvalue == 0.0


# ------------------ Approximate steering ------------------

def test_steer_approx_zero_to_zero(rotation_system):
    schedule = ImpulseSchedule((0.3, 0.8), horizon=1.0)
    zero = SpectralState.zeros(16, 2)
    result = steer_approx(rotation_system, schedule, zero, zero)
    assert result.control_norm == 0.0
    assert result.residual == 0.0


def test_steer_approx_without_impulses_reports_free_residual(rng, rotation_system):
    y0 = rng.standard_normal((16, 2))
    schedule = ImpulseSchedule((), horizon=0.5)
    result = steer_approx(rotation_system, schedule, y0, np.zeros((16, 2)))
    assert len(result.controls) == 0
    assert result.residual == pytest.approx(result.achieved.norm())


def test_steer_approx_recovers_generated_targets(rng, strict_domain):
    domain = strict_domain.with_modes(16)
    for _ in range(100):
        pair = random_controllable_pair(rng, 2, 1)
        taus = admissible_instants(rng, pair)
        schedule = ImpulseSchedule(taus, horizon=taus[-1] + rng.uniform(0.1, 0.5))
        spec = SystemSpec(pair=pair, domain=domain)
        y0 = SpectralState(rng.standard_normal((16, 2)))
        target = evolve(spec, y0, schedule, _random_controls(rng, 2, 16, 1)).final
        result = steer_approx(spec, schedule, y0, target)
        assert result.residual <= 1e-8 * max(1.0, target.norm())


def test_steer_approx_control_norm_not_above_generator(rng, rotation_pair):
    spec = SystemSpec(pair=rotation_pair,
                      domain=DomainSpec(length=math.pi, omega=((0.5, 2.0),), modes=4))
    schedule = ImpulseSchedule((0.2, 0.7), horizon=1.0)
    for _ in range(20):
        y0 = SpectralState(rng.standard_normal((4, 2)))
        generator = _random_controls(rng, 2, 4, 1)
        target = evolve(spec, y0, schedule, generator).final
        result = steer_approx(spec, schedule, y0, target)
        assert result.control_norm <= generator.norm() * (1.0 + 1e-6)


def test_steer_approx_rejects_wrong_target_shape(rotation_system):
    with pytest.raises(ValidationError):
        steer_approx(rotation_system, ImpulseSchedule((0.3, 0.8), horizon=1.0),
                     np.zeros((16, 2)), np.zeros((8, 2)))


# ------------------ Projections & exact null control ------------------

def test_projections_partition_identity(rng):
    for _ in range(20):
        n = int(rng.integers(1, 4))
        pair = random_controllable_pair(rng, n, 1)
        seq = InstantSequence(admissible_instants(rng, pair))
        projections = build_projections(pair, seq)
        assert np.allclose(sum(projections), np.eye(n), atol=1e-8)
        S = sampled_controllability_matrix(pair, seq)
        for k, P in enumerate(projections):
            scale = max(1.0, np.abs(P).max())
            assert np.allclose(P @ P, P, atol=1e-8 * scale ** 2)
            column = S[:, k]
            # Range(P_k) lies on the line spanned by e^{A tau_k} B
            residual = P - np.outer(column, column @ P) / (column @ column)
            assert np.allclose(residual, 0.0, atol=1e-8 * scale)


def test_projections_need_full_rank(rotation_pair):
    with pytest.raises(PreconditionError):
        build_projections(rotation_pair, InstantSequence((0.4, 0.4 + math.pi)), DEGENERATE)


def test_null_control_scalar_system():
    spec = SystemSpec(pair=ControlPair(A=[[0.7]], B=[[2.0]]), domain=DomainSpec(length=math.pi, modes=8))
    schedule = ImpulseSchedule((0.3,), horizon=1.0)
    y0 = profile_coefficients("constant", spec.basis, 1)
    controls = null_control_full_domain(spec, schedule, y0)
    expected = -np.exp(-spec.basis.eigenvalues * 0.3) * math.exp(-0.7 * 0.3) * y0.coefficients[:, 0] / 2.0
    assert np.allclose(controls.blocks[0][:, 0], expected, atol=1e-14)
    assert evolve(spec, y0, schedule, controls).final.norm() <= 1e-9 * y0.norm()


def test_null_control_rotation_constant_profile(rotation_pair):
    spec = SystemSpec(pair=rotation_pair, domain=DomainSpec(length=math.pi, modes=32))
    schedule = ImpulseSchedule((0.3, 0.9), horizon=1.0)
    y0 = profile_coefficients("constant", spec.basis, 2, weights=[1.0, -0.5])
    controls = null_control_full_domain(spec, schedule, y0)
    traj = evolve(spec, y0, schedule, controls)
    assert traj.points[-2].state.norm() <= 1e-9 * y0.norm()
    assert traj.final.norm() <= 1e-9 * y0.norm()


def test_null_control_randomized(rng):
    done = 0
    while done < 50:
        n = int(rng.integers(1, 4))
        m = int(rng.integers(1, 3))
        pair = random_controllable_pair(rng, n, m, low=-1.0, high=1.0)
        taus = admissible_instants(rng, pair)
        if np.linalg.cond(pair.B) > 1e3:
            continue
        if np.linalg.cond(sampled_controllability_matrix(pair, InstantSequence(taus))) > 1e3:
            continue
        spec = SystemSpec(pair=pair, domain=DomainSpec(length=math.pi, modes=16))
        schedule = ImpulseSchedule(taus, horizon=taus[-1] + 0.3)
        y0 = SpectralState(rng.standard_normal((16, n)))
        controls = null_control_full_domain(spec, schedule, y0)
        assert evolve(spec, y0, schedule, controls).final.norm() <= 1e-9 * y0.norm()
        done += 1


def test_null_control_zero_state(rotation_system):
    controls = null_control_full_domain(rotation_system, ImpulseSchedule((0.3, 0.9), horizon=1.0),
                                        np.zeros((16, 2)))
    assert controls.norm() == 0.0


def test_null_control_preconditions(rotation_pair, strict_domain):
    strict = SystemSpec(pair=rotation_pair, domain=strict_domain)
    with pytest.raises(PreconditionError) as exc:
        null_control_full_domain(strict, ImpulseSchedule((0.3, 0.9), horizon=1.0), np.zeros((8, 2)))
    assert exc.value.anchor == "full-domain-control"

    uncontrollable = SystemSpec(pair=ControlPair(A=np.eye(2), B=[[1.0], [0.0]]),
                                domain=DomainSpec(length=math.pi, modes=8))
    with pytest.raises(PreconditionError) as exc:
        null_control_full_domain(uncontrollable, ImpulseSchedule((0.3, 0.9), horizon=1.0), np.zeros((8, 2)))
    assert exc.value.anchor == "kalman-rank"

    full = SystemSpec(pair=rotation_pair, domain=DomainSpec(length=math.pi, modes=8))
    with pytest.raises(PreconditionError) as exc:
        null_control_full_domain(full, ImpulseSchedule((0.2, 3.5), horizon=4.0), np.zeros((8, 2)))
    assert exc.value.anchor == "critical-window"

    with pytest.raises(ValidationError):
        null_control_full_domain(full, ImpulseSchedule((0.2,), horizon=1.0), np.zeros((8, 2)))


# ------------------ Obstructions ------------------

def test_obstruction_witness_for_uncontrollable_pair(strict_domain):
    pair = ControlPair(A=np.eye(2), B=[[1.0], [0.0]])
    spec = SystemSpec(pair=pair, domain=strict_domain)
    schedule = ImpulseSchedule((0.2, 0.5, 0.7), horizon=1.0)
    witness = obstruction_witness(spec, schedule)
    assert abs(witness.alpha[0]) < 1e-12
    assert abs(witness.alpha[1]) == pytest.approx(1.0)
    assert witness.defect <= 1e-10
    assert np.allclose(witness.zhat.coefficients[:, 0], 0.0)

    result = steer_approx(spec, schedule, np.zeros((8, 2)), witness.zhat)
    assert result.residual >= witness.zhat.norm() * (1.0 - 1e-8)


def test_obstruction_witness_needs_uncontrollable_pair(rotation_system):
    with pytest.raises(PreconditionError):
        obstruction_witness(rotation_system, ImpulseSchedule((0.3, 0.8), horizon=1.0))


def test_window_obstruction_defaults():
    report = window_obstruction_experiment(samples=200)
    assert report.critical_window == pytest.approx(math.pi)
    assert report.instants[1] - report.instants[0] == pytest.approx(math.pi)
    assert report.pairing_defect <= 1e-10
    assert report.lower_bound > 0.0
    assert report.bound_holds
    assert report.contrast_recover_residual <= 1e-6
    assert report.to_dict()["bound_holds"] is True


@pytest.mark.parametrize("modes", [32, 64])
def test_window_obstruction_orthogonality_at_higher_truncation(modes):
    report = window_obstruction_experiment(modes=modes, samples=1000)
    assert report.pairing_defect <= 1e-10
    assert report.bound_holds
    assert report.min_residual_found >= report.lower_bound - 1e-8


def test_window_obstruction_with_growth_and_tilted_input():
    report = window_obstruction_experiment(a=0.2, b=2.0, c=1.0, d=0.5, T=3.0, modes=8, samples=100)
    assert report.critical_window == pytest.approx(math.pi / 2.0)
    assert report.bound_holds
    assert report.contrast_recover_residual <= 1e-6 * max(1.0, report.lower_bound)


def test_window_obstruction_rejects_bad_parameters():
    with pytest.raises(PreconditionError):
        window_obstruction_experiment(b=0.0)
    with pytest.raises(PreconditionError):
        window_obstruction_experiment(c=0.0, d=0.0)
    with pytest.raises(ValidationError):
        window_obstruction_experiment(T=2.0)


def test_region_sweep_full_domain(rotation_pair):
    spec = SystemSpec(pair=rotation_pair, domain=DomainSpec(length=math.pi, modes=8))
    rows = region_sweep(spec, ImpulseSchedule((0.3, 0.9), horizon=1.0), modes=(4, 8))
    assert [row["modes"] for row in rows] == [4, 8]
    for row in rows:
        assert row["relative_residual"] <= 1e-8
        assert row["rank"] >= row["modes"]


def test_region_sweep_strict_region_leaves_residual(rotation_pair, strict_domain):
    spec = SystemSpec(pair=rotation_pair, domain=strict_domain)
    rows = region_sweep(spec, ImpulseSchedule((0.3, 0.9), horizon=1.0), profile="single-mode 1", modes=(4,))
    assert rows[0]["residual"] >= 0.0
    assert rows[0]["control_norm"] > 0.0
