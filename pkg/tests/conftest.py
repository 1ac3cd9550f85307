import sys
import math
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from modules.heat_spectral import DomainSpec, SystemSpec
from modules.linalg_core import singular_values
from modules.ode_control import ControlPair, critical_window, kalman_matrix


@pytest.fixture
def rng():
    """Fixture to provide a seeded random generator"""
    return np.random.default_rng(20240611)


@pytest.fixture
def rotation_pair():
    """A = [[0, -1], [1, 0]], B = (1, 0)^T"""
    return ControlPair.rotation(0.0, 1.0, 1.0, 0.0)


@pytest.fixture
def full_domain():
    return DomainSpec(length=math.pi, modes=16)


@pytest.fixture
def strict_domain():
    return DomainSpec(length=math.pi, omega=((math.pi / 4, 3 * math.pi / 4),), modes=8)


@pytest.fixture
def rotation_system(rotation_pair, full_domain):
    return SystemSpec(pair=rotation_pair, domain=full_domain)


@pytest.fixture(autouse=True)
def quiet_file_logging(monkeypatch):
    """Keep CLI runs inside tests from writing log files"""
    monkeypatch.setenv("IMPULSE_LOG_FILE", "0")


def random_controllable_pair(rng, n, m, low=-2.0, high=2.0, min_ratio=1e-3):
    """Draw pairs until the Kalman matrix is comfortably full rank."""
    while True:
        pair = ControlPair(A=rng.uniform(low, high, (n, n)), B=rng.uniform(low, high, (n, m)))
        sv = singular_values(kalman_matrix(pair))
        if sv[-1] > min_ratio * sv[0]:
            return pair


def admissible_instants(rng, pair, start=0.1, cap=1.0, min_gap=0.05, edge_fraction=0.0):
    """Increasing instants with spread below min(d_A - 1e-6, cap).

    With probability edge_fraction the spread sits exactly at that bound.
    """
    n = pair.n
    width = min(critical_window(pair.A) - 1e-6, cap)
    if rng.uniform() >= edge_fraction:
        width *= rng.uniform(0.3, 1.0)
    while True:
        inner = np.sort(rng.uniform(0.0, width, max(n - 2, 0)))
        offsets = np.concatenate((inner, [width])) if n > 1 else inner
        taus = np.concatenate(([start], start + offsets))
        if n == 1 or np.min(np.diff(taus)) >= min_gap * width:
            return tuple(taus)
