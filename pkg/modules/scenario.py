"""
Scenario Configuration
Parses the JSON scenario document into validated domain objects. Every
rejection names the offending field path.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from .config import DEFAULT_DOMAIN, TOLERANCE_POLICY
from .error_handler import ImpulseControlError, ValidationError
from .heat_spectral import ControlSet, DomainSpec, Eigenbasis, ImpulseSchedule, SpectralState, profile_coefficients
from .linalg_core import RankTolerance
from .ode_control import ControlPair, InstantSequence

logger = logging.getLogger(__name__)

TASKS = ("analyze", "simulate", "steer-approx", "steer-null", "steer-ode", "reproduce")
REPRODUCE_NAMES = ("rotation-degeneracy", "window-obstruction", "region-contrast")
# External scenario identifiers accepted alongside the descriptive names
REPRODUCE_ALIASES = {"example-2.3": "rotation-degeneracy", "example-5.2": "window-obstruction"}


def reproduce_scenario(name: Any) -> Optional[str]:
    """Descriptive scenario name for name or one of its aliases, None when unknown."""
    if not isinstance(name, str):
        return None
    if name in REPRODUCE_NAMES:
        return name
    return REPRODUCE_ALIASES.get(name)


def known_reproduce_names() -> str:
    return ", ".join(list(REPRODUCE_NAMES) + list(REPRODUCE_ALIASES))


def _fail(path: str, message: str):
    raise ValidationError(f"{path}: {message}")


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        _fail(path, "must be finite")
    return float(value)


def _matrix(value: Any, path: str) -> List[List[float]]:
    if not isinstance(value, list) or not value or not all(isinstance(row, list) for row in value):
        _fail(path, "expected a non-empty list of rows")
    width = len(value[0])
    if width == 0 or any(len(row) != width for row in value):
        _fail(path, "rows must be non-empty and of equal length")
    return [[_number(x, f"{path}[{i}][{j}]") for j, x in enumerate(row)] for i, row in enumerate(value)]


def _vector(value: Any, path: str) -> List[float]:
    if not isinstance(value, list):
        _fail(path, "expected a list of numbers")
    return [_number(x, f"{path}[{i}]") for i, x in enumerate(value)]


def _profile(value: Any, path: str) -> Optional[Dict[str, Any]]:
    """A state given as {'profile': name, 'weights': [...]} or {'coefficients': [[...]]}."""
    if value is None:
        return None
    if isinstance(value, str):
        return {"profile": value}
    if not isinstance(value, dict):
        _fail(path, "expected a profile name or an object with 'profile' or 'coefficients'")
    if "coefficients" in value:
        return {"coefficients": _matrix(value["coefficients"], f"{path}.coefficients")}
    if "profile" not in value or not isinstance(value["profile"], str):
        _fail(path, "needs 'profile' (string) or 'coefficients'")
    out = {"profile": value["profile"]}
    if value.get("weights") is not None:
        out["weights"] = _vector(value["weights"], f"{path}.weights")
    return out


@dataclass
class ScenarioConfig:
    """One run: system, domain, schedule, task and its payload."""
    task: str
    A: Optional[List[List[float]]] = None
    B: Optional[List[List[float]]] = None
    length: float = DEFAULT_DOMAIN["length"]
    omega: Optional[List[List[float]]] = None
    modes: int = DEFAULT_DOMAIN["modes"]
    T: Optional[float] = None
    instants: List[float] = field(default_factory=list)
    initial: Optional[Dict[str, Any]] = None
    target: Optional[Dict[str, Any]] = None
    controls: Optional[List[List[List[float]]]] = None
    z0: Optional[List[float]] = None
    z1: Optional[List[float]] = None
    sampling_points: int = 101
    reproduce: Optional[Dict[str, Any]] = None
    tolerances: Dict[str, float] = field(default_factory=dict)
    seed: int = 0

    # ------------------ Parsing ------------------
    @classmethod
    def from_dict(cls, data: Dict[str, Any], task: Optional[str] = None) -> "ScenarioConfig":
        if not isinstance(data, dict):
            _fail("<root>", "expected an object")
        task = task or data.get("task")
        if task not in TASKS:
            _fail("task", f"must be one of {', '.join(TASKS)}, got {task!r}")
        if data.get("task") not in (None, task):
            _fail("task", f"config declares {data.get('task')!r} but the command runs {task!r}")

        cfg = cls(task=task)
        system = data.get("system")
        if task != "reproduce":
            if not isinstance(system, dict):
                _fail("system", "required object with 'A' and 'B'")
        if isinstance(system, dict):
            cfg.A = _matrix(system.get("A"), "system.A")
            cfg.B = _matrix(system.get("B"), "system.B")

        domain = data.get("domain", {})
        if not isinstance(domain, dict):
            _fail("domain", "expected an object")
        if "length" in domain:
            cfg.length = _number(domain["length"], "domain.length")
        if domain.get("omega") is not None:
            cfg.omega = _matrix(domain["omega"], "domain.omega")
        if "modes" in domain:
            modes = domain["modes"]
            if isinstance(modes, bool) or not isinstance(modes, int) or modes < 1:
                _fail("domain.modes", f"expected a positive integer, got {modes!r}")
            cfg.modes = modes

        schedule = data.get("schedule", {})
        if not isinstance(schedule, dict):
            _fail("schedule", "expected an object")
        if schedule.get("T") is not None:
            cfg.T = _number(schedule["T"], "schedule.T")
        cfg.instants = _vector(schedule.get("instants", []), "schedule.instants")

        cfg.initial = _profile(data.get("initial"), "initial")
        cfg.target = _profile(data.get("target"), "target")
        if data.get("controls") is not None:
            raw = data["controls"]
            if not isinstance(raw, list):
                _fail("controls", "expected a list of coefficient blocks")
            cfg.controls = [_matrix(block, f"controls[{k}]") for k, block in enumerate(raw)]
        if data.get("z0") is not None:
            cfg.z0 = _vector(data["z0"], "z0")
        if data.get("z1") is not None:
            cfg.z1 = _vector(data["z1"], "z1")

        sampling = data.get("sampling", {})
        if not isinstance(sampling, dict):
            _fail("sampling", "expected an object")
        if "points" in sampling:
            points = sampling["points"]
            if isinstance(points, bool) or not isinstance(points, int) or points < 2:
                _fail("sampling.points", f"expected an integer >= 2, got {points!r}")
            cfg.sampling_points = points

        if data.get("reproduce") is not None:
            cfg.reproduce = cls._parse_reproduce(data["reproduce"])
        tolerances = data.get("tolerances", {})
        if not isinstance(tolerances, dict):
            _fail("tolerances", "expected an object")
        for key, value in tolerances.items():
            if key not in TOLERANCE_POLICY:
                _fail(f"tolerances.{key}", "unknown tolerance name")
            cfg.tolerances[key] = _number(value, f"tolerances.{key}")
        seed = data.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            _fail("seed", f"expected an integer, got {seed!r}")
        cfg.seed = seed

        cfg.validate()
        return cfg

    @staticmethod
    def _parse_reproduce(value: Any) -> Dict[str, Any]:
        if isinstance(value, str):
            value = {"name": value}
        if not isinstance(value, dict):
            _fail("reproduce", "expected a scenario name or an object with 'name'")
        name = value.get("name")
        scenario = reproduce_scenario(name)
        if scenario is None:
            _fail("reproduce.name", f"unknown scenario {name!r} (known: {known_reproduce_names()})")
        params = value.get("params", {})
        if not isinstance(params, dict):
            _fail("reproduce.params", "expected an object")
        return {"name": scenario, "params": {k: _number(v, f"reproduce.params.{k}") for k, v in params.items()}}

    def validate(self):
        """Build every domain object once so module preconditions fail before dispatch."""
        if self.task == "reproduce":
            if self.reproduce is None:
                _fail("reproduce", "required for the reproduce task")
            return
        self._guard("system", self.pair)
        self._guard("domain", self.domain)
        if self.task in ("simulate", "steer-approx", "steer-null"):
            if self.T is None:
                _fail("schedule.T", "required for this task")
            self._guard("schedule", self.schedule)
        elif self.task == "steer-ode":
            if self.T is None:
                _fail("schedule.T", "required for this task")
            self._guard("schedule", self.instant_sequence)
            n = len(self.A)
            for name in ("z0", "z1"):
                vec = getattr(self, name)
                if vec is None:
                    _fail(name, "required for steer-ode")
                if len(vec) != n:
                    _fail(name, f"expected length {n}, got {len(vec)}")
        elif self.instants:
            self._guard("schedule", self.instant_sequence)
        if self.task == "simulate" and self.controls is not None:
            if len(self.controls) != len(self.instants):
                _fail("controls", f"{len(self.controls)} blocks for {len(self.instants)} instants")
            for k, block in enumerate(self.controls):
                shape = (len(block), len(block[0]))
                if shape != (self.modes, len(self.B[0])):
                    _fail(f"controls[{k}]", f"expected {self.modes} x {len(self.B[0])}, got {shape[0]} x {shape[1]}")
        for name in ("initial", "target"):
            spec = getattr(self, name)
            if spec and "coefficients" in spec:
                shape = (len(spec["coefficients"]), len(spec["coefficients"][0]))
                if shape != (self.modes, len(self.A)):
                    _fail(f"{name}.coefficients", f"expected {self.modes} x {len(self.A)}, got {shape[0]} x {shape[1]}")

    @staticmethod
    def _guard(path: str, build):
        try:
            build()
        except ImpulseControlError as e:
            _fail(path, e.message)

    # ------------------ Domain objects ------------------
    def pair(self) -> ControlPair:
        return ControlPair(A=np.array(self.A), B=np.array(self.B))

    def domain(self) -> DomainSpec:
        omega = None if self.omega is None else tuple(tuple(iv) for iv in self.omega)
        if omega is not None and any(len(iv) != 2 for iv in omega):
            raise ValidationError("omega intervals must have two endpoints")
        return DomainSpec(length=self.length, omega=omega, modes=self.modes)

    def schedule(self) -> ImpulseSchedule:
        return ImpulseSchedule(tuple(self.instants), self.T)

    def instant_sequence(self) -> InstantSequence:
        return InstantSequence(tuple(self.instants), self.T)

    def rank_tolerance(self) -> RankTolerance:
        if "rank_atol" in self.tolerances:
            return RankTolerance(absolute=self.tolerances["rank_atol"])
        return RankTolerance.default()

    def state(self, which: str, basis: Eigenbasis, n: int) -> SpectralState:
        """Initial or target state; a missing entry means the zero state."""
        spec = getattr(self, which)
        if spec is None:
            return SpectralState.zeros(basis.modes, n)
        if "coefficients" in spec:
            return SpectralState(np.array(spec["coefficients"]))
        try:
            return profile_coefficients(spec["profile"], basis, n, spec.get("weights"))
        except ValidationError as e:
            raise ValidationError(f"{which}.profile: {e.message}")

    def control_set(self, impulses: int, modes: int, m: int) -> ControlSet:
        if self.controls is None:
            return ControlSet.zeros(impulses, modes, m)
        return ControlSet(tuple(np.array(block) for block in self.controls))

    # ------------------ Serialization ------------------
    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"task": self.task}
        if self.A is not None:
            data["system"] = {"A": self.A, "B": self.B}
        data["domain"] = {"length": self.length, "omega": self.omega, "modes": self.modes}
        data["schedule"] = {"T": self.T, "instants": list(self.instants)}
        for name in ("initial", "target", "controls", "z0", "z1", "reproduce"):
            value = getattr(self, name)
            if value is not None:
                data[name] = value
        data["sampling"] = {"points": self.sampling_points}
        data["tolerances"] = dict(self.tolerances)
        data["seed"] = self.seed
        return data

    def with_modes(self, modes: Optional[int]) -> "ScenarioConfig":
        """Copy with the --modes override applied (None keeps the configured count)."""
        if modes is None:
            return self
        data = self.to_dict()
        data["domain"]["modes"] = modes
        return ScenarioConfig.from_dict(data)
