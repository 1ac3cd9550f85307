"""
Reports & Exports
Machine-readable run reports (JSON) and trajectory time series (CSV).
"""

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np

from .config import APP_CONFIG, TOLERANCE_POLICY
from .heat_spectral import TrajectoryPoint

logger = logging.getLogger(__name__)


def to_jsonable(value: Any) -> Any:
    """Convert numpy data and non-finite floats into JSON-safe values.

    Infinity is written as the string "infinity" (and "-infinity", "nan").
    """
    if hasattr(value, "to_dict") and callable(value.to_dict):
        return to_jsonable(value.to_dict())
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "infinity" if x > 0 else "-infinity"
        return x
    if isinstance(value, complex):
        return [to_jsonable(value.real), to_jsonable(value.imag)]
    return value


@dataclass
class Report:
    """Config echo, task results and provenance of one run."""
    config: Dict[str, Any]
    task: str
    results: Dict[str, Any]
    wall_time: float = 0.0
    tolerance_policy: Dict[str, Any] = field(default_factory=lambda: dict(TOLERANCE_POLICY))
    assertions: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)

    def add_assertion(self, name: str, value: float, threshold: float, passed: bool):
        self.assertions.append({"name": name, "value": value, "threshold": threshold, "passed": bool(passed)})

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "config": self.config,
            "task": self.task,
            "results": self.results,
            "provenance": {
                "tool": APP_CONFIG["APP_NAME"],
                "version": APP_CONFIG["VERSION"],
                "tolerance_policy": self.tolerance_policy,
                "wall_time": self.wall_time,
            },
        }
        if self.assertions:
            data["assertions"] = self.assertions
            data["passed"] = self.passed
        return to_jsonable(data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def write_report(report: Report, path: Union[str, Path]) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2)
    logger.info(f"Report written to {out}")
    return out


def trajectory_rows(points: Sequence[TrajectoryPoint]) -> List[Dict[str, Any]]:
    """CSV rows: t, event, total_norm, mode_k_norm..., component_r_norm..."""
    rows = []
    for p in points:
        row: Dict[str, Any] = {"t": p.t, "event": p.label, "total_norm": p.state.norm()}
        for j, value in enumerate(p.state.mode_norms(), start=1):
            row[f"mode_{j}_norm"] = float(value)
        for r, value in enumerate(p.state.component_norms(), start=1):
            row[f"component_{r}_norm"] = float(value)
        rows.append(row)
    return rows


def write_trajectory_csv(points: Sequence[TrajectoryPoint], path: Union[str, Path]) -> Path:
    rows = trajectory_rows(points)
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    headers = list(rows[0].keys()) if rows else ["t", "event", "total_norm"]
    with out.open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=headers)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in headers})
    logger.info(f"Trajectory CSV written to {out} ({len(rows)} rows)")
    return out
