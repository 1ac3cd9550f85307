import json
import math
import os
from pathlib import Path
from typing import Any, Dict

from dotenv import load_dotenv

from .error_handler import ConfigurationError

APP_CONFIG = {
    "APP_NAME": "impulse-heat-control",
    "VERSION": "1.0.0",
}

# Every numeric threshold shared by the library, the CLI and the test-suite.
TOLERANCE_POLICY: Dict[str, Any] = {
    # None selects the relative policy sigma_max * max(rows, cols) * eps.
    "rank_atol": None,
    "real_eigenvalue_rtol": 1e-9,
    "eigenvalue_dimension_cap": 32,
    "eigenvalue_cluster_rtol": 1e-5,
    "aberth_max_iterations": 500,
    "window_boundary_band": 1e-9,
    "steer_ode_rtol": 1e-9,
    "duality_tol": 1e-10,
    "null_control_rtol": 1e-9,
    "pairing_tol": 1e-10,
    "lower_bound_slack": 1e-8,
    "recover_tol": 1e-6,
    "reachability_check_tol": 1e-10,
    "reachability_check_fraction": 0.01,
    "reachability_max_entries": 10**7,
    "degenerate_rank_atol": 1e-10,
}

DEFAULT_DOMAIN = {
    "length": math.pi,
    "omega": None,  # None means the whole interval
    "modes": 64,
}

LOGGING_DEFAULTS = {
    "log_dir": "logs",
    "log_level": "INFO",
    "enable_console": True,
    "enable_file": True,
}


def load_environment(env_file: str = ".env") -> Dict[str, Any]:
    """Read logging overrides from the environment (and an optional .env file)."""
    load_dotenv(env_file, override=False)
    settings = dict(LOGGING_DEFAULTS)
    settings["log_dir"] = os.getenv("IMPULSE_LOG_DIR", settings["log_dir"])
    settings["log_level"] = os.getenv("IMPULSE_LOG_LEVEL", settings["log_level"])
    settings["enable_file"] = os.getenv("IMPULSE_LOG_FILE", "1") not in ("0", "false", "no")
    return settings


def load_config(config_path: str) -> dict:
    """Load a scenario document from a JSON file.

    Raises ConfigurationError when the file is missing or is not valid JSON.
    """
    cfg_path = Path(config_path)
    if not cfg_path.is_file():
        raise ConfigurationError(f"Config file not found: {cfg_path}")
    try:
        with cfg_path.open("r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Config file is not valid JSON: {cfg_path}", details=str(e))
    if not isinstance(data, dict):
        raise ConfigurationError(f"Config root must be an object: {cfg_path}")
    return data
