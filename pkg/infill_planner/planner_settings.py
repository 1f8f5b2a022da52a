# planner_settings.py
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from dotenv import dotenv_values, load_dotenv

from multilayer_planner import ConfigError, SolverConfig
from toolpath_io import GcodeParams

load_dotenv()

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"

# environment variable -> SolverConfig field
ENV_KEYS = {
    "INFILL_ALPHA": "alpha",
    "INFILL_DELTA": "delta",
    "INFILL_MAX_AREA": "max_area",
    "INFILL_OVERLAP_MODE": "overlap_mode",
    "INFILL_WORKERS": "worker_count",
    "INFILL_TIME_LIMIT": "relaxed_time_limit",
    "INFILL_FULL_TIME_LIMIT": "full_time_limit",
    "INFILL_EXACT_THRESHOLD": "exact_threshold",
    "INFILL_ALTERNATE_CORNERS": "alternate_corners",
    "INFILL_SEED": "seed",
}

_SOLVER_DEFAULTS = {f.name: f.default for f in fields(SolverConfig)}
_GCODE_KEYS = {f.name for f in fields(GcodeParams)}


def configure_logging(level: Optional[str] = None) -> None:
    """Single stderr handler; stdout carries data"""
    name = (level or os.environ.get("INFILL_LOG_LEVEL") or "INFO").upper()
    numeric = getattr(logging, name, None)
    if not isinstance(numeric, int):
        print(f"unknown log level '{name}', using INFO", file=sys.stderr)
        numeric = logging.INFO
    logging.basicConfig(level=numeric, format=LOG_FORMAT, stream=sys.stderr, force=True)


def _parse_bool(key: str, raw: str) -> bool:
    text = raw.strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"{key} must be true or false, got '{raw}'")


def coerce_solver_value(key: str, raw: Any) -> Any:
    """Turn a text setting into the type of the matching SolverConfig field"""
    if key not in _SOLVER_DEFAULTS:
        raise ConfigError(f"unknown setting '{key}'")
    if not isinstance(raw, str):
        return raw
    default = _SOLVER_DEFAULTS[key]
    try:
        if isinstance(default, bool):
            return _parse_bool(key, raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got '{raw}'")
    return raw.strip()


def config_from_env(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    environ = os.environ if environ is None else environ
    values = {}
    for env_key, field_name in ENV_KEYS.items():
        raw = environ.get(env_key)
        if raw is not None and raw.strip() != "":
            values[field_name] = coerce_solver_value(field_name, raw)
    return values


def load_config_file(path: Union[str, Path]) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    """Read a key=value file; returns (solver settings, gcode settings)"""
    if not Path(path).is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    solver: Dict[str, Any] = {}
    gcode: Dict[str, Any] = {}
    for key, raw in dotenv_values(path).items():
        name = key.strip().lower()
        if raw is None:
            raise ConfigError(f"{path}: '{key}' has no value")
        if name in _GCODE_KEYS:
            gcode[name] = raw
        elif name in _SOLVER_DEFAULTS:
            solver[name] = coerce_solver_value(name, raw)
        else:
            raise ConfigError(f"{path}: unknown setting '{key}'")
    return solver, gcode


def resolve_settings(config_file: Optional[Union[str, Path]] = None,
                     overrides: Optional[Mapping[str, Any]] = None,
                     gcode_overrides: Optional[Mapping[str, Any]] = None,
                     environ: Optional[Mapping[str, str]] = None) -> Tuple[SolverConfig, GcodeParams]:
    """Defaults < environment < config file < explicit overrides"""
    solver = config_from_env(environ)
    gcode: Dict[str, Any] = {}
    if config_file is not None:
        file_solver, file_gcode = load_config_file(config_file)
        solver.update(file_solver)
        gcode.update(file_gcode)
    solver.update({k: v for k, v in (overrides or {}).items() if v is not None})
    gcode.update({k: v for k, v in (gcode_overrides or {}).items() if v is not None})
    return SolverConfig.from_dict(solver), GcodeParams.from_dict(gcode)
