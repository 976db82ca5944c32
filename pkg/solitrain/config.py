"""
Environment settings and run-config loading

Environment variables (read after load_dotenv()) set process-wide defaults such as
the output directory and sweep parallelism; YAML run-config files describe one
simulation: grid, initial state, evolution, detector, schedule and critical ratios.
"""
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from solitrain.errors import ConfigError
from solitrain.models.field import (
    DEFAULT_LENGTH, DEFAULT_N0, DEFAULT_N_POINTS, DEFAULT_Z_MIN,
    Grid, SystemState, init_dark_soliton, init_uniform, make_grid,
)
from solitrain.services.detection import DetectorConfig
from solitrain.services.evolution import DEFAULT_DT, DEFAULT_T_FINAL, AbsorberConfig, EvolutionConfig
from solitrain.services.protocol import (
    BRANCH_RA, CritConstants, StepProfile, StepSchedule, ZERO, make_quench,
)

logger = logging.getLogger(__name__)

RA_T_FINAL = 10.0

INITIAL_KINDS = ("uniform", "dark_soliton")

DEFAULT_GRID = {"n_points": DEFAULT_N_POINTS, "L": DEFAULT_LENGTH, "z_min": DEFAULT_Z_MIN}
DEFAULT_INITIAL = {"kind": "uniform", "n0": DEFAULT_N0}
DEFAULT_EVOLUTION = {"dt": DEFAULT_DT, "t_final": DEFAULT_T_FINAL, "record_stride": 200, "line_stride": 20,
                     "absorber": {}}
DEFAULT_ABSORBER = {"enabled": False, "width": 20.0, "strength": 0.01}
DEFAULT_DETECTOR = {"z_d": 10.0, "depth_fraction": 0.6, "background_window": 20.0,
                    "min_separation": 0.5, "window": None}
DEFAULT_CRIT = {"c_up": 2.2, "c_down": 1.0 / 2.2}
SCHEDULE_KEYS = ("N", "self", "cross", "phase")
PROFILE_KEYS = ("left", "right", "smoothing")


@dataclass
class Settings:
    """Process-wide defaults taken from the environment"""

    output_dir: Path
    table_dir: Path
    max_workers: int
    environment: str
    log_level: str
    strict_fingerprint: bool


def _env_bool(name: str, default: bool) -> bool:
    value = os.getenv(name)
    if value is None or value.strip() == "":
        return default
    return value.strip().lower() in ("1", "true", "yes", "on")


def load_settings() -> Settings:
    """
    Read SOLITON_* and ENVIRONMENT variables

    Raises:
        ConfigError: If SOLITON_MAX_WORKERS is not a positive integer
    """
    environment = os.getenv("ENVIRONMENT", "development").lower()
    default_level = "DEBUG" if environment == "development" else "INFO"

    raw_workers = os.getenv("SOLITON_MAX_WORKERS", "4")
    try:
        max_workers = int(raw_workers)
    except ValueError:
        raise ConfigError(f"SOLITON_MAX_WORKERS must be an integer, got {raw_workers!r}")
    if max_workers < 1:
        raise ConfigError(f"SOLITON_MAX_WORKERS must be >= 1, got {max_workers}")

    return Settings(
        output_dir=Path(os.getenv("SOLITON_OUTPUT_DIR", "./output")),
        table_dir=Path(os.getenv("SOLITON_TABLE_DIR", "./tables")),
        max_workers=max_workers,
        environment=environment,
        log_level=os.getenv("SOLITON_LOG_LEVEL", default_level).upper(),
        strict_fingerprint=_env_bool("SOLITON_STRICT_FINGERPRINT", True),
    )


def configure_logging(level: str):
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


@dataclass(frozen=True)
class SimulationConfig:
    """
    Everything besides the schedule that determines a measured frequency

    Attributes:
        n_points, length, z_min: Grid parameters
        n0: Background density of the initial condensate
        initial: Initial state kind ("uniform" or "dark_soliton")
        evolution: Time stepping
        detector: Detector line and event detection
        crit: Critical ratios used for encode/decode
    """

    n_points: int = DEFAULT_N_POINTS
    length: float = DEFAULT_LENGTH
    z_min: float = DEFAULT_Z_MIN
    n0: float = DEFAULT_N0
    initial: str = "uniform"
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    crit: CritConstants = field(default_factory=CritConstants)

    def __post_init__(self):
        if self.initial not in INITIAL_KINDS:
            raise ConfigError(f"initial.kind must be one of {INITIAL_KINDS}, got {self.initial!r}")
        if not self.n0 > 0:
            raise ConfigError(f"initial.n0 must be positive, got {self.n0}")

    def make_grid(self) -> Grid:
        return make_grid(self.n_points, self.length, self.z_min)

    def initial_state(self, n_components: int, g: float = 1.0) -> SystemState:
        grid = self.make_grid()
        if self.initial == "dark_soliton":
            return init_dark_soliton(grid, self.n0, g, n_components)
        return init_uniform(grid, self.n0, n_components)

    def for_branch(self, branch: str) -> "SimulationConfig":
        """
        Config used to run or calibrate on a branch

        The attractive branch is modulationally unstable, so runs stop at
        t_final = 10; an explicit detector window that no longer fits is dropped.
        """
        if branch != BRANCH_RA or self.evolution.t_final <= RA_T_FINAL:
            return self
        detector = self.detector
        if detector.window is not None and detector.window[1] > RA_T_FINAL:
            logger.debug(f"Dropping detector window {detector.window} for the attractive branch")
            detector = replace(detector, window=None)
        return replace(self, evolution=replace(self.evolution, t_final=RA_T_FINAL), detector=detector)

    def fingerprint(self) -> str:
        """SHA-256 of the settings a calibration table depends on"""
        document = {
            "n_points": self.n_points,
            "L": self.length,
            "z_min": self.z_min,
            "dt": self.evolution.dt,
            "t_final": self.evolution.t_final,
            "record_stride": self.evolution.record_stride,
            "line_stride": self.evolution.line_stride,
            "detector": self.detector.to_dict(),
        }
        canonical = json.dumps(document, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "grid": {"n_points": self.n_points, "L": self.length, "z_min": self.z_min},
            "initial": {"kind": self.initial, "n0": self.n0},
            "evolution": self.evolution.to_dict(),
            "detector": self.detector.to_dict(),
            "crit": self.crit.to_dict(),
        }


@dataclass(frozen=True)
class RunConfig:
    simulation: SimulationConfig
    schedule: StepSchedule
    source: Optional[Path] = None


def _check_keys(section: Dict[str, Any], allowed, path: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{path} must be a mapping, got {type(section).__name__}")
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown config key {path}.{key} (allowed: {', '.join(allowed)})")


def _merged(config: Dict[str, Any], name: str, defaults: Dict[str, Any]) -> Dict[str, Any]:
    section = config.get(name)
    if section is None:
        section = {}
    _check_keys(section, tuple(defaults), name)
    merged = dict(defaults)
    merged.update(section)
    return merged


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path} must be a number, got {value!r}")
    return float(value)


def _integer(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path} must be an integer, got {value!r}")
    return value


def _parse_profile(item: Any, path: str) -> StepProfile:
    if isinstance(item, (int, float)) and not isinstance(item, bool):
        return StepProfile.constant(float(item))
    if isinstance(item, (list, tuple)) and len(item) == 2:
        return StepProfile(_number(item[0], f"{path}[0]"), _number(item[1], f"{path}[1]"))
    _check_keys(item, PROFILE_KEYS, path)
    if "left" not in item or "right" not in item:
        raise ConfigError(f"{path} needs both 'left' and 'right'")
    return StepProfile(
        _number(item["left"], f"{path}.left"),
        _number(item["right"], f"{path}.right"),
        _number(item.get("smoothing", 0.0), f"{path}.smoothing"),
    )


def _parse_profile_list(items: Any, n: int, path: str) -> List[StepProfile]:
    if not isinstance(items, list) or len(items) != n:
        raise ConfigError(f"{path} must be a list of {n} step profiles")
    return [_parse_profile(item, f"{path}[{i}]") for i, item in enumerate(items)]


def parse_schedule(section: Optional[Dict[str, Any]]) -> StepSchedule:
    """
    Build a StepSchedule from the `schedule` section

    A missing section means no quench: one component with g = 1 on both sides.
    Profiles are given as {left, right[, smoothing]}, [left, right] or a constant.
    """
    if section is None:
        return make_quench(1.0)
    _check_keys(section, SCHEDULE_KEYS, "schedule")
    n = _integer(section.get("N", 1), "schedule.N")
    if n < 1:
        raise ConfigError(f"schedule.N must be >= 1, got {n}")
    if "self" not in section:
        raise ConfigError("schedule.self is required")

    self_g = _parse_profile_list(section["self"], n, "schedule.self")
    phase = _parse_profile_list(section["phase"], n, "schedule.phase") if "phase" in section else None

    cross = None
    if "cross" in section:
        rows = section["cross"]
        if not isinstance(rows, list) or len(rows) != n:
            raise ConfigError(f"schedule.cross must be a {n}x{n} matrix of step profiles")
        cross = [_parse_profile_list(row, n, f"schedule.cross[{i}]") for i, row in enumerate(rows)]
        for i in range(n):
            if not cross[i][i].is_zero:
                raise ConfigError(f"schedule.cross[{i}][{i}] must be zero")
            # Diagonal smoothing is irrelevant; normalize so the schedule invariants hold.
            cross[i][i] = ZERO
    return StepSchedule.build(self_g, cross, phase)


def parse_run_config(config: Optional[Dict[str, Any]], source: Optional[Path] = None) -> RunConfig:
    """
    Validate a run-config mapping and fill it from defaults

    Raises:
        ConfigError: Naming the dotted key of the first invalid or unknown entry
    """
    config = config or {}
    _check_keys(config, ("grid", "initial", "evolution", "detector", "schedule", "crit"), "config")

    grid = _merged(config, "grid", DEFAULT_GRID)
    initial = _merged(config, "initial", DEFAULT_INITIAL)
    evolution = _merged(config, "evolution", DEFAULT_EVOLUTION)
    absorber = _merged(evolution, "absorber", DEFAULT_ABSORBER)
    detector = _merged(config, "detector", DEFAULT_DETECTOR)
    crit = _merged(config, "crit", DEFAULT_CRIT)

    window: Optional[Tuple[float, float]] = None
    if detector["window"] is not None:
        raw = detector["window"]
        if not isinstance(raw, (list, tuple)) or len(raw) != 2:
            raise ConfigError(f"detector.window must be [t_start, t_end], got {raw!r}")
        window = (_number(raw[0], "detector.window[0]"), _number(raw[1], "detector.window[1]"))

    simulation = SimulationConfig(
        n_points=_integer(grid["n_points"], "grid.n_points"),
        length=_number(grid["L"], "grid.L"),
        z_min=_number(grid["z_min"], "grid.z_min"),
        n0=_number(initial["n0"], "initial.n0"),
        initial=str(initial["kind"]),
        evolution=EvolutionConfig(
            dt=_number(evolution["dt"], "evolution.dt"),
            t_final=_number(evolution["t_final"], "evolution.t_final"),
            record_stride=_integer(evolution["record_stride"], "evolution.record_stride"),
            line_stride=_integer(evolution["line_stride"], "evolution.line_stride"),
            absorber=AbsorberConfig(
                enabled=bool(absorber["enabled"]),
                width=_number(absorber["width"], "evolution.absorber.width"),
                strength=_number(absorber["strength"], "evolution.absorber.strength"),
            ),
        ),
        detector=DetectorConfig(
            z_d=_number(detector["z_d"], "detector.z_d"),
            depth_fraction=_number(detector["depth_fraction"], "detector.depth_fraction"),
            background_window=_number(detector["background_window"], "detector.background_window"),
            min_separation=_number(detector["min_separation"], "detector.min_separation"),
            window=window,
        ),
        crit=CritConstants(
            c_up=_number(crit["c_up"], "crit.c_up"),
            c_down=_number(crit["c_down"], "crit.c_down"),
        ),
    )
    # Grid validity is checked eagerly so a bad file fails at load time.
    simulation.make_grid()
    schedule = parse_schedule(config.get("schedule"))
    return RunConfig(simulation=simulation, schedule=schedule, source=source)


def load_run_config(path) -> RunConfig:
    """
    Load a YAML run-config file

    Args:
        path: Path to the YAML file

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: If the file is missing, not valid YAML or fails validation
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}")

    logger.debug(f"Loaded run config {path}")
    return parse_run_config(data, source=path)
