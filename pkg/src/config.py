"""
ABOUTME: Scenario configuration loaded from TOML with validated defaults
ABOUTME: Builds the domain objects for a scenario and records the effective settings
"""

import dataclasses
import difflib
import hashlib
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .baseline import CoverageConfig
from .errors import ConfigurationError
from .grid import ClassificationThresholds, GridGeometry
from .objectives import ObjectiveMode
from .optimizer import CmaesConfig, OptimizerMode
from .planner import PlannerConfig
from .sensor import SensorModel
from .trajectory import DynamicLimits, FlightEnvelope

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "IPP_OUTPUT_ROOT"


@dataclass(frozen=True)
class MapSection:
    width_m: float = 50.0
    height_m: float = 50.0
    resolution_m: float = 1.0
    weed_count: int = 120


@dataclass(frozen=True)
class SensorSection:
    half_angle_deg: float = 45.0
    accuracy_floor: float = 0.5
    accuracy_ceiling: float = 0.95
    h_min: float = 2.0
    h_max: float = 45.0


@dataclass(frozen=True)
class ThresholdsSection:
    delta_nw: float = 0.25
    delta_w: float = 0.75


@dataclass(frozen=True)
class EnvelopeSection:
    alt_min: float = 1.0
    alt_max: float = 45.0


@dataclass(frozen=True)
class LimitsSection:
    v_max: float = 5.0
    a_max: float = 3.0


@dataclass(frozen=True)
class PlannerSection:
    budget_s: float = 300.0
    horizon: int = 7
    objective_mode: str = "time_varying"
    optimizer_mode: str = "local"
    lattice_levels: int = 4
    start: Optional[List[float]] = None  # None: map centre at alt_max


@dataclass(frozen=True)
class CmaesSection:
    population_lambda: Optional[int] = None
    sigma0: float = 5.0
    max_evals: int = 1000
    f_tol: float = 1e-6
    x_tol: float = 1e-3
    budget_penalty: float = 1e3
    envelope_penalty: float = 1e3


@dataclass(frozen=True)
class BaselineSection:
    altitude_m: float = 8.66
    overlap_frac: float = 0.0
    direction: str = "along-x"


@dataclass(frozen=True)
class ExperimentSection:
    n_trials: int = 20
    base_seed: int = 1
    jobs: int = 1
    out_dir: str = "out"
    time_bin_s: float = 1.0
    write_events: bool = True


SECTIONS: Dict[str, type] = {
    "map": MapSection,
    "sensor": SensorSection,
    "thresholds": ThresholdsSection,
    "envelope": EnvelopeSection,
    "limits": LimitsSection,
    "planner": PlannerSection,
    "cmaes": CmaesSection,
    "baseline": BaselineSection,
    "experiment": ExperimentSection,
}

# experiment plumbing that never changes trial results
_DIGEST_EXCLUDED = {"experiment": {"jobs", "out_dir", "write_events"}}


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Complete scenario: map, sensor, planner and experiment settings.

    Defaults reproduce the reference field setup: a 50 x 50 m field with
    120 weeds, a 300 s budget, a horizon of 7 viewpoints, thresholds
    0.25 / 0.75, a 45 m ceiling and a lawnmower at 8.66 m.
    """
    name: str = "default"
    map: MapSection = field(default_factory=MapSection)
    sensor: SensorSection = field(default_factory=SensorSection)
    thresholds: ThresholdsSection = field(default_factory=ThresholdsSection)
    envelope: EnvelopeSection = field(default_factory=EnvelopeSection)
    limits: LimitsSection = field(default_factory=LimitsSection)
    planner: PlannerSection = field(default_factory=PlannerSection)
    cmaes: CmaesSection = field(default_factory=CmaesSection)
    baseline: BaselineSection = field(default_factory=BaselineSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    # Domain objects

    def geometry(self) -> GridGeometry:
        with _section("map"):
            return GridGeometry(
                width_m=self.map.width_m, height_m=self.map.height_m,
                resolution_m=self.map.resolution_m,
            )

    def sensor_model(self) -> SensorModel:
        with _section("sensor"):
            return SensorModel(
                half_angle_rad=math.radians(self.sensor.half_angle_deg),
                accuracy_floor=self.sensor.accuracy_floor,
                accuracy_ceiling=self.sensor.accuracy_ceiling,
                h_min=self.sensor.h_min,
                h_max=self.sensor.h_max,
            )

    def classification_thresholds(self) -> ClassificationThresholds:
        with _section("thresholds"):
            return ClassificationThresholds(self.thresholds.delta_nw, self.thresholds.delta_w)

    def flight_envelope(self) -> FlightEnvelope:
        geometry = self.geometry()
        with _section("envelope"):
            return FlightEnvelope(geometry, self.envelope.alt_min, self.envelope.alt_max)

    def dynamic_limits(self) -> DynamicLimits:
        with _section("limits"):
            return DynamicLimits(self.limits.v_max, self.limits.a_max)

    def cmaes_config(self) -> CmaesConfig:
        with _section("cmaes"):
            return CmaesConfig(
                population_lambda=self.cmaes.population_lambda,
                sigma0=self.cmaes.sigma0,
                max_evals=self.cmaes.max_evals,
                f_tol=self.cmaes.f_tol,
                x_tol=self.cmaes.x_tol,
                budget_penalty=self.cmaes.budget_penalty,
                envelope_penalty=self.cmaes.envelope_penalty,
            )

    def planner_config(self, seed: int = 0) -> PlannerConfig:
        thresholds = self.classification_thresholds()
        cmaes = self.cmaes_config()
        with _section("planner"):
            return PlannerConfig(
                horizon=self.planner.horizon,
                budget_s=self.planner.budget_s,
                objective_mode=_enum(ObjectiveMode, self.planner.objective_mode, "objective_mode"),
                optimizer_mode=_enum(OptimizerMode, self.planner.optimizer_mode, "optimizer_mode"),
                thresholds=thresholds,
                lattice_levels=self.planner.lattice_levels,
                cmaes=cmaes,
                rng_seed=seed,
            )

    def coverage_config(self) -> CoverageConfig:
        with _section("baseline"):
            return CoverageConfig(
                altitude_m=self.baseline.altitude_m,
                overlap_frac=self.baseline.overlap_frac,
                direction=self.baseline.direction,
            )

    def start_position(self) -> Tuple[float, float, float]:
        if self.planner.start is None:
            cx, cy = self.geometry().center
            return (cx, cy, float(self.envelope.alt_max))
        return tuple(float(c) for c in self.planner.start)

    def output_root(self) -> Path:
        return Path(os.environ.get(OUTPUT_ROOT_ENV) or self.experiment.out_dir)

    # Validation and serialisation

    def validate(self) -> "ScenarioConfig":
        """
        Build every domain object once so that invariant violations surface here.

        Raises:
            ConfigurationError: Naming the offending ``section.key``
        """
        geometry = self.geometry()
        self.sensor_model()
        envelope = self.flight_envelope()
        self.dynamic_limits()
        self.planner_config()
        coverage = self.coverage_config()
        with _section("map"):
            if self.map.weed_count < 0 or self.map.weed_count > geometry.cell_count:
                raise ConfigurationError(
                    f"{self.map.weed_count} weeds do not fit in {geometry.cell_count} cells",
                    key="weed_count",
                )
        if not envelope.alt_min <= coverage.altitude_m <= envelope.alt_max:
            raise ConfigurationError(
                f"{coverage.altitude_m} m is outside the envelope "
                f"[{envelope.alt_min}, {envelope.alt_max}]",
                key="baseline.altitude_m",
            )
        if self.planner.start is not None and len(self.planner.start) != 3:
            raise ConfigurationError("must be [x, y, z]", key="planner.start")
        if not envelope.contains(self.start_position()):
            raise ConfigurationError(
                f"{self.start_position()} is outside the flight envelope", key="planner.start"
            )
        exp = self.experiment
        if exp.n_trials < 1:
            raise ConfigurationError(f"must be >= 1, got {exp.n_trials}", key="experiment.n_trials")
        if exp.jobs < 1:
            raise ConfigurationError(f"must be >= 1, got {exp.jobs}", key="experiment.jobs")
        if not exp.time_bin_s > 0:
            raise ConfigurationError(
                f"must be > 0, got {exp.time_bin_s}", key="experiment.time_bin_s"
            )
        return self

    def to_dict(self) -> Dict[str, Any]:
        """Plain nested dict; ``None`` entries are left out because TOML has no null."""
        out: Dict[str, Any] = {"name": self.name}
        for section in SECTIONS:
            values = dataclasses.asdict(getattr(self, section))
            out[section] = {k: v for k, v in values.items() if v is not None}
        return out

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def digest(self) -> str:
        """Short sha256 of the settings that affect trial results."""
        data = self.to_dict()
        for section, keys in _DIGEST_EXCLUDED.items():
            data[section] = {k: v for k, v in data[section].items() if k not in keys}
        return hashlib.sha256(tomli_w.dumps(data).encode("utf-8")).hexdigest()[:12]

    def with_overrides(self, **sections: Dict[str, Any]) -> "ScenarioConfig":
        """
        Copy with some section values replaced, e.g. ``with_overrides(planner={"horizon": 5})``.

        Raises:
            ConfigurationError: If a section or key is unknown
        """
        changes: Dict[str, Any] = {}
        for section, values in sections.items():
            if section == "name":
                changes["name"] = values
                continue
            if section not in SECTIONS:
                raise ConfigurationError("unknown section", key=section)
            current = getattr(self, section)
            known = {f.name for f in dataclasses.fields(current)}
            for key in values:
                if key not in known:
                    raise ConfigurationError("unknown key", key=f"{section}.{key}")
            changes[section] = dataclasses.replace(current, **values)
        return dataclasses.replace(self, **changes)


class _section:
    """Prefix the key of any ConfigurationError raised inside with a section name."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if isinstance(exc_val, ConfigurationError) and exc_val.key and "." not in exc_val.key:
            message = str(exc_val)
            prefix = f"{exc_val.key}: "
            if message.startswith(prefix):
                message = message[len(prefix):]
            raise ConfigurationError(message, key=f"{self.name}.{exc_val.key}") from exc_val
        return False


def _enum(enum_cls, value: Any, key: str):
    try:
        return enum_cls(value)
    except ValueError:
        raise ConfigurationError(
            f"must be one of {[m.value for m in enum_cls]}, got {value!r}", key=key
        )


def _check_type(section: str, key: str, value: Any, default: Any, annotation: Any) -> Any:
    qualified = f"{section}.{key}"
    if isinstance(value, bool) and not isinstance(default, bool):
        raise ConfigurationError(f"expected a number or string, got {value!r}", key=qualified)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigurationError(f"expected true/false, got {value!r}", key=qualified)
    elif isinstance(default, int) or annotation == Optional[int]:
        if not isinstance(value, int):
            raise ConfigurationError(f"expected an integer, got {value!r}", key=qualified)
    elif isinstance(default, float):
        if not isinstance(value, (int, float)):
            raise ConfigurationError(f"expected a number, got {value!r}", key=qualified)
        value = float(value)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigurationError(f"expected a string, got {value!r}", key=qualified)
    elif annotation == Optional[List[float]]:
        if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            raise ConfigurationError(f"expected a list of numbers, got {value!r}", key=qualified)
        value = [float(v) for v in value]
    return value


def _warn_unknown(key: str, valid: List[str], where: str) -> None:
    close = difflib.get_close_matches(key, valid, n=1)
    hint = f"; did you mean '{close[0]}'?" if close else ""
    logger.warning("Unknown key '%s' in %s ignored%s", key, where, hint)


def config_from_dict(data: Dict[str, Any]) -> ScenarioConfig:
    """
    Build and validate a scenario from parsed TOML.

    Unknown sections and keys are ignored with a warning naming the
    closest valid key; missing keys take their defaults.

    Raises:
        ConfigurationError: On type errors or invariant violations
    """
    kwargs: Dict[str, Any] = {}
    for key, value in data.items():
        if key == "name":
            if not isinstance(value, str):
                raise ConfigurationError(f"expected a string, got {value!r}", key="name")
            kwargs["name"] = value
            continue
        if key not in SECTIONS:
            _warn_unknown(key, ["name", *SECTIONS], "scenario")
            continue
        if not isinstance(value, dict):
            raise ConfigurationError("expected a table", key=key)
        cls = SECTIONS[key]
        fields = {f.name: f for f in dataclasses.fields(cls)}
        defaults = cls()
        values: Dict[str, Any] = {}
        for name, raw in value.items():
            if name not in fields:
                _warn_unknown(name, list(fields), f"[{key}]")
                continue
            values[name] = _check_type(key, name, raw, getattr(defaults, name), fields[name].type)
        kwargs[key] = cls(**values)
    return ScenarioConfig(**kwargs).validate()


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    """
    Load and validate a scenario file.

    Args:
        path: TOML file; an empty file gives the default scenario

    Returns:
        Validated ScenarioConfig

    Raises:
        ConfigurationError: If the file is missing, does not parse or fails validation

    Example:
        >>> cfg = load_config("scenarios/default.toml")
        >>> cfg.planner.horizon
        7
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}", key="config")
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"{path}: {e}", key="config") from e
    cfg = config_from_dict(data)
    logger.debug("Loaded scenario '%s' from %s (digest %s)", cfg.name, path, cfg.digest())
    return cfg
