# fraclab/core/config.py

import copy
import json
import os
from importlib import resources
from pathlib import Path
from typing import Any, Literal

import jsonschema
from jsonschema import Draft7Validator
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from fraclab.core.errors import ConfigError
from fraclab.core.logger import LoggerProxy

log = LoggerProxy(__name__)

SCHEMA_NAME = "experiment.v1.schema.json"
OUTPUT_ROOT_ENV = "FRACLAB_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = Path("runs")


def load_schema() -> dict[str, Any]:
    try:
        schema_path = resources.files("fraclab.schema").joinpath(SCHEMA_NAME)
        with schema_path.open("r", encoding="utf-8") as f:
            schema: dict[str, Any] = json.load(f)
    except (json.JSONDecodeError, OSError) as e:
        raise RuntimeError(f"Cannot start without a valid configuration schema: {e}") from e
    return schema


SCHEMA = load_schema()

_default_properties = Draft7Validator.VALIDATORS["properties"]


def _set_defaults(validator, properties, instance, schema):
    """
    jsonschema hook: insert every missing property that declares a ``default``,
    then delegate to the stock ``properties`` validator so nested objects get theirs too.
    """
    if isinstance(instance, dict):
        for prop, subschema in properties.items():
            if "default" in subschema:
                instance.setdefault(prop, copy.deepcopy(subschema["default"]))
    yield from _default_properties(validator, properties, instance, schema)


_DefaultFillingValidator = jsonschema.validators.extend(Draft7Validator, {"properties": _set_defaults})


def _deep_update(base: dict[str, Any], updates: dict[str, Any]) -> None:
    """Recursively update ``base`` with ``updates`` (mutates base)."""
    for k, v in updates.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v


def _field_path(error: jsonschema.ValidationError) -> str:
    return ".".join(str(part) for part in error.absolute_path) or "<root>"


def _validate(document: dict[str, Any]) -> None:
    validator = Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(document), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        raise ConfigError(first.message, field_path=_field_path(first))


def fill_defaults(document: dict[str, Any]) -> dict[str, Any]:
    filled = copy.deepcopy(document)
    for _ in _DefaultFillingValidator(SCHEMA).iter_errors(filled):
        pass
    return filled


# ---------------------------------------------------------------------------
# Typed view of a validated document
# ---------------------------------------------------------------------------


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class BumpSpec(_Spec):
    center: list[float]
    width: float = Field(gt=0)
    height: float


class FieldSpec(_Spec):
    base: float = 1.0
    bumps: list[BumpSpec] = Field(default_factory=list)


class ObstacleSpec(_Spec):
    center: list[float]
    half_width: list[float]


class DomainSpec(_Spec):
    dim: Literal[1, 2] = 1
    cells: list[int] = Field(default_factory=lambda: [256])
    length: float = Field(default=1.0, gt=0)
    obstacle: ObstacleSpec | None = None
    gamma_in: list[str] = Field(default_factory=lambda: ["left"])
    gamma_out: list[str] = Field(default_factory=lambda: ["right"])

    @model_validator(mode="after")
    def _cells_match_dim(self) -> "DomainSpec":
        if len(self.cells) != self.dim:
            raise ValueError(f"cells must list {self.dim} extent(s), got {len(self.cells)}")
        if self.dim == 1 and any(s in ("bottom", "top") for s in self.gamma_in + self.gamma_out):
            raise ValueError("a 1D domain only has 'left' and 'right' sides")
        return self


class DriftSpec(_Spec):
    amplitude: float


class CoefficientSpec(_Spec):
    a: FieldSpec = Field(default_factory=FieldSpec)
    rho: FieldSpec = Field(default_factory=FieldSpec)
    q: FieldSpec = Field(default_factory=lambda: FieldSpec(base=0.0))
    drift: DriftSpec | None = None


class ScheduleSpec(_Spec):
    tau1: float = Field(default=0.5, gt=0)
    tau2: float = Field(default=1.0, gt=0)
    components: int = Field(default=1, ge=1)
    plateaus: list[float] = Field(default_factory=list)
    chi_plateau: float = Field(default=0.5, gt=0, le=1)

    @model_validator(mode="after")
    def _ordered(self) -> "ScheduleSpec":
        if self.tau2 <= self.tau1:
            raise ValueError(f"tau2 ({self.tau2}) must exceed tau1 ({self.tau1})")
        if len(self.plateaus) > self.components:
            raise ValueError("more plateau values than schedule components")
        if self.plateaus and self.plateaus[0] != 0.0:
            raise ValueError("the first plateau c_1 must be 0")
        return self


class SolverSpec(_Spec):
    alpha: float = Field(default=0.5, gt=0, lt=2)
    modes: int | None = None
    steps: int = Field(default=2048, ge=8)
    grading: float | None = None
    time_points: int = Field(default=200, ge=4)


class LaplaceSpec(_Spec):
    p_min: float = Field(default=0.25, gt=0)
    p_max: float = Field(default=64.0, gt=0)
    p_count: int = Field(default=40, ge=2)
    tail_threshold: float = Field(default=1e-12, gt=0)
    theta1: float = 3.0 * 3.141592653589793 / 4.0
    extend_tail: bool = True

    @model_validator(mode="after")
    def _p_range(self) -> "LaplaceSpec":
        if self.p_max <= self.p_min:
            raise ValueError("p_max must exceed p_min")
        if not (1.5707963267948966 < self.theta1 < 3.141592653589793):
            raise ValueError("theta1 must lie in (pi/2, pi)")
        return self


class NoiseSpec(_Spec):
    std: float = Field(default=0.0, ge=0)


class ExperimentConfig(_Spec):
    experiment: str
    seed: int = 20240611
    output_dir: str | None = None
    logging: dict[str, Any] = Field(default_factory=dict)
    domain: DomainSpec = Field(default_factory=DomainSpec)
    coefficients: CoefficientSpec = Field(default_factory=CoefficientSpec)
    schedule: ScheduleSpec = Field(default_factory=ScheduleSpec)
    solver: SolverSpec = Field(default_factory=SolverSpec)
    laplace: LaplaceSpec = Field(default_factory=LaplaceSpec)
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    params: dict[str, Any] = Field(default_factory=dict)


def parse_model(model: type[BaseModel], data: Any, prefix: str = "") -> Any:
    """Validate ``data`` into ``model``; pydantic failures become ConfigError with a field path."""
    try:
        return model.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(part) for part in first["loc"])
        path = ".".join(p for p in (prefix, loc) if p) or "<root>"
        raise ConfigError(first["msg"], field_path=path) from e


def resolve_config(document: dict[str, Any]) -> tuple[dict[str, Any], ExperimentConfig]:
    """
    Validate a user document, fill schema defaults, validate the merged document and
    parse it into the typed model. Returns the merged document and its typed view.
    """
    _validate(document)
    defaults = fill_defaults({"experiment": document["experiment"]})
    merged = copy.deepcopy(defaults)
    _deep_update(merged, document)
    merged = fill_defaults(merged)
    _validate(merged)
    return merged, parse_model(ExperimentConfig, merged)


def load_config(config_path: Path) -> tuple[dict[str, Any], ExperimentConfig]:
    """Load, validate and default-fill an experiment configuration file."""
    log.info("Loading experiment configuration from %s", config_path)
    if not config_path.is_file():
        raise ConfigError(f"configuration file not found: {config_path}")
    try:
        document = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    if not isinstance(document, dict):
        raise ConfigError("configuration must be a JSON object")
    merged, typed = resolve_config(document)
    log.info("Configuration for '%s' validated", typed.experiment)
    return merged, typed


def default_config(experiment: str) -> dict[str, Any]:
    merged, _ = resolve_config({"experiment": experiment})
    return merged


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, str(DEFAULT_OUTPUT_ROOT))).expanduser()


def resolve_output_dir(config: ExperimentConfig) -> Path:
    if config.output_dir:
        return Path(config.output_dir).expanduser()
    return output_root() / config.experiment
