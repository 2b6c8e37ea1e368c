# fraclab/experiments/shared/problem.py
"""Problem construction and small helpers shared by the experiment runners."""

from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from fraclab.core.config import CoefficientSpec, DomainSpec, ExperimentConfig, LaplaceSpec, ScheduleSpec, parse_model
from fraclab.core.logger import LoggerProxy
from fraclab.core.result import ExperimentContext, ExperimentResult
from fraclab.numerics.domain import CoefficientField, DiscreteOperator, GridDomain, assemble, build_domain, coefficient_field
from fraclab.numerics.excitation import ExcitationSchedule, SmoothProfile, build_schedule
from fraclab.numerics.spectral import TimeTrace

log = LoggerProxy(__name__)


@dataclass(frozen=True, eq=False)
class Problem:
    domain: GridDomain
    coeff: CoefficientField
    op: DiscreteOperator
    schedule: ExcitationSchedule


def typed_config(ctx: ExperimentContext) -> ExperimentConfig:
    return parse_model(ExperimentConfig, ctx["config"])


def param(config: ExperimentConfig, key: str, default: Any) -> Any:
    return config.params.get(key, default)


def build_problem(
    config: ExperimentConfig,
    domain_spec: DomainSpec | None = None,
    coefficients: CoefficientSpec | None = None,
    schedule_spec: ScheduleSpec | None = None,
) -> Problem:
    domain = build_domain(domain_spec or config.domain)
    coeff = coefficient_field(domain, coefficients or config.coefficients)
    op = assemble(domain, coeff)
    schedule = build_schedule(domain, schedule_spec or config.schedule)
    log.debug("Problem: %dD, %d unknowns, %d schedule components", domain.dim, op.size, schedule.components)
    return Problem(domain, coeff, op, schedule)


def square_domain(cells: int, obstacle: Any = None, gamma_out: list[str] | None = None) -> DomainSpec:
    """2D unit square driven from the left side."""
    return DomainSpec(
        dim=2,
        cells=[cells, cells],
        obstacle=obstacle,
        gamma_in=["left"],
        gamma_out=gamma_out or ["right"],
    )


def pulse_grid(profile: SmoothProfile, horizon: float, dense: int = 400, tail: int = 200) -> np.ndarray:
    """Uniform samples across the pulse followed by log-spaced samples up to the horizon."""
    across = np.linspace(profile.start, profile.end, dense)
    after = np.geomspace(profile.end, horizon, tail + 1)[1:]
    return np.concatenate([across, after])


def p_grid(spec: LaplaceSpec) -> np.ndarray:
    return np.geomspace(spec.p_min, spec.p_max, spec.p_count)


def with_noise(trace: TimeTrace, std: float, rng: np.random.Generator) -> TimeTrace:
    """Additive Gaussian noise with standard deviation ``std`` times the trace peak."""
    if std <= 0:
        return trace
    scale = std * float(np.abs(trace.values).max())
    noisy = trace.values + scale * rng.standard_normal(trace.values.shape)
    return TimeTrace(trace.times, noisy, trace.nodes, trace.nodal, {**trace.meta, "noise_std": std})


def relative_l2(value: np.ndarray, reference: np.ndarray) -> float:
    norm = float(np.linalg.norm(reference))
    gap = float(np.linalg.norm(np.asarray(value) - np.asarray(reference)))
    return gap / norm if norm > 0 else gap


def relative_max(value: np.ndarray, reference: np.ndarray) -> float:
    """max |value - reference| / max |reference|."""
    scale = float(np.abs(reference).max())
    gap = float(np.abs(np.asarray(value) - np.asarray(reference)).max())
    return gap / scale if scale > 0 else gap


def keep(result: ExperimentResult, path: Path) -> Path:
    result.artifacts.append(path)
    return path
