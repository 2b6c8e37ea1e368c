# fraclab/core/result.py
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, TypedDict

import numpy as np


class ExperimentContext(TypedDict):
    """Runtime context passed to every experiment runner."""

    config: dict[str, Any]
    output_dir: Path
    rng: np.random.Generator


class Severity(Enum):
    """
    Severity levels for messages attached to an experiment result.

    Provides a mapping between severity levels and their corresponding
    logger method names.
    """

    DEBUG = "debug"
    HINT = "hint"
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"

    def log_method(self) -> str:
        if self in (Severity.INFO, Severity.HINT):
            return "info"
        return self.value


@dataclass
class Check:
    """One acceptance-tagged assertion: ``value <comparison> threshold``."""

    name: str
    value: float
    threshold: float
    comparison: str = "<"
    passed: bool = False

    @classmethod
    def evaluate(cls, name: str, value: float, threshold: float, comparison: str = "<") -> "Check":
        value = float(value)
        ops = {
            "<": value < threshold,
            "<=": value <= threshold,
            ">": value > threshold,
            ">=": value >= threshold,
            "==": value == threshold,
        }
        if comparison not in ops:
            raise ValueError(f"Unknown comparison '{comparison}'")
        return cls(name, value, float(threshold), comparison, bool(ops[comparison] and np.isfinite(value)))

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "value": self.value,
            "threshold": self.threshold,
            "comparison": self.comparison,
            "passed": self.passed,
        }


@dataclass
class PlotPanel:
    """One gnuplot panel drawn from a CSV artifact."""

    title: str
    csv_name: str
    x_column: int
    y_column: int
    logscale: str = ""
    label: str = ""
    where: str = ""
    extra: list[tuple[int, str]] = field(default_factory=list)


@dataclass
class ExperimentResult:
    name: str
    success: bool = True
    messages: list[tuple[Severity, str]] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)
    metrics: dict[str, float] = field(default_factory=dict)
    tolerances: dict[str, float] = field(default_factory=dict)
    details: dict[str, Any] = field(default_factory=dict)
    artifacts: list[Path] = field(default_factory=list)
    plots: list[PlotPanel] = field(default_factory=list)

    def check(self, name: str, value: float, threshold: float, comparison: str = "<") -> Check:
        result = Check.evaluate(name, value, threshold, comparison)
        self.checks.append(result)
        if not result.passed:
            self.success = False
            self.messages.append(
                (
                    Severity.ERROR,
                    f"{name}: {result.value:.6g} {comparison} {threshold:.6g} failed",
                )
            )
        return result

    def metric(self, name: str, value: float, rel_tol: float = 1e-9) -> None:
        self.metrics[name] = float(value)
        self.tolerances[name] = rel_tol

    def note(self, severity: Severity, message: str) -> None:
        self.messages.append((severity, message))

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "success": self.success,
            "messages": [(sev.value, msg) for sev, msg in self.messages],
            "checks": [c.as_dict() for c in self.checks],
            "metrics": dict(sorted(self.metrics.items())),
            "tolerances": dict(sorted(self.tolerances.items())),
            "details": self.details,
        }

    def __str__(self) -> str:
        status = "PASS" if self.success else "FAIL"
        passed = sum(c.passed for c in self.checks)
        return f"[{status}] {self.name}: {passed}/{len(self.checks)} checks passed"
