# fraclab/numerics/excitation.py
"""
Boundary excitation schedules: smooth time profiles with disjoint transitions, each paired
with a spatial boundary profile on Gamma_in.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

import numpy as np
from scipy.integrate import quad, quad_vec

from fraclab.core.config import ScheduleSpec
from fraclab.core.errors import ParameterError
from fraclab.core.io import write_csv
from fraclab.core.logger import LoggerProxy
from fraclab.numerics.domain import SIDE_GEOMETRY, GridDomain

log = LoggerProxy(__name__)

ProfileKind = Literal["step", "bump"]


def _edge(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)


def unit_step(x: Any) -> np.ndarray:
    """C-infinity transition from 0 (x <= 0) to 1 (x >= 1)."""
    x = np.asarray(x, dtype=float)
    left, right = _edge(x), _edge(1.0 - x)
    return left / (left + right)


def unit_step_derivative(x: Any) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    xs = np.where(inside, x, 0.5)
    left, right = _edge(xs), _edge(1.0 - xs)
    value = (left * right * (1.0 / xs**2 + 1.0 / (1.0 - xs) ** 2)) / (left + right) ** 2
    return np.where(inside, value, 0.0)


def _raw_bump(x: np.ndarray) -> np.ndarray:
    inside = (x > 0) & (x < 1)
    xs = np.where(inside, x, 0.5)
    return np.where(inside, np.exp(-1.0 / (xs * (1.0 - xs))), 0.0)


@functools.lru_cache(maxsize=1)
def bump_mass() -> float:
    """Integral of exp(-1/(x(1-x))) over (0, 1), about 0.00703."""
    mass, _ = quad(lambda x: float(_raw_bump(np.asarray(x))), 0.0, 1.0, epsabs=0.0, epsrel=1e-13)
    return mass


def unit_bump(x: Any) -> np.ndarray:
    """Unit-mass C-infinity bump supported on [0, 1]."""
    return _raw_bump(np.asarray(x, dtype=float)) / bump_mass()


def unit_bump_derivative(x: Any) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    xs = np.where(inside, x, 0.5)
    slope = (1.0 - 2.0 * xs) / (xs * (1.0 - xs)) ** 2
    return np.where(inside, _raw_bump(xs) * slope, 0.0) / bump_mass()


@functools.lru_cache(maxsize=2)
def _unit_sup_norms(kind: ProfileKind) -> tuple[float, float, float, float]:
    """sup |f^(j)| for j = 0..3 of the unit profile, higher derivatives by differencing."""
    x = np.linspace(0.0, 1.0, 20001)
    if kind == "step":
        values, first = unit_step(x), unit_step_derivative(x)
    else:
        values, first = unit_bump(x), unit_bump_derivative(x)
    second = np.gradient(first, x)
    third = np.gradient(second, x)
    return tuple(float(np.abs(v).max()) for v in (values, first, second, third))  # type: ignore[return-value]


@dataclass(frozen=True)
class SmoothProfile:
    """
    A step rising from 0 to ``level`` over [start, end], or a bump of total mass ``level``
    supported on [start, end].
    """

    start: float
    end: float
    level: float = 1.0
    kind: ProfileKind = "step"

    def __post_init__(self) -> None:
        if not (math.isfinite(self.start) and math.isfinite(self.end)) or self.end <= self.start:
            raise ParameterError(f"profile needs start < end, got [{self.start}, {self.end}]")
        if self.kind not in ("step", "bump"):
            raise ParameterError(f"unknown profile kind '{self.kind}'")

    @property
    def width(self) -> float:
        return self.end - self.start

    def value(self, t: Any) -> np.ndarray:
        x = (np.asarray(t, dtype=float) - self.start) / self.width
        if self.kind == "step":
            return self.level * unit_step(x)
        return self.level * unit_bump(x) / self.width

    def derivative(self, t: Any) -> np.ndarray:
        x = (np.asarray(t, dtype=float) - self.start) / self.width
        if self.kind == "step":
            return self.level * unit_step_derivative(x) / self.width
        return self.level * unit_bump_derivative(x) / self.width**2

    def final_value(self) -> float:
        return self.level if self.kind == "step" else 0.0

    def w3_norm(self) -> float:
        """Sum of sup-norms of the profile and its first three derivatives."""
        shift = 0 if self.kind == "step" else 1
        sups = _unit_sup_norms(self.kind)
        return abs(self.level) * sum(s / self.width ** (j + shift) for j, s in enumerate(sups))

    def to_json(self) -> dict[str, Any]:
        return {"kind": self.kind, "start": self.start, "end": self.end, "level": self.level}


def profile_laplace(profile: SmoothProfile, p: Any) -> Any:
    """Exact Laplace transform: quadrature over the transition plus the closed-form plateau tail."""
    p_arr = np.atleast_1d(np.asarray(p, dtype=float))
    if np.any(p_arr <= 0):
        raise ParameterError("Laplace variable p must be positive")
    body, _ = quad_vec(
        lambda t: np.exp(-p_arr * t) * profile.value(t),
        profile.start,
        profile.end,
        epsabs=0.0,
        epsrel=1e-13,
    )
    tail = profile.final_value() * np.exp(-p_arr * profile.end) / p_arr
    values = body + tail
    return values.item() if np.ndim(p) == 0 else values


def source_pulse(start: float, end: float, mass: float = 1.0) -> SmoothProfile:
    """Time profile sigma for source problems: a smooth pulse of the given mass."""
    return SmoothProfile(start, end, mass, "bump")


@dataclass(frozen=True, eq=False)
class ExcitationSchedule:
    """
    Staircase excitation sum_k d_k psi_k(t) chi(x) eta_k(x) on Gamma_in.

    ``step_times`` holds t_0 = tau1 < t_1 < ... < t_{2K} < tau2; the k-th transition occupies
    [t_{2k-2}, t_{2k-1}] and the component is constant afterwards.
    """

    tau1: float
    tau2: float
    step_times: np.ndarray
    profiles: tuple[SmoothProfile, ...]
    weights: np.ndarray
    chi: np.ndarray
    eta: np.ndarray
    gamma_in: np.ndarray

    @property
    def components(self) -> int:
        return len(self.profiles)

    @property
    def plateaus(self) -> np.ndarray:
        return np.array([p.final_value() for p in self.profiles])

    @property
    def gamma_in_star(self) -> np.ndarray:
        return self.gamma_in[self.chi[self.gamma_in] >= 1.0 - 1e-12]

    def _component(self, k: int) -> SmoothProfile:
        if not 1 <= k <= self.components:
            raise ParameterError(f"component {k} outside 1..{self.components}")
        return self.profiles[k - 1]

    def smooth_step(self, k: int, t: Any) -> np.ndarray:
        """psi_k(t)."""
        return self._component(k).value(t)

    def spatial(self, k: int) -> np.ndarray:
        """Nodal boundary data d_k chi eta_k of component k (zero off Gamma_in)."""
        self._component(k)
        return self.weights[k - 1] * self.chi * self.eta[k - 1]

    def boundary_data(self, t: Any) -> np.ndarray:
        """Nodal Dirichlet data g(t), shape (len(t), n_nodes)."""
        times = np.atleast_1d(np.asarray(t, dtype=float))
        data = np.zeros((times.size, self.chi.size))
        for k in range(1, self.components + 1):
            data += self.smooth_step(k, times)[:, None] * self.spatial(k)[None, :]
        return data

    def boundary_laplace(self, p: float, components: list[int] | None = None) -> np.ndarray:
        data = np.zeros(self.chi.size)
        for k in components or range(1, self.components + 1):
            data += profile_laplace(self._component(k), p) * self.spatial(k)
        return data

    def window_of(self, k: int) -> tuple[float, float]:
        """Time window on which components 1..k are the only ones that have acted."""
        if not 0 <= k <= self.components:
            raise IndexError(f"window index {k} outside 0..{self.components}")
        return 0.0, float(self.step_times[2 * k])

    def to_json(self) -> dict[str, Any]:
        return {
            "tau1": self.tau1,
            "tau2": self.tau2,
            "step_times": self.step_times.tolist(),
            "weights": self.weights.tolist(),
            "profiles": [p.to_json() for p in self.profiles],
            "gamma_in_nodes": int(self.gamma_in.size),
            "gamma_in_star_nodes": int(self.gamma_in_star.size),
        }

    def write_csv(self, path: Path, times: np.ndarray) -> Path:
        rows = (
            (t, k, value)
            for k in range(1, self.components + 1)
            for t, value in zip(times, self.smooth_step(k, times))
        )
        return write_csv(path, ["time", "k", "value"], rows)


def _side_coordinate(domain: GridDomain, nodes: np.ndarray, side: str) -> np.ndarray:
    """Position along a side scaled to (0, 1)."""
    axis, _ = SIDE_GEOMETRY[side]
    along = 1 - axis
    return domain.coordinates()[nodes, along] / domain.length


def build_schedule(domain: GridDomain, spec: ScheduleSpec) -> ExcitationSchedule:
    """
    Materialize the staircase: t_k = tau2 - (tau2 - tau1) 2^-k, a unit-mass bump for the first
    component (c_1 = 0), smooth steps to c_k afterwards, and weights
    d_k = 2^-k / (1 + ||psi_k||_{W^3,inf}).

    Raises:
        ParameterError: a nonzero first plateau (specs built without validation).
    """
    count = spec.components
    # the first component is a bump with no plateau, so plateaus[0] must be 0
    if spec.plateaus and spec.plateaus[0] != 0.0:
        raise ParameterError(f"the first plateau must be 0, got {spec.plateaus[0]}")
    k = np.arange(2 * count + 1)
    step_times = spec.tau2 - (spec.tau2 - spec.tau1) * 2.0 ** (-k.astype(float))
    plateaus = list(spec.plateaus) + [1.0] * (count - len(spec.plateaus))
    profiles = [SmoothProfile(step_times[0], step_times[1], 1.0, "bump")]
    for j in range(2, count + 1):
        profiles.append(SmoothProfile(step_times[2 * j - 2], step_times[2 * j - 1], plateaus[j - 1], "step"))
    weights = np.array([2.0 ** (-j) / (1.0 + p.w3_norm()) for j, p in enumerate(profiles, start=1)])

    n = domain.n_nodes
    chi = np.zeros(n)
    eta = np.zeros((count, n))
    for side in domain.gamma_in_sides:
        nodes = domain.side_nodes(side)
        if domain.dim == 1:
            chi[nodes] = 1.0
            eta[:, nodes] = 1.0
            continue
        s = _side_coordinate(domain, nodes, side)
        margin = (1.0 - spec.chi_plateau) / 2.0
        chi[nodes] = unit_step(s / margin) * unit_step((1.0 - s) / margin) if margin > 0 else 1.0
        eta[0, nodes] = np.sin(math.pi * s)
        for j in range(1, count):
            eta[j, nodes] = np.cos(j * math.pi * s)

    for j in range(count):
        norm = math.sqrt(domain.face_measure * float((eta[j] ** 2).sum()))
        if norm == 0.0:
            raise ParameterError(f"boundary profile eta_{j + 1} vanishes on Gamma_in")
        eta[j] /= norm
    lead = chi * eta[0]
    if not (np.all(lead >= 0) or np.all(lead <= 0)) or not lead.any():
        raise ParameterError("chi * eta_1 must be of one sign and not identically zero")

    schedule = ExcitationSchedule(
        tau1=spec.tau1,
        tau2=spec.tau2,
        step_times=step_times,
        profiles=tuple(profiles),
        weights=weights,
        chi=chi,
        eta=eta,
        gamma_in=domain.gamma_in,
    )
    log.debug("Schedule with %d components, step times %s", count, np.round(step_times, 6).tolist())
    return schedule
