# fraclab/numerics/laplace.py
"""
Laplace-domain side of the lab: transforms of sampled traces, resolvent solves
(K + D + p^alpha M) V = C g_hat + s_hat + p^(alpha-1) M u0, the per-mode contour realization of
the solution operator, and the weak-solution residual that ties time and Laplace domains together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import mpmath
import numpy as np
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import spsolve
from scipy.special import gamma, gammainc

from fraclab.core.errors import ParameterError, PreconditionError, SolverError, TailRiskError
from fraclab.core.io import write_csv
from fraclab.core.logger import LoggerProxy
from fraclab.numerics.domain import DiscreteOperator
from fraclab.numerics.excitation import ExcitationSchedule, SmoothProfile, profile_laplace
from fraclab.numerics.mlf import GAUSS_ORDER, check_alpha, contour_distance, sector_contour
from fraclab.numerics.spectral import TimeTrace

log = LoggerProxy(__name__)

TAIL_THRESHOLD = 1e-12
TAIL_WINDOW = 0.2
RESOLVENT_RESIDUAL = 1e-9
CONTOUR_CUTOFF = -math.log(1e-16)
DELTA_RETRIES = (1.0, 0.5, 2.0, 0.25, 4.0)
POLE_CLEARANCE = 0.2


@dataclass(frozen=True, eq=False)
class LaplaceSamples:
    p_values: np.ndarray
    values: np.ndarray
    nodes: np.ndarray
    certificates: np.ndarray = field(default_factory=lambda: np.zeros(0))
    p0: float = 0.0
    tail_model: str = "none"

    def __post_init__(self) -> None:
        p = np.asarray(self.p_values, dtype=float)
        if p.ndim != 1 or np.any(p <= 0) or np.any(np.diff(p) <= 0):
            raise ParameterError("p values must be positive and strictly increasing")
        if self.values.shape != (p.size, np.asarray(self.nodes).size):
            raise ParameterError(f"Laplace values have shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise SolverError("Laplace samples contain non-finite values")
        if np.any(p < self.p0):
            log.warning("Laplace samples include p below the admissible threshold p0=%.4g", self.p0)

    def column(self, node: int) -> np.ndarray:
        hits = np.flatnonzero(np.asarray(self.nodes) == node)
        if not hits.size:
            raise IndexError(f"node {node} is not sampled")
        return self.values[:, hits[0]]

    def write_csv(self, path: Path) -> Path:
        values = np.asarray(self.values, dtype=complex)
        rows = (
            (p, int(node), values[i, j].real, values[i, j].imag)
            for i, p in enumerate(self.p_values)
            for j, node in enumerate(self.nodes)
        )
        return write_csv(path, ["p", "node", "real", "imag"], rows)


# ---------------------------------------------------------------------------
# Transforms of sampled data
# ---------------------------------------------------------------------------


def _head_integral(times: np.ndarray, values: np.ndarray, p: float) -> np.ndarray:
    """int_0^{t_0} e^{-pt} v dt for v ~ v_0 (t/t_0)^gamma fitted to the first two samples."""
    t0, t1 = times[0], times[1]
    v0, v1 = values[0], values[1]
    same_sign = (v0 * v1 > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        exponent = np.where(same_sign, np.log(np.abs(v1 / np.where(v0 == 0, 1.0, v0))) / math.log(t1 / t0), 0.0)
    if np.any(exponent <= -1.0):
        raise ParameterError("trace is not integrable at t=0 (power-law exponent <= -1)")
    shape = exponent + 1.0
    integral = gamma(shape) * gammainc(shape, p * t0) / p**shape
    return v0 * integral / t0**exponent


def _power_tail(times: np.ndarray, values: np.ndarray, p: float) -> tuple[np.ndarray, np.ndarray]:
    """Tail beyond the horizon from a power-law fit to the last window; (tail, usable mask)."""
    start = int(times.size * (1.0 - TAIL_WINDOW))
    window_t = times[start:]
    window_v = values[start:]
    horizon = times[-1]
    tails = np.zeros(values.shape[1])
    usable = np.zeros(values.shape[1], dtype=bool)
    for j in range(values.shape[1]):
        column = window_v[:, j]
        if window_t.size < 3 or not (np.all(column > 0) or np.all(column < 0)):
            continue
        slope, intercept = np.polyfit(np.log(window_t), np.log(np.abs(column)), 1)
        decay = -slope
        amplitude = math.copysign(math.exp(intercept), column[-1])
        tail = float(mpmath.expint(decay, p * horizon)) * horizon ** (1.0 - decay)
        tails[j] = amplitude * tail
        usable[j] = True
    return tails, usable


def laplace_columns(
    times: np.ndarray,
    values: np.ndarray,
    p_values: np.ndarray,
    tail_threshold: float = TAIL_THRESHOLD,
    extend_tail: bool = False,
) -> tuple[np.ndarray, np.ndarray, str]:
    """
    Transform every column of ``values`` (shape (n_t, n_c)) at every p.

    Returns the transforms (n_p, n_c), the relative tail certificates e^{-pH} max|v| / max|V|
    and the tail model used.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if times.size < 4:
        raise ParameterError("at least 4 samples are needed for a spline transform")
    horizon = times[-1]
    peak = float(np.abs(values).max()) if values.size else 0.0
    log_time = times[0] > 0
    axis = np.log(times) if log_time else times

    out = np.zeros((p_values.size, values.shape[1]))
    certificates = np.zeros(p_values.size)
    tail_model = "none"
    for i, p in enumerate(p_values):
        weight = np.exp(-p * times)
        integrand = values * weight[:, None] * (times[:, None] if log_time else 1.0)
        spline = CubicSpline(axis, integrand, axis=0)
        out[i] = spline.integrate(axis[0], axis[-1])
        if log_time:
            out[i] += _head_integral(times, values, p)

        scale = float(np.abs(out[i]).max())
        certificate = math.exp(-p * horizon) * peak / scale if scale > 0 else 0.0
        certificates[i] = certificate
        if certificate <= tail_threshold:
            continue
        if extend_tail:
            tails, usable = _power_tail(times, values, p)
            if usable.all():
                out[i] += tails
                tail_model = "power-law"
                continue
        raise TailRiskError(float(p), certificate, tail_threshold)
    return out, certificates, tail_model


def transform(
    trace: TimeTrace,
    p_values: Any,
    tail_threshold: float = TAIL_THRESHOLD,
    extend_tail: bool = False,
    p0: float = 0.0,
) -> LaplaceSamples:
    """
    Laplace transform of a sampled flux trace by spline quadrature of e^{-pt} v(t).

    Raises:
        TailRiskError: e^{-pH} max|v| exceeds ``tail_threshold`` of the transform at some p and
            no power-law extension is available.
    """
    p_values = np.asarray(p_values, dtype=float)
    if np.any(p_values <= 0):
        raise ParameterError("Laplace variable p must be positive")
    values, certificates, model = laplace_columns(
        trace.times, trace.values, p_values, tail_threshold, extend_tail
    )
    return LaplaceSamples(p_values, values, np.asarray(trace.nodes), certificates, p0, model)


# ---------------------------------------------------------------------------
# Resolvent
# ---------------------------------------------------------------------------


def p1_threshold(op: DiscreteOperator, alpha: float) -> float:
    """Coercivity threshold rho_0^(-1/alpha) (||B||^2 + 1)^(1/alpha); zero without drift."""
    if not op.has_drift:
        return 0.0
    bounds = op.coeff.bounds(op.domain)
    return bounds["rho_min"] ** (-1.0 / alpha) * (bounds["drift_sup"] ** 2 + 1.0) ** (1.0 / alpha)


def resolvent_solve(
    op: DiscreteOperator,
    alpha: float,
    p: float,
    boundary: np.ndarray | None = None,
    source: np.ndarray | None = None,
    u0: np.ndarray | None = None,
) -> np.ndarray:
    """
    Nodal solution V of (K + D + p^alpha M) V_U = C g + s_U + p^(alpha-1) M u0_U with V = g on the
    outer boundary and zero on the obstacle.

    Raises:
        ParameterError: p <= 0.
        PreconditionError: drift present and p at or below the coercivity threshold.
        SolverError: the sparse solve misses the residual tolerance.
    """
    check_alpha(alpha)
    if p <= 0:
        raise ParameterError(f"Laplace variable p must be positive, got {p}")
    threshold = p1_threshold(op, alpha)
    if op.has_drift and p <= threshold:
        raise PreconditionError(f"p={p:g} is below the drift coercivity threshold p1={threshold:.4g}")
    n_nodes = op.domain.n_nodes
    boundary = np.zeros(n_nodes) if boundary is None else np.asarray(boundary, dtype=float)
    rhs = op.boundary_coupling @ boundary
    if source is not None:
        rhs = rhs + op.gather(np.asarray(source, dtype=float))
    if u0 is not None:
        rhs = rhs + p ** (alpha - 1.0) * (op.mass @ op.gather(np.asarray(u0, dtype=float)))
    matrix = (op.system() + p**alpha * op.mass).tocsc()
    interior = np.atleast_1d(spsolve(matrix, rhs))
    scale = float(np.abs(rhs).max())
    residual = float(np.abs(matrix @ interior - rhs).max())
    if residual > RESOLVENT_RESIDUAL * scale + 1e-300:
        raise SolverError(f"resolvent solve at p={p:g} failed", residual=residual / scale)
    return op.scatter(interior, boundary)


def dtn_apply(
    op: DiscreteOperator, alpha: float, p: float, boundary: np.ndarray, observe: np.ndarray | None = None
) -> np.ndarray:
    """Laplace-domain Dirichlet-to-Neumann map: flux of the resolvent solution at ``observe``."""
    nodes = op.domain.gamma_out if observe is None else observe
    return op.flux_at(resolvent_solve(op, alpha, p, boundary), nodes)


def resolvent_flux_samples(
    op: DiscreteOperator,
    alpha: float,
    p_values: Any,
    schedule: ExcitationSchedule | None = None,
    components: list[int] | None = None,
    sigma: SmoothProfile | None = None,
    f: np.ndarray | None = None,
    u0: np.ndarray | None = None,
    observe: np.ndarray | None = None,
) -> LaplaceSamples:
    """Exact discrete Laplace data of the flux trace, one resolvent solve per p."""
    p_values = np.asarray(p_values, dtype=float)
    nodes = op.domain.gamma_out if observe is None else np.asarray(observe, dtype=int)
    values = np.zeros((p_values.size, nodes.size))
    for i, p in enumerate(p_values):
        boundary = schedule.boundary_laplace(p, components) if schedule is not None else None
        source = profile_laplace(sigma, p) * f if sigma is not None and f is not None else None
        field_p = resolvent_solve(op, alpha, p, boundary, source, u0)
        values[i] = op.flux_at(field_p, nodes)
    return LaplaceSamples(p_values, values, nodes, np.zeros(p_values.size), p1_threshold(op, alpha), "exact")


# ---------------------------------------------------------------------------
# Contour realization of the per-mode solution operator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContourSpec:
    """Shifted sector contour r1 + gamma(delta, theta1); ``delta=None`` means 1/z."""

    theta1: float = 3.0 * math.pi / 4.0
    delta: float | None = None
    r1: float = 0.0
    order: int = GAUSS_ORDER

    def __post_init__(self) -> None:
        if not (math.pi / 2 < self.theta1 < math.pi):
            raise ParameterError(f"contour angle theta1={self.theta1} must lie in (pi/2, pi)")
        if self.delta is not None and not self.delta > 0:
            raise ParameterError("contour radius delta must be positive")
        if self.order < 2:
            raise ParameterError("contour quadrature needs at least 2 nodes per panel")


def _branch_points(alpha: float, lam: float, theta: float) -> tuple[list[complex], list[complex]]:
    """Zeros of lam + p^alpha: principal-sheet poles and all sheet images near the sector rays."""
    radius = lam ** (1.0 / alpha)
    reach = math.ceil(2.0 / alpha) + 2
    poles, images = [], []
    for k in range(-reach, reach + 1):
        angle = (math.pi + 2.0 * math.pi * k) / alpha
        if abs(angle) < math.pi + theta:
            images.append(radius * complex(math.cos(angle), math.sin(angle)))
        if abs(angle) < math.pi:
            poles.append(radius * complex(math.cos(angle), math.sin(angle)))
    return poles, images


def contour_kernel(spec: ContourSpec, alpha: float, lam: float, z: float) -> float:
    """
    (1/2 pi i) int e^{zp} / (lam + p^alpha) dp over the shifted sector contour, plus the residues of
    poles lying between the contour and the Bromwich line. Equals the relaxation kernel at z.

    The rays are cut where |e^{zp}| drops below 1e-16 of its value at the vertex. When a pole sits
    within 0.2 delta of the contour, delta is rescaled.
    """
    check_alpha(alpha)
    if not (lam > 0 and z > 0):
        raise ParameterError("contour kernel needs lam > 0 and z > 0")
    theta = spec.theta1
    base_delta = spec.delta if spec.delta is not None else 1.0 / z
    poles, images = _branch_points(alpha, lam, theta)
    shifted_poles = [p - spec.r1 for p in poles]
    shifted_images = [p - spec.r1 for p in images]

    for factor in DELTA_RETRIES:
        delta = base_delta * factor
        radius = delta + (CONTOUR_CUTOFF + z * delta) / (z * abs(math.cos(theta)))
        contour = sector_contour(
            delta, theta, radius, panel=1.0 / z, order=spec.order, singularities=shifted_images
        )
        if all(contour_distance(contour, p) > POLE_CLEARANCE * delta for p in shifted_poles):
            break
        log.debug("Pole within %.2f delta of the contour at delta=%g; rescaling", POLE_CLEARANCE, delta)

    nodes = spec.r1 + contour.nodes
    value = contour.integrate(np.exp(z * nodes) / (lam + nodes**alpha))
    for pole, shifted in zip(poles, shifted_poles):
        if abs(np.angle(shifted)) < theta and abs(shifted) > delta:
            value += np.exp(z * pole) / (alpha * pole ** (alpha - 1.0))
    return float(np.real(value))


# ---------------------------------------------------------------------------
# Weak-solution characterization
# ---------------------------------------------------------------------------


def weak_solution_residual(
    op: DiscreteOperator,
    alpha: float,
    trace: TimeTrace,
    p_values: Any,
    schedule: ExcitationSchedule | None = None,
    sigma: SmoothProfile | None = None,
    f: np.ndarray | None = None,
    u0: np.ndarray | None = None,
    tail_threshold: float = TAIL_THRESHOLD,
    extend_tail: bool = True,
) -> np.ndarray:
    """
    ||(K + D + p^alpha M) V(p) - rhs(p)|| / ||rhs(p)|| per p, with V the transform of the stored
    nodal history. A zero solution with zero data gives 0.

    Raises:
        ParameterError: the trace carries no nodal history.
        TailRiskError: propagated from the transform.
    """
    check_alpha(alpha)
    if trace.nodal is None:
        raise ParameterError("weak-solution residual needs the nodal solution history")
    p_values = np.asarray(p_values, dtype=float)
    interior = op.gather(trace.nodal)
    transformed, _, _ = laplace_columns(trace.times, interior, p_values, tail_threshold, extend_tail)
    system = op.system()
    residuals = np.zeros(p_values.size)
    for i, p in enumerate(p_values):
        rhs = np.zeros(op.size)
        if schedule is not None:
            rhs += op.boundary_coupling @ schedule.boundary_laplace(p)
        if sigma is not None and f is not None:
            rhs += profile_laplace(sigma, p) * op.gather(np.asarray(f, dtype=float))
        if u0 is not None:
            rhs += p ** (alpha - 1.0) * (op.mass @ op.gather(np.asarray(u0, dtype=float)))
        mismatch = system @ transformed[i] + p**alpha * (op.mass @ transformed[i]) - rhs
        numerator, denominator = np.linalg.norm(mismatch), np.linalg.norm(rhs)
        if denominator == 0.0:
            residuals[i] = 0.0 if numerator == 0.0 else math.inf
        else:
            residuals[i] = numerator / denominator
    return residuals
