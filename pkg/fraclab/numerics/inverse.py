# fraclab/numerics/inverse.py
"""
Recovery procedures driven by boundary flux data.

Each procedure returns a small frozen report with ``to_json``; :class:`InverseReport` bundles
whichever of them an experiment produced.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np
from scipy.linalg import qr
from scipy.optimize import least_squares
from scipy.sparse.linalg import spsolve
from scipy.special import gamma

from fraclab.core.config import CoefficientSpec, DomainSpec, ObstacleSpec, ScheduleSpec
from fraclab.core.errors import (
    DomainConstructionError,
    InsufficientSignalError,
    ParameterError,
    PreconditionError,
)
from fraclab.core.io import write_csv, write_json
from fraclab.core.logger import LoggerProxy
from fraclab.numerics.domain import DiscreteOperator, assemble, build_domain, coefficient_field
from fraclab.numerics.excitation import ExcitationSchedule, SmoothProfile, build_schedule, profile_laplace
from fraclab.numerics.laplace import LaplaceSamples, dtn_apply, p1_threshold
from fraclab.numerics.mlf import ml_decay
from fraclab.numerics.spectral import SpectralDecomposition, TimeTrace, duhamel
from fraclab.numerics.stepper import caputo_l1

log = LoggerProxy(__name__)

MIN_FIT_POINTS = 8
ROUNDOFF_FLOOR = 1e-13
CI_Z = 1.96
INVERSE_REPORT_NAME = "inverse_report.json"
MAX_SPECTRAL_MODES = 5
POLE_CLUSTER = 1e-2
MAX_CONDITION = 1e8

Split = Literal["iv", "v", "vi"]


def _json_array(values: np.ndarray | None) -> Any:
    return None if values is None else np.asarray(values).tolist()


# ---------------------------------------------------------------------------
# Order of the time derivative
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AlphaEstimate:
    alpha: float
    interval: tuple[float, float]
    amplitude: float
    slope_alpha: float
    branch: Literal["power-law", "exponential"]
    aic: dict[str, float]
    residual: float
    window: tuple[float, float]
    node: int
    points: int
    decay_rate: float | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "alpha_hat": self.alpha,
            "confidence_interval": list(self.interval),
            "amplitude": self.amplitude,
            "log_log_alpha": self.slope_alpha,
            "branch": self.branch,
            "aic": self.aic,
            "fit_residual": self.residual,
            "window": list(self.window),
            "node": self.node,
            "points": self.points,
            "decay_rate": self.decay_rate,
        }


def _aic(rss: float, n: int, params: int) -> float:
    return n * math.log(max(rss / n, 1e-300)) + 2.0 * params


def _suggest_horizon(times: np.ndarray, values: np.ndarray, start: float, floor: float) -> float | None:
    """Last time after ``start`` up to which the flux stays above ten times the floor."""
    after = times >= start
    strong = np.abs(values[after]) > 10.0 * floor
    if not strong.size or not strong[0]:
        return None
    cut = np.flatnonzero(~strong)
    last = cut[0] - 1 if cut.size else strong.size - 1
    return float(times[after][last])


def _remainder_fit(x: np.ndarray, y: np.ndarray, alpha0: float, log_amp0: float) -> tuple[np.ndarray, float, float]:
    """log|v| = log A - (1 + alpha) log t + log|1 + b t^-alpha|; returns (theta, rss, alpha std)."""

    def residuals(theta: np.ndarray) -> np.ndarray:
        log_amp, alpha, b = theta
        correction = np.log(np.abs(1.0 + b * np.exp(-alpha * x)) + 1e-300)
        return y - (log_amp - (1.0 + alpha) * x + correction)

    result = least_squares(
        residuals,
        x0=np.array([log_amp0, alpha0, 0.0]),
        bounds=([-np.inf, 1e-3, -np.inf], [np.inf, 1.999, np.inf]),
        xtol=1e-14,
        ftol=1e-14,
        gtol=1e-14,
    )
    rss = float(np.sum(result.fun**2))
    dof = max(x.size - 3, 1)
    cov = np.linalg.pinv(result.jac.T @ result.jac) * rss / dof
    return result.x, rss, float(math.sqrt(max(cov[1, 1], 0.0)))


def recover_alpha(
    trace: TimeTrace,
    fit_window: tuple[float, float],
    node: int | None = None,
    noise_floor: float = 0.0,
    origin: float = 0.0,
    tau2: float | None = None,
    correct_remainder: bool = True,
) -> AlphaEstimate:
    """
    Order of the derivative from the late-time flux after a compactly supported input.

    The flux decays like -t^(-1-alpha) / Gamma(-alpha) * amplitude for alpha != 1 and
    exponentially for alpha = 1. A log-log regression and a log-linear regression compete by
    AIC; the exponential branch reports alpha = 1 and amplitude 0. The power-law branch is
    refined with the first remainder term, A t^(-1-alpha) (1 + b t^(-alpha)). Times are measured
    from ``origin`` (the centroid of the input pulse is a good choice).

    Raises:
        ParameterError: empty or inverted window, or fewer than 8 samples in it.
        InsufficientSignalError: the flux drops to the noise floor or changes sign on the window.
    """
    t_lo, t_hi = fit_window
    if not 0.0 <= origin < t_lo < t_hi:
        raise ParameterError(f"fit window ({t_lo}, {t_hi}) must be increasing and after t={origin}")
    if tau2 is not None and t_lo < 10.0 * tau2:
        log.warning("Fit window starts at %.3g, before 10 * tau2 = %.3g; remainder bias likely", t_lo, 10.0 * tau2)
    node = int(trace.nodes[0]) if node is None else int(node)
    column = trace.column(node)
    mask = (trace.times >= t_lo) & (trace.times <= t_hi)
    t, v = trace.times[mask] - origin, column[mask]
    if t.size < MIN_FIT_POINTS:
        raise ParameterError(f"fit window holds {t.size} samples, need at least {MIN_FIT_POINTS}")

    floor = max(noise_floor, ROUNDOFF_FLOOR * float(np.abs(column).max()))
    if np.any(np.abs(v) <= floor) or not (np.all(v > 0) or np.all(v < 0)):
        suggestion = _suggest_horizon(trace.times, column, t_lo, floor)
        if suggestion is None:
            suggestion = _suggest_horizon(trace.times, column, float(trace.times[np.argmax(np.abs(column))]), floor)
        raise InsufficientSignalError(
            f"flux at node {node} falls below the noise floor {floor:.3e} on the fit window", suggestion
        )

    n = t.size
    sign = float(np.sign(v[0]))
    x, y = np.log(t), np.log(np.abs(v))
    (slope, intercept), cov = np.polyfit(x, y, 1, cov="unscaled")
    rss_pow = float(np.sum((y - (intercept + slope * x)) ** 2))
    rate, offset = np.polyfit(t, y, 1)
    rss_exp = float(np.sum((y - (offset + rate * t)) ** 2))
    aic = {"power_law": _aic(rss_pow, n, 2), "exponential": _aic(rss_exp, n, 2)}
    window = (float(t_lo), float(t_hi))

    if aic["exponential"] < aic["power_law"]:
        log.info("Exponential decay wins (AIC %.2f vs %.2f): alpha_hat = 1", aic["exponential"], aic["power_law"])
        return AlphaEstimate(
            alpha=1.0,
            interval=(1.0, 1.0),
            amplitude=0.0,
            slope_alpha=float(-slope - 1.0),
            branch="exponential",
            aic=aic,
            residual=math.sqrt(rss_exp / n),
            window=window,
            node=node,
            points=n,
            decay_rate=float(-rate),
        )

    alpha_ll = float(-slope - 1.0)
    alpha_hat, log_amp, residual = alpha_ll, float(intercept), math.sqrt(rss_pow / n)
    half = CI_Z * math.sqrt(max(cov[0, 0] * rss_pow / max(n - 2, 1), 0.0))
    if correct_remainder and rss_pow > 1e-24 * n and 0.0 < alpha_ll < 2.0:
        theta, rss, std = _remainder_fit(x, y, alpha_ll, float(intercept))
        if rss < rss_pow and abs(theta[1] - alpha_ll) < 0.25:
            log_amp, alpha_hat = float(theta[0]), float(theta[1])
            residual, half = math.sqrt(rss / n), CI_Z * std
        else:
            log.debug("Remainder refinement rejected (alpha %.4f vs log-log %.4f)", theta[1], alpha_ll)

    if not 0.0 < alpha_hat < 2.0:
        raise InsufficientSignalError(f"fitted order {alpha_hat:.4g} is outside (0, 2); the window is not asymptotic")
    amplitude = -float(gamma(-alpha_hat)) * sign * math.exp(log_amp)
    log.info("alpha_hat = %.5f +/- %.2e (log-log %.5f)", alpha_hat, half, alpha_ll)
    return AlphaEstimate(
        alpha=alpha_hat,
        interval=(alpha_hat - half, alpha_hat + half),
        amplitude=amplitude,
        slope_alpha=alpha_ll,
        branch="power-law",
        aic=aic,
        residual=residual,
        window=window,
        node=node,
        points=n,
    )


def elliptic_response(op: DiscreteOperator, boundary: np.ndarray) -> np.ndarray:
    """Nodal w = A^-1 G with G the elliptic lift of ``boundary`` and w = 0 on the boundary."""
    lifted = op.lift(boundary)
    interior = spsolve(op.system().tocsc(), op.mass @ op.gather(lifted))
    return op.scatter(np.atleast_1d(interior))


def predicted_amplitude(op: DiscreteOperator, schedule: ExcitationSchedule, nodes: np.ndarray | None = None) -> np.ndarray:
    """(int psi_1) * a d_nu w at the observation nodes, the late-time flux amplitude."""
    nodes = op.domain.gamma_out if nodes is None else np.asarray(nodes, dtype=int)
    w = elliptic_response(op, schedule.spatial(1))
    return schedule.profiles[0].level * op.flux_at(w, nodes)


@dataclass(frozen=True, eq=False)
class HopfReport:
    w: np.ndarray
    nodes: np.ndarray
    flux: np.ndarray
    interior_max: float
    boundary_min: float
    flipped: bool
    violations: dict[str, list[int]]

    @property
    def passed(self) -> bool:
        return not any(self.violations.values())

    def to_json(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "flipped": self.flipped,
            "interior_max": self.interior_max,
            "boundary_min": self.boundary_min,
            "violations": self.violations,
        }


def hopf_check(op: DiscreteOperator, schedule: ExcitationSchedule | np.ndarray) -> HopfReport:
    """
    Sign structure of w = A^-1 G for G the lift of a one-signed boundary datum.

    With chi eta_1 <= 0 (the datum is negated when it is nonnegative) w must be strictly
    negative at every interior fluid node and its flux strictly positive at every outer-boundary
    node. Violations are reported, not raised.

    Raises:
        ParameterError: the boundary datum is identically zero or of mixed sign.
    """
    if isinstance(schedule, ExcitationSchedule):
        boundary = schedule.chi * schedule.eta[0]
    else:
        boundary = np.asarray(schedule, dtype=float)
    if not np.any(boundary):
        raise ParameterError("identically zero input")
    if np.any(boundary > 0) and np.any(boundary < 0):
        raise ParameterError("boundary datum for the Hopf check must be of one sign")
    flipped = bool(np.any(boundary > 0))
    if flipped:
        boundary = -boundary

    domain = op.domain
    w = elliptic_response(op, boundary)
    nodes = domain.nodes_on(domain.sides)
    flux = op.flux_at(w, nodes)
    interior = w[op.unknowns]
    violations = {
        "interior": op.unknowns[interior >= 0].tolist(),
        "boundary": nodes[flux <= 0].tolist(),
    }
    report = HopfReport(w, nodes, flux, float(interior.max()), float(flux.min()), flipped, violations)
    if not report.passed:
        log.warning(
            "Hopf sign check failed at %d interior and %d boundary nodes; refine the grid",
            len(violations["interior"]),
            len(violations["boundary"]),
        )
    return report


# ---------------------------------------------------------------------------
# Spectral data from Laplace samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralFit:
    eigenvalues: np.ndarray
    residues: np.ndarray
    poles: np.ndarray
    pole_residues: np.ndarray
    constant: np.ndarray | None
    nodes: np.ndarray
    residual: float
    condition: float
    clusters: list[list[int]]
    starts: int

    @property
    def reliable(self) -> bool:
        return not any(min(c) < self.eigenvalues.size for c in self.clusters)

    def cross_ratio(self, k: int, j: int, first: int, second: int) -> float:
        """r_k(x1) r_j(x2) / (r_k(x2) r_j(x1)) for 0-based modes and observation columns."""
        r = self.residues
        return float(r[k, first] * r[j, second] / (r[k, second] * r[j, first]))

    def to_json(self) -> dict[str, Any]:
        clusters = [
            {
                "members": c,
                "mean": float(self.poles[c].mean()),
                "spread": float(self.poles[c].max() - self.poles[c].min()),
            }
            for c in self.clusters
        ]
        return {
            "lambda_hats": self.eigenvalues.tolist() if self.reliable else None,
            "residues": self.residues.tolist() if self.reliable else None,
            "all_poles": self.poles.tolist(),
            "constant": _json_array(self.constant),
            "nodes": self.nodes.tolist(),
            "fit_residual": self.residual,
            "condition": self.condition,
            "clusters": clusters,
            "starts": self.starts,
        }


def _pole_basis(s: np.ndarray, poles: np.ndarray, constant: bool) -> np.ndarray:
    basis = 1.0 / (s[:, None] + poles[None, :])
    if constant:
        basis = np.hstack([basis, np.ones((s.size, 1))])
    return basis


def _projected_residual(log_poles: np.ndarray, s: np.ndarray, data: np.ndarray, weights: np.ndarray, constant: bool) -> np.ndarray:
    """Data minus its orthogonal projection on the weighted pole basis."""
    basis = _pole_basis(s, np.exp(log_poles), constant) * weights[:, None]
    order = np.argsort(-np.abs(basis).max(axis=1))
    q, _, _ = qr(basis[order], mode="economic", pivoting=True)
    rhs = data[order]
    residual = np.empty_like(rhs)
    residual[order] = rhs - q @ (q.T @ rhs)
    return residual.ravel()


def _pole_starts(s: np.ndarray, count: int, starts: int) -> list[np.ndarray]:
    knots = s[np.linspace(0, s.size - 1, starts).round().astype(int)]
    upper = 4.0 * s[-1]
    return [np.geomspace(knot, max(upper, 50.0 * knot), count) for knot in knots]


def fit_spectral_data(
    samples: LaplaceSamples,
    alpha: float,
    n_modes: int = 3,
    profile: SmoothProfile | None = None,
    weight: float = 1.0,
    extra_poles: int = 3,
    constant: bool = True,
    starts: int = 6,
    max_workers: int | None = None,
) -> SpectralFit:
    """
    Poles and per-node residues of V(p, x) / (weight * psi_hat(p)) = sum_k r_k(x) / (p^alpha + lambda_k).

    Variable projection: the poles are the nonlinear unknowns (fitted in log scale, multi-start
    from knots of the s = p^alpha grid), residues and an optional constant term are linear and
    projected out. ``extra_poles`` absorb the truncated part of the series; the ``n_modes``
    smallest poles are reported. Poles closer than 1% are reported as clusters.

    Raises:
        ParameterError: n_modes outside 1..5, or psi_hat vanishing on the grid.
    """
    if not 1 <= n_modes <= MAX_SPECTRAL_MODES:
        raise ParameterError(f"n_modes must be in 1..{MAX_SPECTRAL_MODES}, got {n_modes}")
    p = np.asarray(samples.p_values, dtype=float)
    scale = profile_laplace(profile, p) * weight if profile is not None else np.full(p.size, weight)
    if np.any(~np.isfinite(scale)) or np.any(np.abs(scale) < 1e-300):
        raise ParameterError("input transform vanishes on the p grid; lower p_max")
    data = np.asarray(samples.values, dtype=float) / scale[:, None]
    s = p**alpha
    row_max = np.abs(data).max(axis=1)
    weights = 1.0 / np.where(row_max > 0, row_max, 1.0)
    weighted = data * weights[:, None]
    count = n_modes + extra_poles
    if s.size * data.shape[1] <= count + (1 if constant else 0):
        raise ParameterError("too few Laplace samples for the requested number of poles")

    lower, upper = math.log(s[0] * 1e-3), math.log(s[-1] * 1e4)

    def run(initial: np.ndarray) -> Any:
        return least_squares(
            _projected_residual,
            np.log(initial),
            args=(s, weighted, weights, constant),
            bounds=(lower, upper),
            xtol=1e-15,
            ftol=1e-15,
            gtol=1e-15,
            max_nfev=4000,
        )

    initials = _pole_starts(s, count, starts)
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        results = list(pool.map(run, initials))
    best = min(results, key=lambda r: r.cost)
    poles = np.sort(np.exp(best.x))

    basis = _pole_basis(s, poles, constant) * weights[:, None]
    coeffs, *_ = np.linalg.lstsq(basis, weighted, rcond=None)
    condition = float(np.linalg.cond(basis))
    residual = float(np.linalg.norm(basis @ coeffs - weighted) / max(np.linalg.norm(weighted), 1e-300))
    pole_residues = coeffs[:count]

    clusters: list[list[int]] = []
    for i in range(count - 1):
        if poles[i + 1] - poles[i] < POLE_CLUSTER * poles[i + 1]:
            if clusters and clusters[-1][-1] == i:
                clusters[-1].append(i + 1)
            else:
                clusters.append([i, i + 1])
    fit = SpectralFit(
        eigenvalues=poles[:n_modes],
        residues=pole_residues[:n_modes],
        poles=poles,
        pole_residues=pole_residues,
        constant=coeffs[count] if constant else None,
        nodes=np.asarray(samples.nodes),
        residual=residual,
        condition=condition,
        clusters=clusters,
        starts=len(initials),
    )
    if not fit.reliable:
        log.warning("Pole fit is ill-conditioned: clusters %s among the leading poles", clusters)
    log.info("Fitted poles %s (relative residual %.2e, condition %.2e)", np.round(poles[:n_modes], 6).tolist(), residual, condition)
    return fit


# ---------------------------------------------------------------------------
# Sources and initial values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SourceRecovery:
    split: str
    ic_modes: np.ndarray
    source_modes: np.ndarray
    modes_used: dict[str, int] = field(default_factory=dict)
    condition: dict[str, float] = field(default_factory=dict)
    residual: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "split": self.split,
            "ic_modes": self.ic_modes.tolist(),
            "source_modes": self.source_modes.tolist(),
            "modes_used": self.modes_used,
            "condition": self.condition,
            "fit_residual": self.residual,
        }


def _modal(values: np.ndarray | None, count: int) -> np.ndarray:
    out = np.zeros(count)
    if values is not None:
        values = np.asarray(values, dtype=float)[:count]
        out[: values.size] = values
    return out


def _truncated_lstsq(design: np.ndarray, data: np.ndarray, label: str, max_condition: float) -> tuple[np.ndarray, int, float, float]:
    """Least squares that drops trailing modes until the design is well conditioned."""
    count = design.shape[1]
    used = count
    condition = float(np.linalg.cond(design)) if np.any(design) else math.inf
    while used > 1 and condition > max_condition:
        used -= 1
        condition = float(np.linalg.cond(design[:, :used]))
    if used < count:
        log.warning("%s design condition exceeds %.0e; truncated to %d modes", label, max_condition, used)
    coeffs, *_ = np.linalg.lstsq(design[:, :used], data, rcond=None)
    out = np.zeros(count)
    out[:used] = coeffs
    norm = float(np.linalg.norm(data))
    residual = float(np.linalg.norm(design[:, :used] @ coeffs - data) / norm) if norm > 0 else 0.0
    return out, used, condition, residual


def _ic_design(alpha: float, eigenvalues: np.ndarray, traces: np.ndarray, times: np.ndarray) -> np.ndarray:
    decay = ml_decay(alpha, eigenvalues[None, :], times[:, None])
    return (decay[:, None, :] * traces[None, :, :]).reshape(-1, eigenvalues.size)


def _source_design(
    alpha: float, eigenvalues: np.ndarray, traces: np.ndarray, times: np.ndarray, sigma: SmoothProfile
) -> np.ndarray:
    unit = np.ones((1, eigenvalues.size))
    response = np.stack([duhamel(alpha, eigenvalues, [sigma], unit, t) for t in times])
    return (response[:, None, :] * traces[None, :, :]).reshape(-1, eigenvalues.size)


def recover_sources(
    trace: TimeTrace,
    dec: SpectralDecomposition,
    alpha: float,
    sigma: SmoothProfile | None = None,
    split: Split = "vi",
    tau0: float | None = None,
    n_modes: int = 5,
    known_ic: np.ndarray | None = None,
    known_source: np.ndarray | None = None,
    max_condition: float = MAX_CONDITION,
) -> SourceRecovery:
    """
    Modal coefficients <u0, phi_k>_rho and h^d phi_k^T f from a flux trace with known spectral data.

    ``split`` selects the unknowns: "iv" recovers the initial value with the source known
    (``known_source``, zero by default), "v" recovers the source with the initial value known
    (``known_ic``), and "vi" recovers both, using (0, tau0) where only the initial value acts
    and then (tau0, T) after subtracting it. ``tau0`` defaults to the start of sigma.

    Raises:
        ParameterError: unknown split, missing sigma where a source is fitted, or no samples
            before tau0 under "vi".
    """
    if split not in ("iv", "v", "vi"):
        raise ParameterError(f"unknown split '{split}'")
    count = min(n_modes, dec.count)
    lam = dec.eigenvalues[:count]
    traces = dec.traces_at(trace.nodes)[:, :count]
    times = trace.times
    data = trace.values.ravel()
    ic = _modal(known_ic, count)
    source = _modal(known_source, count)
    report: dict[str, dict[str, Any]] = {"modes_used": {}, "condition": {}, "residual": {}}

    def record(label: str, used: int, condition: float, residual: float) -> None:
        report["modes_used"][label] = used
        report["condition"][label] = condition
        report["residual"][label] = residual

    needs_source = split in ("v", "vi") or np.any(source)
    if needs_source and sigma is None:
        raise ParameterError(f"split '{split}' needs the source time profile sigma")

    if split == "iv":
        if np.any(source):
            data = data - _source_design(alpha, lam, traces, times, sigma) @ source
        ic, *stats = _truncated_lstsq(_ic_design(alpha, lam, traces, times), data, "initial-value", max_condition)
        record("ic", *stats)
    elif split == "v":
        if np.any(ic):
            data = data - _ic_design(alpha, lam, traces, times) @ ic
        source, *stats = _truncated_lstsq(_source_design(alpha, lam, traces, times, sigma), data, "source", max_condition)
        record("source", *stats)
    else:
        tau0 = sigma.start if tau0 is None else float(tau0)
        if sigma.start < tau0:
            raise PreconditionError(f"source starts at {sigma.start:g}, before tau0 = {tau0:g}")
        early = times < tau0
        if not np.any(early):
            raise ParameterError(f"trace has no samples before tau0 = {tau0:g}")
        width = trace.values.shape[1]
        early_rows = np.repeat(early, width)
        ic, *stats = _truncated_lstsq(
            _ic_design(alpha, lam, traces, times[early]), data[early_rows], "initial-value", max_condition
        )
        record("ic", *stats)
        late = ~early
        if np.any(late):
            rest = data[~early_rows] - _ic_design(alpha, lam, traces, times[late]) @ ic
            source, *stats = _truncated_lstsq(
                _source_design(alpha, lam, traces, times[late], sigma), rest, "source", max_condition
            )
            record("source", *stats)

    return SourceRecovery(split, ic, source, report["modes_used"], report["condition"], report["residual"])


def recover_source_laplace(
    samples: LaplaceSamples,
    dec: SpectralDecomposition,
    alpha: float,
    sigma: SmoothProfile,
    n_modes: int = 5,
    known_ic: np.ndarray | None = None,
    max_condition: float = MAX_CONDITION,
) -> SourceRecovery:
    """Source modes from Laplace samples: V(p, x) = sigma_hat(p) sum_k b_k a d_nu phi_k(x) / (p^alpha + lambda_k)."""
    count = min(n_modes, dec.count)
    lam = dec.eigenvalues[:count]
    traces = dec.traces_at(samples.nodes)[:, :count]
    p = np.asarray(samples.p_values, dtype=float)
    values = np.asarray(samples.values, dtype=float)
    ic = _modal(known_ic, count)
    resolvent = 1.0 / (p[:, None] ** alpha + lam[None, :])
    if np.any(ic):
        values = values - (p[:, None] ** (alpha - 1.0) * resolvent * ic[None, :]) @ traces.T
    sigma_hat = profile_laplace(sigma, p)
    if np.any(np.abs(sigma_hat) < 1e-300):
        raise ParameterError("source transform vanishes on the p grid; lower p_max")
    data = (values / sigma_hat[:, None]).ravel()
    design = (resolvent[:, None, :] * traces[None, :, :]).reshape(-1, count)
    source, used, condition, residual = _truncated_lstsq(design, data, "Laplace source", max_condition)
    return SourceRecovery("laplace", ic, source, {"source": used}, {"source": condition}, {"source": residual})


# ---------------------------------------------------------------------------
# Obstacle scanning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObstacleScan:
    candidates: list[dict[str, Any]]
    best: dict[str, Any] | None

    def to_json(self) -> dict[str, Any]:
        return {"best": self.best, "landscape": self.candidates}

    def write_csv(self, path: Path) -> Path:
        rows = (
            (
                *(c["center"] or [math.nan, math.nan]),
                *(c["half_width"] or [math.nan, math.nan]),
                c["objective"] if c["objective"] is not None else math.nan,
                c["note"],
            )
            for c in self.candidates
        )
        return write_csv(path, ["cx", "cy", "hx", "hy", "objective", "note"], rows)


def candidate_flux(
    domain_spec: DomainSpec,
    coefficients: CoefficientSpec,
    alpha: float,
    schedule_spec: ScheduleSpec,
    obstacle: ObstacleSpec | None,
    p: float = 1.0,
) -> LaplaceSamples:
    """a d_nu V(p) on Gamma_out for a domain carrying ``obstacle``, driven by psi_hat_1(p) d_1 chi eta_1."""
    spec = domain_spec.model_copy(update={"obstacle": obstacle})
    domain = build_domain(spec)
    op = assemble(domain, coefficient_field(domain, coefficients))
    schedule = build_schedule(domain, schedule_spec)
    flux = dtn_apply(op, alpha, p, schedule.boundary_laplace(p, [1]))
    return LaplaceSamples(np.array([p]), flux[None, :], domain.gamma_out, np.zeros(1), p1_threshold(op, alpha), "exact")


def translated_candidates(half_width: Sequence[float], xs: Sequence[float], ys: Sequence[float]) -> list[ObstacleSpec]:
    return [ObstacleSpec(center=[float(x), float(y)], half_width=list(half_width)) for x in xs for y in ys]


def obstacle_scan(
    domain_spec: DomainSpec,
    coefficients: CoefficientSpec,
    alpha: float,
    schedule_spec: ScheduleSpec,
    truth: LaplaceSamples,
    candidates: Sequence[ObstacleSpec | None],
    max_workers: int | None = None,
) -> ObstacleScan:
    """
    Exhaustive scan: each candidate obstacle is scored by face_measure * sum |flux - truth|^2
    on Gamma_out at the truth's (single) p. Candidates that do not yield a valid domain are
    kept in the landscape with a note and no objective.
    """
    if domain_spec.dim != 2:
        raise ParameterError("obstacle scans need a 2D domain")
    p = float(truth.p_values[0])
    face = build_domain(domain_spec.model_copy(update={"obstacle": None})).face_measure
    target = np.asarray(truth.values[0], dtype=float)

    def score(candidate: ObstacleSpec | None) -> dict[str, Any]:
        entry: dict[str, Any] = {
            "center": list(candidate.center) if candidate else None,
            "half_width": list(candidate.half_width) if candidate else None,
            "objective": None,
            "note": "empty" if candidate is None else "",
        }
        try:
            flux = candidate_flux(domain_spec, coefficients, alpha, schedule_spec, candidate, p)
        except DomainConstructionError as exc:
            entry["note"] = f"skipped: {exc}"
            log.info("Skipping obstacle candidate %s: %s", entry["center"], exc)
            return entry
        if flux.values.shape[1] != target.size:
            entry["note"] = "skipped: observation nodes differ from the truth"
            return entry
        entry["objective"] = float(face * np.sum((flux.values[0] - target) ** 2))
        return entry

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        landscape = list(pool.map(score, candidates))
    scored = [c for c in landscape if c["objective"] is not None]
    best = min(scored, key=lambda c: c["objective"]) if scored else None
    if best is not None:
        log.info("Obstacle scan: %d/%d candidates scored, best %s (%.3e)", len(scored), len(landscape), best["center"], best["objective"])
    return ObstacleScan(landscape, best)


# ---------------------------------------------------------------------------
# Dirichlet-to-Neumann comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DtnComparison:
    p_values: np.ndarray
    per_probe: np.ndarray
    reference: np.ndarray

    @property
    def discrepancy(self) -> np.ndarray:
        return self.per_probe.max(axis=1)

    def to_json(self) -> dict[str, Any]:
        return {
            "p": self.p_values.tolist(),
            "max_discrepancy": self.discrepancy.tolist(),
            "reference_norm": self.reference.tolist(),
        }

    def write_csv(self, path: Path) -> Path:
        rows = (
            (p, j, self.per_probe[i, j])
            for i, p in enumerate(self.p_values)
            for j in range(self.per_probe.shape[1])
        )
        return write_csv(path, ["p", "probe", "discrepancy"], rows)


def schedule_probes(schedule: ExcitationSchedule) -> list[np.ndarray]:
    """Boundary data chi eta_k, one probe per schedule component."""
    return [schedule.chi * schedule.eta[k] for k in range(schedule.components)]


def dtn_compare(
    op_a: DiscreteOperator,
    op_b: DiscreteOperator,
    alpha: float,
    p_grid: Sequence[float],
    probes: Sequence[np.ndarray],
    observe: np.ndarray | None = None,
) -> DtnComparison:
    """
    Per-p discrepancy sqrt(face_measure * sum |N_A(p) h - N_B(p) h|^2) on Gamma_out for each probe h.

    Raises:
        PreconditionError: a drift operator is probed at p at or below its coercivity threshold.
    """
    p_values = np.asarray(p_grid, dtype=float)
    if not probes:
        raise ParameterError("dtn_compare needs at least one probe")
    threshold = max(p1_threshold(op_a, alpha), p1_threshold(op_b, alpha))
    if (op_a.has_drift or op_b.has_drift) and np.any(p_values <= threshold):
        raise PreconditionError(f"p grid reaches {p_values.min():g}, at or below the drift threshold p1={threshold:.4g}")
    face = op_a.domain.face_measure
    per_probe = np.zeros((p_values.size, len(probes)))
    reference = np.zeros(p_values.size)
    for i, p in enumerate(p_values):
        for j, probe in enumerate(probes):
            flux_a = dtn_apply(op_a, alpha, p, probe, observe)
            flux_b = dtn_apply(op_b, alpha, p, probe, observe)
            per_probe[i, j] = math.sqrt(face * float(np.sum((flux_a - flux_b) ** 2)))
            reference[i] = max(reference[i], math.sqrt(face * float(np.sum(flux_a**2))))
    log.debug("DtN comparison over %d p values and %d probes", p_values.size, len(probes))
    return DtnComparison(p_values, per_probe, reference)


# ---------------------------------------------------------------------------
# Late-window rigidity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowVerdict:
    verdict: Literal["distinguished", "matched"]
    window: tuple[float, float]
    alpha: float
    window_norm: float
    caputo_norm: float
    peak: float
    tolerance: float
    envelope: float | None = None
    within_envelope: bool | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict,
            "window": list(self.window),
            "alpha": self.alpha,
            "window_norm": self.window_norm,
            "caputo_norm": self.caputo_norm,
            "relative_window_norm": self.window_norm / self.peak if self.peak else 0.0,
            "peak": self.peak,
            "tolerance": self.tolerance,
            "envelope": self.envelope,
            "within_envelope": self.within_envelope,
        }


def window_rigidity_experiment(
    trace_a: TimeTrace,
    trace_b: TimeTrace,
    window: tuple[float, float],
    alpha: float,
    input_end: float,
    tolerance: float = 1e-6,
    lam1: float | None = None,
) -> WindowVerdict:
    """
    Compare two flux traces on a late window: the sup of their difference and of its L1 Caputo
    derivative (memory taken from t = 0, where both traces vanish). Either exceeding
    ``tolerance * peak`` distinguishes them. For alpha = 1 and known lambda_1 the window norm is
    also compared with the envelope 10 * peak * exp(-lambda_1 (T0 - delta - input_end)).

    Raises:
        PreconditionError: the window starts before the inputs have ended.
    """
    start, end = window
    if start <= input_end:
        raise PreconditionError(f"window ({start:g}, {end:g}) overlaps the input support ending at {input_end:g}")
    diff = trace_a.combine(trace_b, -1.0)
    times, values = diff.times, diff.values
    if times[0] > 0:
        times = np.concatenate([[0.0], times])
        values = np.vstack([np.zeros((1, values.shape[1])), values])
    caputo = caputo_l1(times, values, alpha)
    if caputo.shape[0] < diff.times.size:
        caputo = np.vstack([np.zeros((1, values.shape[1])), caputo])
    inside = (diff.times >= start) & (diff.times <= end)
    if not np.any(inside):
        raise ParameterError(f"no samples in window ({start:g}, {end:g})")
    window_norm = float(np.abs(diff.values[inside]).max())
    caputo_norm = float(np.abs(caputo[inside]).max())
    peak = float(max(np.abs(trace_a.values).max(), np.abs(trace_b.values).max()))
    scale = peak if peak > 0 else 1.0
    verdict = "distinguished" if max(window_norm, caputo_norm) > tolerance * scale else "matched"

    envelope = within = None
    if alpha == 1.0 and lam1 is not None:
        envelope = 10.0 * scale * math.exp(-lam1 * (start - input_end))
        within = window_norm <= envelope
    log.info("Window (%g, %g): %s (norm %.3e, Caputo %.3e, peak %.3e)", start, end, verdict, window_norm, caputo_norm, peak)
    return WindowVerdict(verdict, (float(start), float(end)), alpha, window_norm, caputo_norm, peak, tolerance, envelope, within)


# ---------------------------------------------------------------------------
# Aggregate report
# ---------------------------------------------------------------------------


@dataclass
class InverseReport:
    alpha: AlphaEstimate | None = None
    spectral: SpectralFit | None = None
    sources: SourceRecovery | None = None
    obstacle: ObstacleScan | None = None
    dtn: DtnComparison | None = None
    window: WindowVerdict | None = None
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for name in ("alpha", "spectral", "sources", "obstacle", "dtn", "window"):
            part = getattr(self, name)
            if part is not None:
                out[name] = part.to_json()
        out["diagnostics"] = self.diagnostics
        return out

    def write_json(self, path: Path) -> Path:
        return write_json(path, self.to_json())
