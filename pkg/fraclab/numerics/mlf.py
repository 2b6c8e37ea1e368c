# fraclab/numerics/mlf.py
"""
Mittag-Leffler functions E_{b1,b2}(z) and the fractional relaxation kernels built on them.

Evaluation switches between three representations:

* the power series for |z| <= 10 when it converges without heavy cancellation,
* the large-|z| expansion (5 algebraic terms plus exponential pole terms) for |z| >= 50
  when the first omitted term is negligible,
* a Hankel-type integral over a sector contour with residue correction everywhere else.

Everything is vectorized over numpy arrays; real arguments give real results.
"""

from __future__ import annotations

import functools
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.polynomial.chebyshev import chebfit
from numpy.polynomial.legendre import leggauss
from scipy.special import gammaln, rgamma

from fraclab.core.errors import MittagLefflerOverflowError, ParameterError, SingularInputError
from fraclab.core.logger import LoggerProxy

log = LoggerProxy(__name__)

SERIES_RADIUS = 10.0
SERIES_TERMS = 256
SERIES_CANCELLATION = 1e4
ASYMPTOTIC_RADIUS = 50.0
ASYMPTOTIC_TERMS = 5
ASYMPTOTIC_TOLERANCE = 1e-11
OVERFLOW_EXPONENT = 700.0

GAUSS_ORDER = 16
RAY_PANEL = 1.0
ARC_PANEL = math.pi / 8
# |exp(p)| at the end of each ray, as a power of e
RAY_DECAY = 50.0
# candidate half-opening angles; the first one is preferred on ties
SECTOR_ANGLES = tuple(math.pi * f for f in (3 / 4, 11 / 16, 13 / 16, 5 / 8, 7 / 8))
_CHUNK = 256


@dataclass(frozen=True)
class MLParams:
    beta1: float
    beta2: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.beta1) and math.isfinite(self.beta2)):
            raise ParameterError("Mittag-Leffler indices must be finite")
        if self.beta1 <= 0 or self.beta2 <= 0:
            raise ParameterError(
                f"Mittag-Leffler indices must be positive, got beta1={self.beta1}, beta2={self.beta2}"
            )


@dataclass(frozen=True)
class KernelQuery:
    """One evaluation point of the relaxation kernel t^(a-1) E_{a,a}(-lam t^a)."""

    alpha: float
    lam: float
    t: float

    def __post_init__(self) -> None:
        check_alpha(self.alpha)
        if self.lam <= 0:
            raise ParameterError(f"kernel eigenvalue must be positive, got {self.lam}")
        if self.t < 0:
            raise ParameterError(f"kernel time must be nonnegative, got {self.t}")

    def value(self) -> float:
        return float(relaxation_kernel(self.alpha, self.lam, self.t))


def check_alpha(alpha: float) -> None:
    if not (0.0 < alpha < 2.0):
        raise ParameterError(f"fractional order must lie in (0, 2), got {alpha}")


# ---------------------------------------------------------------------------
# Sector contour quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SectorContour:
    """
    Gauss-Legendre nodes on the path {|p| = delta, |arg p| <= theta} joined to the rays
    arg p = +-theta, traversed from infinity below the real axis to infinity above it.
    ``weights`` already carry the 1/(2 pi i) factor, so ``f(nodes) @ weights`` is the
    contour integral of the inverse Laplace transform.
    """

    delta: float
    theta: float
    radius: float
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, values: np.ndarray) -> Any:
        return values @ self.weights


def _panel_rule(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(order)
    lo = edges[:-1, None]
    hi = edges[1:, None]
    half = (hi - lo) / 2.0
    return ((lo + hi) / 2.0 + half * x).ravel(), (half * w).ravel()


def _ray_distance(lo: np.ndarray, hi: np.ndarray, angle: float, point: complex) -> np.ndarray:
    rotated = point * np.exp(-1j * angle)
    nearest = np.clip(rotated.real, lo, hi)
    return np.abs(rotated - nearest)


def _arc_distance(lo: np.ndarray, hi: np.ndarray, delta: float, point: complex) -> np.ndarray:
    samples = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, 9)[None, :]
    return np.abs(point - delta * np.exp(1j * samples)).min(axis=1)


def _refine(edges: np.ndarray, too_wide) -> np.ndarray:
    for _ in range(60):
        split = too_wide(edges[:-1], edges[1:])
        if not split.any():
            break
        mids = 0.5 * (edges[:-1] + edges[1:])[split]
        edges = np.sort(np.concatenate([edges, mids]))
    return edges


def sector_contour(
    delta: float,
    theta: float,
    radius: float,
    panel: float = RAY_PANEL,
    order: int = GAUSS_ORDER,
    singularities: Sequence[complex] = (),
) -> SectorContour:
    """
    Build the quadrature for the sector path. Panels are split until each is no wider than
    its distance to any listed singularity of the integrand.
    """
    if not (math.pi / 2 < theta < math.pi):
        raise ParameterError(f"contour angle must lie in (pi/2, pi), got {theta}")
    if delta <= 0 or radius <= delta:
        raise ParameterError(f"invalid contour radii delta={delta}, radius={radius}")

    ray = [delta]
    while ray[-1] < radius:
        step = min(panel, ray[-1]) if ray[-1] < panel else panel
        ray.append(min(ray[-1] + step, radius))
    ray_edges = np.asarray(ray)
    arc_edges = np.linspace(-theta, theta, max(2, math.ceil(2 * theta / ARC_PANEL)) + 1)

    points = [complex(s) for s in singularities]
    if points:

        def ray_check(angle: float):
            def too_wide(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
                dist = np.min([_ray_distance(lo, hi, angle, s) for s in points], axis=0)
                return (hi - lo > dist) & (hi - lo > 1e-9 * radius)

            return too_wide

        def arc_check(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
            dist = np.min([_arc_distance(lo, hi, delta, s) for s in points], axis=0)
            return (delta * (hi - lo) > dist) & (hi - lo > 1e-9)

        upper_edges = _refine(ray_edges, ray_check(theta))
        lower_edges = _refine(ray_edges, ray_check(-theta))
        arc_edges = _refine(arc_edges, arc_check)
    else:
        upper_edges = lower_edges = ray_edges

    r_up, w_up = _panel_rule(upper_edges, order)
    r_lo, w_lo = _panel_rule(lower_edges, order)
    phi, w_arc = _panel_rule(arc_edges, order)

    up_dir = np.exp(1j * theta)
    lo_dir = np.exp(-1j * theta)
    arc_nodes = delta * np.exp(1j * phi)
    nodes = np.concatenate([(r_lo * lo_dir)[::-1], arc_nodes, r_up * up_dir])
    weights = np.concatenate([(-lo_dir * w_lo)[::-1], 1j * arc_nodes * w_arc, up_dir * w_up])
    return SectorContour(delta, theta, radius, nodes, weights / (2j * math.pi))


def contour_distance(contour: SectorContour, point: complex) -> float:
    """Distance from ``point`` to the path of ``contour``."""
    theta, delta, radius = contour.theta, contour.delta, contour.radius
    lo, hi = np.array([delta]), np.array([radius])
    arc = _arc_distance(np.array([-theta]), np.array([theta]), delta, point)
    return float(
        min(
            _ray_distance(lo, hi, theta, point)[0],
            _ray_distance(lo, hi, -theta, point)[0],
            arc[0],
        )
    )


# ---------------------------------------------------------------------------
# Mittag-Leffler evaluation
# ---------------------------------------------------------------------------


def _principal_poles(a: float, z: np.ndarray) -> list[np.ndarray]:
    """Solutions p of p**a == z on the principal sheet, one array per branch index."""
    modulus = np.abs(z) ** (1.0 / a)
    phase = np.angle(z)
    reach = math.ceil(a) + 1
    poles = []
    for j in range(-reach, reach + 1):
        arg = (phase + 2.0 * math.pi * j) / a
        inside = np.abs(arg) < math.pi
        poles.append(np.where(inside, modulus * np.exp(1j * arg), np.nan))
    return poles


def _pole_terms(
    a: float, b: float, z: np.ndarray, theta: np.ndarray | float, delta: np.ndarray | float
) -> np.ndarray:
    total = np.zeros(z.shape, dtype=complex)
    for p in _principal_poles(a, z):
        keep = np.isfinite(p) & (np.abs(np.angle(p)) < theta) & (np.abs(p) > delta)
        if keep.any():
            pk = p[keep]
            total[keep] += pk ** (1.0 - b) * np.exp(pk) / a
    return total


def _check_overflow(a: float, z: np.ndarray) -> None:
    worst = -np.inf
    for p in _principal_poles(a, z):
        if np.isfinite(p).any():
            worst = max(worst, float(np.nanmax(p.real)))
    if worst > OVERFLOW_EXPONENT:
        raise MittagLefflerOverflowError(
            f"Mittag-Leffler value overflows: exponential growth e^{worst:.1f} "
            f"exceeds e^{OVERFLOW_EXPONENT:.0f}"
        )


def _ml_series(a: float, b: float, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(SERIES_TERMS)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_terms = k[None, :] * np.log(np.abs(z))[:, None] - gammaln(a * k + b)[None, :]
    log_terms[:, 0] = -gammaln(b)
    terms = np.exp(log_terms) * np.exp(1j * k[None, :] * np.angle(z)[:, None])
    total = terms.sum(axis=1)
    magnitude = np.abs(terms)
    absolute = magnitude.sum(axis=1)
    converged = magnitude[:, -2:].max(axis=1) <= 1e-16 * absolute
    stable = absolute <= SERIES_CANCELLATION * np.abs(total)
    return total, converged & stable


def _ml_asymptotic(a: float, b: float, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(1, ASYMPTOTIC_TERMS + 3)
    terms = z[:, None] ** (-k[None, :]) * rgamma(b - a * k)[None, :]
    algebraic = -terms[:, :ASYMPTOTIC_TERMS].sum(axis=1)
    omitted = np.abs(terms[:, ASYMPTOTIC_TERMS:]).max(axis=1)
    total = algebraic + _pole_terms(a, b, z, math.pi, 0.0)
    return total, omitted <= ASYMPTOTIC_TOLERANCE * np.abs(total)


def _sector_angle(a: float, phase: float) -> float:
    """Opening angle keeping the integrand's singularities furthest from both rays."""
    best_angle, best_margin = SECTOR_ANGLES[0], -1.0
    reach = math.ceil(2.0 / a) + 2
    for theta in SECTOR_ANGLES:
        margin = math.pi / 2
        for j in range(-reach, reach + 1):
            base = (phase + 2.0 * math.pi * j) / a
            for offset in (base - theta, base + theta):
                if abs(offset) < math.pi:
                    margin = min(margin, abs(offset))
        if margin > best_margin + 1e-12:
            best_angle, best_margin = theta, margin
    return best_angle


def _arc_radius(a: float, modulus: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        shrunk = 2.0 ** np.floor(np.log2(np.maximum(modulus / 2.0, 1e-300) ** (1.0 / a)))
    return np.where(modulus >= 2.0, 1.0, np.maximum(shrunk, 2.0**-40))


def _ml_integral(a: float, b: float, z: np.ndarray) -> np.ndarray:
    out = np.empty(z.shape, dtype=complex)
    delta = _arc_radius(a, np.abs(z))
    phases, phase_index = np.unique(np.round(np.angle(z), 12), return_inverse=True)
    theta = np.array([_sector_angle(a, float(ph)) for ph in phases])[phase_index]
    keys, key_index = np.unique(np.stack([delta, theta], axis=1), axis=0, return_inverse=True)
    key_index = np.asarray(key_index).ravel()

    for group, (d, th) in enumerate(keys):
        members = np.flatnonzero(key_index == group)
        contour = sector_contour(d, th, d + RAY_DECAY / abs(math.cos(th)))
        p = contour.nodes
        p_a = p**a
        weighted = contour.weights * np.exp(p) * p ** (a - b)
        for start in range(0, members.size, _CHUNK):
            idx = members[start : start + _CHUNK]
            out[idx] = (weighted[None, :] / (p_a[None, :] - z[idx, None])).sum(axis=1)
        out[members] += _pole_terms(a, b, z[members], th, d)
    return out


def ml_eval(params: MLParams, z: Any) -> Any:
    """
    Evaluate E_{beta1,beta2}(z) elementwise.

    Args:
        params: Validated pair of positive indices.
        z: Scalar or array, real or complex.

    Returns:
        Same shape as ``z``; real when ``z`` is real.

    Raises:
        ParameterError: non-finite arguments.
        MittagLefflerOverflowError: the exponential part of the result exceeds e^700.
    """
    a, b = params.beta1, params.beta2
    z_arr = np.asarray(z)
    real_input = not np.iscomplexobj(z_arr)
    flat = z_arr.astype(complex).ravel()
    if not np.all(np.isfinite(flat)):
        raise ParameterError("Mittag-Leffler argument must be finite")
    _check_overflow(a, flat)

    out = np.empty(flat.shape, dtype=complex)
    if a == 1.0 and b == 1.0:
        out = np.exp(flat)
    elif a == 1.0 and b == 2.0:
        safe = np.where(flat == 0, 1.0, flat)
        out = np.where(flat == 0, 1.0, np.expm1(flat) / safe)
    else:
        pending = np.ones(flat.shape, dtype=bool)
        modulus = np.abs(flat)

        near = np.flatnonzero(modulus <= SERIES_RADIUS)
        if near.size:
            values, ok = _ml_series(a, b, flat[near])
            out[near[ok]] = values[ok]
            pending[near[ok]] = False

        far = np.flatnonzero(pending & (modulus >= ASYMPTOTIC_RADIUS))
        if far.size:
            values, ok = _ml_asymptotic(a, b, flat[far])
            out[far[ok]] = values[ok]
            pending[far[ok]] = False

        rest = np.flatnonzero(pending)
        if rest.size:
            out[rest] = _ml_integral(a, b, flat[rest])

    result = out.real if real_input else out
    result = result.reshape(z_arr.shape)
    return result.item() if result.ndim == 0 else result


def mittag_leffler(beta1: float, beta2: float, z: Any) -> Any:
    return ml_eval(MLParams(beta1, beta2), z)


# ---------------------------------------------------------------------------
# Tabulation on the negative real axis
# ---------------------------------------------------------------------------

TABLE_DECADES = (-12.0, 8.0)
TABLE_PANELS_PER_DECADE = 4
TABLE_DEGREE = 24


@dataclass(frozen=True, eq=False)
class NegativeAxisTable:
    """Piecewise Chebyshev interpolant of x -> E_{b1,b2}(-x) for x >= 0, panels uniform in log10 x."""

    params: MLParams
    lower: float
    upper: float
    per_decade: int
    coefficients: np.ndarray

    def __call__(self, x: Any) -> np.ndarray:
        x_arr = np.asarray(x, dtype=float)
        flat = x_arr.ravel()
        out = np.empty(flat.shape)
        with np.errstate(divide="ignore"):
            log_x = np.log10(flat)
        inside = (log_x >= self.lower) & (log_x <= self.upper)
        if not inside.all():
            out[~inside] = ml_eval(self.params, -flat[~inside])
        if inside.any():
            position = (log_x[inside] - self.lower) * self.per_decade
            panel = np.minimum(position.astype(int), self.coefficients.shape[1] - 1)
            u = 2.0 * (position - panel) - 1.0
            b1 = np.zeros(u.shape)
            b2 = np.zeros(u.shape)
            for k in range(self.coefficients.shape[0] - 1, 0, -1):
                b1, b2 = 2.0 * u * b1 - b2 + self.coefficients[k, panel], b1
            out[inside] = u * b1 - b2 + self.coefficients[0, panel]
        return out.reshape(x_arr.shape)


@functools.lru_cache(maxsize=32)
def negative_axis_table(beta1: float, beta2: float) -> NegativeAxisTable:
    """Build (once per index pair) the interpolant used by the bulk kernel evaluations."""
    params = MLParams(beta1, beta2)
    lower, upper = TABLE_DECADES
    n_panels = int(round((upper - lower) * TABLE_PANELS_PER_DECADE))
    nodes = np.cos(np.pi * (np.arange(TABLE_DEGREE + 1) + 0.5) / (TABLE_DEGREE + 1))
    left = lower + np.arange(n_panels) / TABLE_PANELS_PER_DECADE
    log_x = left[None, :] + (nodes[:, None] + 1.0) / (2.0 * TABLE_PANELS_PER_DECADE)
    values = ml_eval(params, -(10.0**log_x))
    coefficients = chebfit(nodes, values, TABLE_DEGREE)
    log.debug("Tabulated E_{%g,%g} on the negative axis with %d panels", beta1, beta2, n_panels)
    return NegativeAxisTable(params, lower, upper, TABLE_PANELS_PER_DECADE, coefficients)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


def _times(t: Any, allow_zero: bool = True) -> np.ndarray:
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or (not allow_zero and np.any(t_arr == 0)):
        raise ParameterError("times must be positive")
    return t_arr


def _eigenvalues(lam: Any) -> np.ndarray:
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr <= 0):
        raise ParameterError("eigenvalues must be positive")
    return lam_arr


def _scalar_or_array(value: np.ndarray) -> Any:
    value = np.asarray(value)
    return value.item() if value.ndim == 0 else value


def relaxation_kernel(alpha: float, lam: Any, t: Any) -> Any:
    """t^(alpha-1) E_{alpha,alpha}(-lam t^alpha), broadcasting ``lam`` against ``t``."""
    check_alpha(alpha)
    lam_arr, t_arr = np.broadcast_arrays(_eigenvalues(lam), _times(t))
    if alpha < 1.0 and np.any(t_arr == 0):
        raise SingularInputError("relaxation kernel is unbounded at t=0 when alpha < 1")
    if alpha == 1.0:
        return _scalar_or_array(np.exp(-lam_arr * t_arr))
    values = t_arr ** (alpha - 1.0) * mittag_leffler(alpha, alpha, -lam_arr * t_arr**alpha)
    return _scalar_or_array(values)


def step_response(alpha: float, lam: Any, t: Any) -> Any:
    """Integral of the relaxation kernel over (0, t): (1 - E_{alpha,1}(-lam t^alpha)) / lam."""
    check_alpha(alpha)
    lam_arr, t_arr = np.broadcast_arrays(_eigenvalues(lam), _times(t))
    if alpha == 1.0:
        return _scalar_or_array(-np.expm1(-lam_arr * t_arr) / lam_arr)
    powered = t_arr**alpha
    values = powered * negative_axis_table(alpha, alpha + 1.0)(lam_arr * powered)
    return _scalar_or_array(values)


def ml_decay(alpha: float, lam: Any, t: Any) -> Any:
    """E_{alpha,1}(-lam t^alpha): the free decay of a single mode from unit data."""
    check_alpha(alpha)
    lam_arr, t_arr = np.broadcast_arrays(np.asarray(lam, dtype=float), _times(t))
    if alpha == 1.0:
        return _scalar_or_array(np.exp(-lam_arr * t_arr))
    return _scalar_or_array(negative_axis_table(alpha, 1.0)(lam_arr * t_arr**alpha))


def kernel_laplace(alpha: float, lam: Any, p: Any) -> Any:
    """Closed-form Laplace transform 1/(p^alpha + lam) of the relaxation kernel."""
    check_alpha(alpha)
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr <= 0):
        raise ParameterError("Laplace variable p must be positive")
    return _scalar_or_array(1.0 / (p_arr**alpha + np.asarray(lam, dtype=float)))


def asymptotic_flux_model(alpha: float, amplitude: Any, t: Any) -> Any:
    """
    Leading large-time term -t^(-1-alpha) / Gamma(-alpha) * amplitude.

    alpha == 1 returns exactly zero (1/Gamma(-1) = 0).
    """
    check_alpha(alpha)
    t_arr = _times(t, allow_zero=False)
    amp = np.asarray(amplitude, dtype=float)
    if alpha == 1.0:
        return _scalar_or_array(np.zeros(np.broadcast(t_arr, amp).shape))
    return _scalar_or_array(-(t_arr ** (-1.0 - alpha)) * rgamma(-alpha) * amp)
