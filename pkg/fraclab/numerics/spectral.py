# fraclab/numerics/spectral.py
"""
Eigendecomposition of the self-adjoint discrete operator in the rho-weighted inner product and
the modal (Duhamel) forward solution built on it.

Modes are normalized so h^d phi^T M phi = 1. For boundary data g the modal forcing is
h^d phi^T C g, the discrete counterpart of -<g, a d_nu phi>.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np
from scipy.integrate import quad_vec
from scipy.linalg import eigh
from scipy.sparse.linalg import eigsh

from fraclab.core.errors import ParameterError, PreconditionError, SolverError, UnsupportedOperatorError
from fraclab.core.io import write_csv, write_json
from fraclab.core.logger import LoggerProxy
from fraclab.numerics.domain import DiscreteOperator
from fraclab.numerics.excitation import ExcitationSchedule, SmoothProfile
from fraclab.numerics.mlf import check_alpha, ml_decay, step_response

log = LoggerProxy(__name__)

DEFAULT_MODES_2D = 100
CLUSTER_TOLERANCE = 1e-8
RESIDUAL_TOLERANCE = 1e-8
TRUNCATION_WARNING = 1e-6
DUHAMEL_RTOL = 1e-11


@dataclass(frozen=True, eq=False)
class TimeTrace:
    """Flux observations per (time, observation node), optionally with the full nodal history."""

    times: np.ndarray
    values: np.ndarray
    nodes: np.ndarray
    nodal: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ParameterError("trace times must be a nonempty 1D array")
        if np.any(times < 0) or np.any(np.diff(times) <= 0):
            raise ParameterError("trace times must be nonnegative and strictly increasing")
        if self.values.shape != (times.size, np.asarray(self.nodes).size):
            raise ParameterError(
                f"trace values have shape {self.values.shape}, expected ({times.size}, {np.asarray(self.nodes).size})"
            )
        if not np.all(np.isfinite(self.values)):
            raise SolverError("trace contains non-finite values")

    def column(self, node: int) -> np.ndarray:
        hits = np.flatnonzero(np.asarray(self.nodes) == node)
        if not hits.size:
            raise IndexError(f"node {node} is not observed by this trace")
        return self.values[:, hits[0]]

    def restrict(self, start: float, end: float) -> TimeTrace:
        keep = (self.times > start) & (self.times < end)
        nodal = self.nodal[keep] if self.nodal is not None else None
        return TimeTrace(self.times[keep], self.values[keep], self.nodes, nodal, dict(self.meta))

    def combine(self, other: TimeTrace, scale: float = 1.0) -> TimeTrace:
        """self + scale * other on a shared time grid and node set."""
        if not (np.array_equal(self.times, other.times) and np.array_equal(self.nodes, other.nodes)):
            raise ParameterError("traces must share times and observation nodes to be combined")
        nodal = None
        if self.nodal is not None and other.nodal is not None:
            nodal = self.nodal + scale * other.nodal
        return TimeTrace(self.times, self.values + scale * other.values, self.nodes, nodal)

    def write_csv(self, path: Path) -> Path:
        rows = (
            (t, int(node), self.values[i, j])
            for i, t in enumerate(self.times)
            for j, node in enumerate(self.nodes)
        )
        return write_csv(path, ["time", "node", "value"], rows)


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    operator: DiscreteOperator
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    flux_traces: np.ndarray
    clusters: tuple[tuple[int, ...], ...]
    residual: float

    @property
    def count(self) -> int:
        return self.eigenvalues.size

    @property
    def complete(self) -> bool:
        return self.count == self.operator.size

    def nodal(self, index: int) -> np.ndarray:
        """Full nodal field of mode ``index`` (0-based), zero on Dirichlet nodes."""
        return self.operator.scatter(self.eigenvectors[:, index])

    def project(self, values: np.ndarray) -> np.ndarray:
        """<u, phi_k>_rho for a nodal field u."""
        interior = self.operator.gather(values)
        return self.operator.domain.cell_volume * (self.eigenvectors.T @ (self.operator.mass @ interior))

    def forcing(self, boundary: np.ndarray) -> np.ndarray:
        """Modal forcing h^d phi_k^T C g of nodal Dirichlet data g."""
        return self.eigenvectors.T @ self.operator.pairing(boundary)

    def source_modes(self, values: np.ndarray) -> np.ndarray:
        """h^d phi_k^T f for a nodal source profile f."""
        return self.operator.domain.cell_volume * (self.eigenvectors.T @ self.operator.gather(values))

    def traces_at(self, nodes: np.ndarray | None) -> np.ndarray:
        """a d_nu phi_k at the requested flux nodes, shape (len(nodes), m)."""
        if nodes is None:
            return self.flux_traces
        return self.flux_traces[self.operator.domain.flux_position(nodes)]

    def to_json(self) -> dict[str, Any]:
        return {
            "count": self.count,
            "eigenvalues": self.eigenvalues.tolist(),
            "clusters": [list(c) for c in self.clusters if len(c) > 1],
            "flux_nodes": self.operator.domain.flux_nodes.tolist(),
            "flux_traces": self.flux_traces.tolist(),
            "max_residual": self.residual,
        }

    def write_json(self, path: Path) -> Path:
        return write_json(path, self.to_json())


def cluster_eigenvalues(values: np.ndarray, tolerance: float = CLUSTER_TOLERANCE) -> tuple[tuple[int, ...], ...]:
    clusters: list[list[int]] = []
    for i, value in enumerate(values):
        if clusters and value - values[clusters[-1][-1]] <= tolerance * abs(value):
            clusters[-1].append(i)
        else:
            clusters.append([i])
    return tuple(tuple(c) for c in clusters)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make the first significant entry of every column positive."""
    scale = np.abs(vectors).max(axis=0)
    significant = np.abs(vectors) > 1e-8 * scale[None, :]
    first = significant.argmax(axis=0)
    signs = np.sign(vectors[first, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs[None, :]


def eigensolve(op: DiscreteOperator, modes: int | None = None) -> SpectralDecomposition:
    """
    Lowest generalized eigenpairs of (stiffness, mass).

    1D problems use a dense solver and keep every mode unless ``modes`` is given; 2D problems use
    shift-invert Lanczos for the lowest ``modes`` (default 100).

    Raises:
        UnsupportedOperatorError: the operator carries a drift term.
        ParameterError: more modes requested than unknowns.
        SolverError: eigen-residuals above tolerance or a non-positive leading eigenvalue.
    """
    if op.has_drift:
        raise UnsupportedOperatorError(
            "eigensolve needs a self-adjoint operator; drift problems are handled by the laplace module"
        )
    n = op.size
    if modes is not None and not 1 <= modes <= n:
        raise ParameterError(f"mode count {modes} outside 1..{n}")

    if op.domain.dim == 1 or (modes is not None and modes >= n - 1):
        values, vectors = eigh(op.stiffness.toarray(), op.mass.toarray())
        if modes is not None:
            values, vectors = values[:modes], vectors[:, :modes]
    else:
        count = min(modes or DEFAULT_MODES_2D, n - 2)
        values, vectors = eigsh(op.stiffness.tocsc(), k=count, M=op.mass.tocsc(), sigma=0.0, which="LM")
        order = np.argsort(values)
        values, vectors = values[order], vectors[:, order]

    h_d = op.domain.cell_volume
    norms = np.sqrt(h_d * np.einsum("ij,ij->j", vectors, op.mass @ vectors))
    vectors = _fix_signs(vectors / norms[None, :])

    if values[0] <= 0:
        raise SolverError(f"leading eigenvalue {values[0]:.3e} is not positive")
    mismatch = op.stiffness @ vectors - (op.mass @ vectors) * values[None, :]
    scale = np.abs(op.mass @ vectors).max(axis=0) * values
    residual = float((np.abs(mismatch).max(axis=0) / scale).max())
    if residual > RESIDUAL_TOLERANCE:
        raise SolverError("eigenpairs fail the residual check", residual=residual)

    flux_traces = np.asarray(op.flux @ op.scatter(vectors.T).T)
    clusters = cluster_eigenvalues(values)
    repeated = [c for c in clusters if len(c) > 1]
    if repeated:
        log.info("Eigenvalue clusters (relative tolerance %.0e): %s", CLUSTER_TOLERANCE, repeated)
    log.debug("Eigensolve: %d modes, lambda_1=%.6g, max residual %.2e", values.size, values[0], residual)
    return SpectralDecomposition(op, values, vectors, flux_traces, clusters, residual)


# ---------------------------------------------------------------------------
# Boundary-coupling diagnostics
# ---------------------------------------------------------------------------


def truncation_tail(dec: SpectralDecomposition, boundary: np.ndarray) -> tuple[float, float]:
    """
    Head and tail of sum_k |<g, a d_nu phi_k> / lambda_k|^2 split at the retained mode count.

    The full sum equals ||G||_rho^2 for the elliptic lift G, so the tail needs no extra eigenpairs.
    """
    op = dec.operator
    lifted = op.lift(boundary)
    total = op.inner(op.gather(lifted), op.gather(lifted))
    head = float(((dec.forcing(boundary) / dec.eigenvalues) ** 2).sum())
    tail = 0.0 if dec.complete else max(total - head, 0.0)
    return head, tail


def parseval_partial_sums(dec: SpectralDecomposition, boundary: np.ndarray) -> tuple[np.ndarray, float]:
    """Cumulative sums of |<g, a d_nu phi_k> / lambda_k|^2 and their limit ||G||_rho^2."""
    op = dec.operator
    lifted = op.gather(op.lift(boundary))
    return np.cumsum((dec.forcing(boundary) / dec.eigenvalues) ** 2), op.inner(lifted, lifted)


def coupling_identity_errors(dec: SpectralDecomposition, boundary: np.ndarray, count: int = 5) -> dict[str, Any]:
    """
    Compare <G, phi_k>_rho with -<g, a d_nu phi_k>/lambda_k for the leading modes. The discrete pairing
    is exact; the stencil pairing uses the one-sided flux traces and agrees to O(h^2).
    """
    op = dec.operator
    count = min(count, dec.count)
    projected = dec.project(op.lift(boundary))[:count]
    expected = dec.forcing(boundary)[:count] / dec.eigenvalues[:count]
    relative = np.abs(projected - expected) / np.maximum(np.abs(expected), 1e-300)

    nodes = op.domain.flux_nodes
    stencil = -op.domain.face_measure * (boundary[nodes] @ dec.flux_traces)[:count] / dec.eigenvalues[:count]
    stencil_gap = np.abs(stencil - expected) / np.maximum(np.abs(expected), 1e-300)
    return {
        "projected": projected.tolist(),
        "expected": expected.tolist(),
        "relative_error": relative.tolist(),
        "stencil_gap": stencil_gap.tolist(),
    }


# ---------------------------------------------------------------------------
# Forward solutions
# ---------------------------------------------------------------------------


def duhamel(
    alpha: float,
    eigenvalues: np.ndarray,
    profiles: Sequence[SmoothProfile],
    forcing: np.ndarray,
    t: float,
) -> np.ndarray:
    """
    sum_k forcing_k * int_0^t kernel(t - s) psi_k(s) ds for every mode at one time.

    Evaluated in the integrated-by-parts form int R(t - s) psi_k'(s) ds with the bounded step
    response R, which removes the kernel singularity at s = t.
    """
    active = [(i, p) for i, p in enumerate(profiles) if p.start < t]
    if not active:
        return np.zeros(eigenvalues.size)
    lower = min(p.start for _, p in active)
    upper = min(t, max(p.end for _, p in active))
    breaks = sorted({x for _, p in active for x in (p.start, p.end) if lower < x < upper})

    def integrand(s: float) -> np.ndarray:
        slope = sum(forcing[i] * float(p.derivative(s)) for i, p in active)
        return step_response(alpha, eigenvalues, t - s) * slope

    value, _ = quad_vec(
        integrand,
        lower,
        upper,
        epsabs=1e-16,
        epsrel=DUHAMEL_RTOL,
        norm="max",
        points=breaks or None,
        limit=2000,
    )
    return np.asarray(value)


def _check_times(times: Any) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(times < 0) or np.any(np.diff(times) <= 0):
        raise ParameterError("times must be a nonempty, nonnegative, strictly increasing grid")
    return times


def _assemble_trace(
    dec: SpectralDecomposition,
    times: np.ndarray,
    coefficients: np.ndarray,
    boundary: np.ndarray | None,
    observe: np.ndarray | None,
    keep_nodal: bool,
    meta: dict[str, Any],
) -> TimeTrace:
    op = dec.operator
    nodes = op.domain.gamma_out if observe is None else np.asarray(observe, dtype=int)
    values = coefficients @ dec.traces_at(nodes).T
    if boundary is not None:
        values = values + np.asarray(op.flux_rows(nodes) @ boundary.T).T
    nodal = op.scatter(coefficients @ dec.eigenvectors.T, boundary) if keep_nodal else None
    return TimeTrace(times, values, nodes, nodal, meta)


def forward_dirichlet(
    dec: SpectralDecomposition,
    schedule: ExcitationSchedule,
    alpha: float,
    times: Any,
    component: int | Literal["all"] = "all",
    observe: np.ndarray | None = None,
    keep_nodal: bool = False,
) -> TimeTrace:
    """
    Solution driven by the boundary excitation (zero source and initial data).

    ``component`` selects one schedule component k or all of them; in the latter case all
    transitions are integrated together, not summed per component.
    """
    check_alpha(alpha)
    times = _check_times(times)
    selected = list(range(1, schedule.components + 1)) if component == "all" else [int(component)]
    spatial = [schedule.spatial(k) for k in selected]
    profiles = [schedule.profiles[k - 1] for k in selected]
    forcing = np.stack([dec.forcing(g) for g in spatial])

    meta: dict[str, Any] = {"alpha": alpha, "component": component, "truncation": []}
    for k, g in zip(selected, spatial):
        head, tail = truncation_tail(dec, g)
        meta["truncation"].append({"component": k, "head": head, "tail": tail})
        if tail > TRUNCATION_WARNING * head:
            log.warning(
                "Mode truncation: boundary-coupling tail %.3e exceeds %.0e of the head %.3e for component %d",
                tail,
                TRUNCATION_WARNING,
                head,
                k,
            )

    coefficients = np.stack([duhamel(alpha, dec.eigenvalues, profiles, forcing, t) for t in times])
    boundary = np.zeros((times.size, dec.operator.domain.n_nodes))
    for profile, g in zip(profiles, spatial):
        boundary += profile.value(times)[:, None] * g[None, :]
    log.debug("Spectral Dirichlet solve: %d times, %d modes, components %s", times.size, dec.count, selected)
    return _assemble_trace(dec, times, coefficients, boundary, observe, keep_nodal, meta)


def _nodal_input(dec: SpectralDecomposition, values: np.ndarray | None, name: str) -> np.ndarray | None:
    if values is None:
        return None
    domain = dec.operator.domain
    values = np.asarray(values, dtype=float)
    if values.shape != (domain.n_nodes,):
        raise ParameterError(f"{name} must be a nodal field of length {domain.n_nodes}")
    offending = np.flatnonzero((values != 0) & domain.obstacle_mask)
    if offending.size:
        raise ParameterError(f"{name} is nonzero on obstacle nodes {offending[:10].tolist()}")
    return values


def forward_source(
    dec: SpectralDecomposition,
    alpha: float,
    times: Any,
    sigma: SmoothProfile | None = None,
    f: np.ndarray | None = None,
    u0: np.ndarray | None = None,
    observe: np.ndarray | None = None,
    keep_nodal: bool = False,
    support_before: float | None = None,
) -> TimeTrace:
    """
    Solution driven by sigma(t) f(x) and the initial value u0, with homogeneous Dirichlet data.
    For 1 < alpha < 2 the initial velocity is zero.

    ``support_before`` enforces supp(sigma) within [0, support_before).
    """
    check_alpha(alpha)
    times = _check_times(times)
    f = _nodal_input(dec, f, "f")
    u0 = _nodal_input(dec, u0, "u0")
    if sigma is not None and support_before is not None and sigma.end > support_before:
        raise PreconditionError(
            f"source profile ends at {sigma.end:g}, after the required cutoff {support_before:g}"
        )

    coefficients = np.zeros((times.size, dec.count))
    if u0 is not None:
        coefficients += ml_decay(alpha, dec.eigenvalues[None, :], times[:, None]) * dec.project(u0)[None, :]
    if sigma is not None and f is not None:
        modes = dec.source_modes(f)[None, :]
        coefficients += np.stack([duhamel(alpha, dec.eigenvalues, [sigma], modes, t) for t in times])
    meta = {"alpha": alpha, "source": sigma.to_json() if sigma is not None else None}
    return _assemble_trace(dec, times, coefficients, None, observe, keep_nodal, meta)
