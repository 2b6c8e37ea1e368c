# fraclab/numerics/domain.py
"""
Structured grids with an optional staircase obstacle, coefficient fields and the
finite-difference Dirichlet operator built on them.

Nodes include the outer boundary and are indexed in C order (the last axis varies fastest).
Unknowns are the interior nodes outside the obstacle. The semi-discrete problem reads

    M u' + (K + D) u = C g + sigma f

with M the density mass, K the diffusion/potential stiffness, D the drift part and C the
map from nodal Dirichlet values (outer boundary data, zero on the obstacle) to unknowns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.linalg import spsolve

from fraclab.core.config import CoefficientSpec, DomainSpec, FieldSpec
from fraclab.core.errors import CoefficientError, DomainConstructionError, ParameterError
from fraclab.core.io import write_csv
from fraclab.core.logger import LoggerProxy

log = LoggerProxy(__name__)

MIN_CELLS = 8
SIDES_1D = ("left", "right")
SIDES_2D = ("left", "right", "bottom", "top")
# side -> (axis, inward index step)
SIDE_GEOMETRY = {"left": (0, 1), "right": (0, -1), "bottom": (1, 1), "top": (1, -1)}


@dataclass(frozen=True)
class Obstacle:
    center: tuple[float, ...]
    half_width: tuple[float, ...]

    def contains(self, coords: np.ndarray) -> np.ndarray:
        inside = np.ones(coords.shape[0], dtype=bool)
        for axis, (c, w) in enumerate(zip(self.center, self.half_width)):
            inside &= np.abs(coords[:, axis] - c) <= w + 1e-12
        return inside


@dataclass(frozen=True, eq=False)
class GridDomain:
    dim: int
    extent: tuple[int, ...]
    length: float
    obstacle_mask: np.ndarray
    gamma_in: np.ndarray
    gamma_out: np.ndarray
    gamma_in_sides: tuple[str, ...]
    gamma_out_sides: tuple[str, ...]
    obstacle: Obstacle | None = None
    flux_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    flux_axis: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    flux_step: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(n + 1 for n in self.extent)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(self.length / n for n in self.extent)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def face_measure(self) -> float:
        """Discrete boundary measure h^(d-1) of one side node."""
        return float(np.prod(self.spacing[1:])) if self.dim == 2 else 1.0

    @property
    def sides(self) -> tuple[str, ...]:
        return SIDES_1D if self.dim == 1 else SIDES_2D

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape (n_nodes, dim)."""
        axes = [np.linspace(0.0, self.length, n + 1) for n in self.extent]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def boundary_mask(self) -> np.ndarray:
        grid = np.zeros(self.shape, dtype=bool)
        for axis in range(self.dim):
            index: list[Any] = [slice(None)] * self.dim
            index[axis] = 0
            grid[tuple(index)] = True
            index[axis] = -1
            grid[tuple(index)] = True
        return grid.ravel()

    def fluid_mask(self) -> np.ndarray:
        """Interior nodes outside the obstacle: the unknowns."""
        return ~self.boundary_mask() & ~self.obstacle_mask

    def unknowns(self) -> np.ndarray:
        return np.flatnonzero(self.fluid_mask())

    def unknown_index(self) -> np.ndarray:
        """Row of each node in the unknown vector, -1 for Dirichlet nodes."""
        index = np.full(self.n_nodes, -1, dtype=int)
        unknowns = self.unknowns()
        index[unknowns] = np.arange(unknowns.size)
        return index

    def strides(self) -> tuple[int, ...]:
        strides = []
        for axis in range(self.dim):
            strides.append(int(np.prod(self.shape[axis + 1 :])))
        return tuple(strides)

    def side_nodes(self, side: str) -> np.ndarray:
        """Outer-boundary nodes of one side, corners excluded."""
        if side not in self.sides:
            raise ParameterError(f"unknown side '{side}' for a {self.dim}D domain")
        axis, step = SIDE_GEOMETRY[side]
        grid = np.zeros(self.shape, dtype=bool)
        index: list[Any] = [slice(1, -1)] * self.dim
        index[axis] = 0 if step > 0 else -1
        grid[tuple(index)] = True
        return np.flatnonzero(grid.ravel())

    def nodes_on(self, sides: tuple[str, ...] | list[str]) -> np.ndarray:
        return np.unique(np.concatenate([self.side_nodes(s) for s in sides]))

    def obstacle_face_nodes(self) -> np.ndarray:
        nodes, _, _ = _obstacle_faces(self.shape, self.obstacle_mask, self.fluid_mask())
        return nodes

    def flux_position(self, nodes: np.ndarray | list[int]) -> np.ndarray:
        """Rows of ``flux_nodes`` holding the requested nodes."""
        lookup = {int(n): i for i, n in enumerate(self.flux_nodes)}
        rows = []
        for node in np.atleast_1d(np.asarray(nodes, dtype=int)):
            if int(node) not in lookup:
                raise IndexError(f"node {int(node)} is not an outer-side or obstacle-face node")
            rows.append(lookup[int(node)])
        return np.asarray(rows, dtype=int)


def _expand_sides(sides: list[str], dim: int) -> tuple[str, ...]:
    available = SIDES_1D if dim == 1 else SIDES_2D
    if "all" in sides:
        return available
    unknown = [s for s in sides if s not in available]
    if unknown:
        raise DomainConstructionError(f"sides {unknown} do not exist in a {dim}D domain")
    return tuple(s for s in available if s in sides)


def _obstacle_faces(
    shape: tuple[int, ...], obstacle: np.ndarray, fluid: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Obstacle nodes with exactly one fluid neighbour, with the axis and step toward it."""
    dim = len(shape)
    coords = np.stack(np.unravel_index(np.arange(obstacle.size), shape), axis=1)
    strides = [int(np.prod(shape[a + 1 :])) for a in range(dim)]
    counts = np.zeros(obstacle.size, dtype=int)
    axis_of = np.full(obstacle.size, -1)
    step_of = np.zeros(obstacle.size, dtype=int)
    for axis in range(dim):
        for step in (1, -1):
            target = coords[:, axis] + step
            valid = (target >= 0) & (target < shape[axis])
            neighbour = np.arange(obstacle.size) + step * strides[axis]
            hit = np.zeros(obstacle.size, dtype=bool)
            hit[valid] = fluid[neighbour[valid]]
            counts += hit
            axis_of = np.where(hit, axis, axis_of)
            step_of = np.where(hit, step, step_of)
    faces = np.flatnonzero(obstacle & (counts == 1))
    return faces, axis_of[faces], step_of[faces]


def build_domain(spec: DomainSpec) -> GridDomain:
    """
    Materialize a validated domain description.

    Raises:
        DomainConstructionError: small grids, 1D obstacles, obstacles touching or too close to
            the outer boundary, empty obstacles, disconnected fluid regions, empty Gamma_in.
    """
    dim = spec.dim
    extent = tuple(int(n) for n in spec.cells)
    if any(n < MIN_CELLS for n in extent):
        raise DomainConstructionError(f"each axis needs at least {MIN_CELLS} cells, got {extent}")
    gamma_in_sides = _expand_sides(list(spec.gamma_in), dim)
    gamma_out_sides = _expand_sides(list(spec.gamma_out), dim)
    if not gamma_in_sides:
        raise DomainConstructionError("Gamma_in must contain at least one side")

    shape = tuple(n + 1 for n in extent)
    n_nodes = int(np.prod(shape))
    obstacle_mask = np.zeros(n_nodes, dtype=bool)
    obstacle = None

    if spec.obstacle is not None:
        if dim == 1:
            raise DomainConstructionError(
                "an interior obstacle disconnects a 1D interval; obstacles need dim=2"
            )
        obstacle = Obstacle(tuple(spec.obstacle.center), tuple(spec.obstacle.half_width))
        if len(obstacle.center) != dim or len(obstacle.half_width) != dim:
            raise DomainConstructionError("obstacle center and half_width need one entry per axis")
        probe = GridDomain(dim, extent, spec.length, obstacle_mask, np.zeros(0, int),
                           np.zeros(0, int), gamma_in_sides, gamma_out_sides)
        obstacle_mask = obstacle.contains(probe.coordinates())
        if not obstacle_mask.any():
            raise DomainConstructionError("obstacle covers no grid node; refine the grid")
        index = np.stack(np.unravel_index(np.flatnonzero(obstacle_mask), shape), axis=1)
        for axis in range(dim):
            if index[:, axis].min() < 2 or index[:, axis].max() > extent[axis] - 2:
                raise DomainConstructionError(
                    "obstacle must be strictly interior with at least one fluid cell "
                    "between it and the outer boundary"
                )

    domain = GridDomain(
        dim=dim,
        extent=extent,
        length=float(spec.length),
        obstacle_mask=obstacle_mask,
        gamma_in=np.zeros(0, dtype=int),
        gamma_out=np.zeros(0, dtype=int),
        gamma_in_sides=gamma_in_sides,
        gamma_out_sides=gamma_out_sides,
        obstacle=obstacle,
    )
    fluid = domain.fluid_mask()
    labels, count = ndimage.label(fluid.reshape(shape))
    if count != 1:
        raise DomainConstructionError(f"fluid region splits into {count} components")

    side_nodes, side_axis, side_step = [], [], []
    for side in domain.sides:
        nodes = domain.side_nodes(side)
        axis, step = SIDE_GEOMETRY[side]
        side_nodes.append(nodes)
        side_axis.append(np.full(nodes.size, axis))
        side_step.append(np.full(nodes.size, step))
    faces, face_axis, face_step = _obstacle_faces(shape, obstacle_mask, fluid)

    object.__setattr__(domain, "gamma_in", domain.nodes_on(gamma_in_sides))
    object.__setattr__(domain, "gamma_out", domain.nodes_on(gamma_out_sides))
    object.__setattr__(domain, "flux_nodes", np.concatenate(side_nodes + [faces]).astype(int))
    object.__setattr__(domain, "flux_axis", np.concatenate(side_axis + [face_axis]).astype(int))
    object.__setattr__(domain, "flux_step", np.concatenate(side_step + [face_step]).astype(int))
    log.debug(
        "Built %dD domain %s: %d unknowns, %d obstacle nodes",
        dim,
        extent,
        int(fluid.sum()),
        int(obstacle_mask.sum()),
    )
    return domain


# ---------------------------------------------------------------------------
# Coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoefficientField:
    a: np.ndarray
    rho: np.ndarray
    q: np.ndarray
    drift: np.ndarray | None = None

    @classmethod
    def constant(
        cls, domain: GridDomain, a: float = 1.0, rho: float = 1.0, q: float = 0.0
    ) -> CoefficientField:
        n = domain.n_nodes
        return cls(np.full(n, float(a)), np.full(n, float(rho)), np.full(n, float(q)))

    def with_values(self, **changes: Any) -> CoefficientField:
        values = {"a": self.a, "rho": self.rho, "q": self.q, "drift": self.drift}
        values.update(changes)
        return CoefficientField(**values)

    def bounds(self, domain: GridDomain) -> dict[str, float]:
        live = ~domain.obstacle_mask
        bounds = {
            "a_min": float(self.a[live].min()),
            "rho_min": float(self.rho[live].min()),
            "rho_max": float(self.rho[live].max()),
            "q_min": float(self.q[live].min()),
        }
        if self.drift is not None:
            bounds["drift_sup"] = float(np.abs(self.drift[live]).max())
        return bounds

    def validate(self, domain: GridDomain) -> None:
        live = ~domain.obstacle_mask
        for name, values, bad in (
            ("diffusion a must be positive", self.a, self.a <= 0),
            ("density rho must be positive", self.rho, self.rho <= 0),
            ("potential q must be nonnegative", self.q, self.q < 0),
        ):
            if values.shape != (domain.n_nodes,):
                raise CoefficientError(f"{name.split()[0]} field has shape {values.shape}")
            offending = np.flatnonzero(bad & live)
            if offending.size:
                raise CoefficientError(name, offending)
        if self.drift is not None and self.drift.shape != (domain.n_nodes, domain.dim):
            raise CoefficientError(f"drift field has shape {self.drift.shape}")
        for name, values in (("a", self.a), ("rho", self.rho), ("q", self.q)):
            if not np.all(np.isfinite(values)):
                raise CoefficientError(f"{name} has non-finite values", np.flatnonzero(~np.isfinite(values)))


def _field_values(domain: GridDomain, spec: FieldSpec) -> np.ndarray:
    coords = domain.coordinates()
    values = np.full(domain.n_nodes, spec.base)
    for bump in spec.bumps:
        if len(bump.center) != domain.dim:
            raise ParameterError("bump center needs one coordinate per axis")
        dist2 = ((coords - np.asarray(bump.center)[None, :]) ** 2).sum(axis=1)
        values += bump.height * np.exp(-dist2 / (2.0 * bump.width**2))
    return values


def drift_field(domain: GridDomain, amplitude: float) -> np.ndarray:
    """B = grad(amplitude * prod sin(pi x_i / L)): a gradient field whose potential vanishes on the boundary."""
    coords = domain.coordinates()
    scale = math.pi / domain.length
    sines = np.sin(scale * coords)
    cosines = np.cos(scale * coords)
    drift = np.empty_like(coords)
    for axis in range(domain.dim):
        others = np.prod(np.delete(sines, axis, axis=1), axis=1) if domain.dim > 1 else 1.0
        drift[:, axis] = amplitude * scale * cosines[:, axis] * others
    return drift


def coefficient_field(domain: GridDomain, spec: CoefficientSpec) -> CoefficientField:
    coeff = CoefficientField(
        a=_field_values(domain, spec.a),
        rho=_field_values(domain, spec.rho),
        q=_field_values(domain, spec.q),
        drift=drift_field(domain, spec.drift.amplitude) if spec.drift is not None else None,
    )
    coeff.validate(domain)
    return coeff


# ---------------------------------------------------------------------------
# Operator assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    domain: GridDomain
    coeff: CoefficientField
    stiffness: sp.csr_matrix
    mass: sp.dia_matrix
    drift: sp.csr_matrix
    boundary_coupling: sp.csr_matrix
    flux: sp.csr_matrix

    @property
    def size(self) -> int:
        return self.stiffness.shape[0]

    @property
    def has_drift(self) -> bool:
        return self.coeff.drift is not None

    @property
    def unknowns(self) -> np.ndarray:
        return self.domain.unknowns()

    def system(self) -> sp.csr_matrix:
        """K + D."""
        return (self.stiffness + self.drift).tocsr()

    def scatter(self, interior: np.ndarray, boundary: np.ndarray | None = None) -> np.ndarray:
        """Full nodal field(s) from unknown values; boundary values from ``boundary``, obstacle zero."""
        interior = np.asarray(interior)
        lead = interior.shape[:-1]
        full = np.zeros(lead + (self.domain.n_nodes,), dtype=interior.dtype)
        if boundary is not None:
            full = full + np.asarray(boundary)
            full[..., self.domain.obstacle_mask] = 0.0
        full[..., self.unknowns] = interior
        return full

    def gather(self, full: np.ndarray) -> np.ndarray:
        return np.asarray(full)[..., self.unknowns]

    def apply(self, full: np.ndarray) -> np.ndarray:
        """(K + D) u_U - C u for a nodal field u; obstacle values are taken as zero."""
        values = np.array(full, dtype=float)
        values[self.domain.obstacle_mask] = 0.0
        return self.system() @ values[self.unknowns] - self.boundary_coupling @ values

    def flux_rows(self, nodes: np.ndarray | list[int] | None = None) -> sp.csr_matrix:
        if nodes is None:
            return self.flux
        return self.flux[self.domain.flux_position(nodes)]

    def flux_at(self, full: np.ndarray, nodes: np.ndarray | list[int] | None = None) -> np.ndarray:
        """a * outward normal derivative of nodal field(s) at flux nodes (last axis = nodes)."""
        rows = self.flux_rows(nodes)
        full = np.asarray(full)
        return (rows @ full.T).T if full.ndim > 1 else rows @ full

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        """rho-weighted discrete inner product h^d u^T M v of unknown vectors."""
        return float(self.domain.cell_volume * (u @ (self.mass @ v)))

    def pairing(self, boundary: np.ndarray) -> np.ndarray:
        """h^d C g: paired with an unknown vector phi this is -<g, a d_nu phi> on the boundary."""
        return self.domain.cell_volume * (self.boundary_coupling @ boundary)

    def lift(self, boundary: np.ndarray) -> np.ndarray:
        """Nodal elliptic lift G: (K + D) G_U = C g, G = g on the outer boundary."""
        interior = spsolve(self.system().tocsc(), self.boundary_coupling @ boundary)
        return self.scatter(np.atleast_1d(interior), boundary)


def flux_matrix(domain: GridDomain, coeff: CoefficientField, nodes: np.ndarray | None = None) -> sp.csr_matrix:
    """One-sided three-point stencil a_b (3 u_b - 4 u_{b+e} + u_{b+2e}) / (2h), e the inward step."""
    rows = np.arange(domain.flux_nodes.size) if nodes is None else domain.flux_position(nodes)
    strides = np.asarray(domain.strides())
    spacing = np.asarray(domain.spacing)
    base = domain.flux_nodes[rows]
    offset = domain.flux_step[rows] * strides[domain.flux_axis[rows]]
    scale = coeff.a[base] / (2.0 * spacing[domain.flux_axis[rows]])
    local = np.arange(rows.size)
    r = np.concatenate([local, local, local])
    c = np.concatenate([base, base + offset, base + 2 * offset])
    v = np.concatenate([3.0 * scale, -4.0 * scale, scale])
    return sp.csr_matrix((v, (r, c)), shape=(rows.size, domain.n_nodes))


def boundary_flux(
    domain: GridDomain, coeff: CoefficientField, values: np.ndarray, where: np.ndarray | list[int]
) -> np.ndarray:
    """a * outward normal derivative of a nodal field at the requested boundary nodes."""
    return flux_matrix(domain, coeff, np.asarray(where, dtype=int)) @ np.asarray(values, dtype=float)


def assemble(domain: GridDomain, coeff: CoefficientField) -> DiscreteOperator:
    """Second-order centered finite differences with harmonic-mean face coefficients."""
    coeff.validate(domain)
    unknowns = domain.unknowns()
    index = domain.unknown_index()
    n_u = unknowns.size
    strides = domain.strides()

    k_rows, k_cols, k_vals = [], [], []
    d_rows, d_cols, d_vals = [], [], []
    c_rows, c_cols, c_vals = [], [], []
    diagonal = coeff.q[unknowns].astype(float).copy()
    rows = np.arange(n_u)

    for axis, h in enumerate(domain.spacing):
        for step in (1, -1):
            neighbour = unknowns + step * strides[axis]
            a_i, a_n = coeff.a[unknowns], coeff.a[neighbour]
            face = 2.0 * a_i * a_n / (a_i + a_n) / h**2
            diagonal += face
            inside = index[neighbour] >= 0
            k_rows.append(rows[inside])
            k_cols.append(index[neighbour[inside]])
            k_vals.append(-face[inside])
            c_rows.append(rows[~inside])
            c_cols.append(neighbour[~inside])
            c_vals.append(face[~inside])

            if coeff.drift is not None:
                centered = step * coeff.drift[unknowns, axis] / (2.0 * h)
                d_rows.append(rows[inside])
                d_cols.append(index[neighbour[inside]])
                d_vals.append(centered[inside])
                c_rows.append(rows[~inside])
                c_cols.append(neighbour[~inside])
                c_vals.append(-centered[~inside])

    k_rows.append(rows)
    k_cols.append(rows)
    k_vals.append(diagonal)
    stiffness = sp.csr_matrix(
        (np.concatenate(k_vals), (np.concatenate(k_rows), np.concatenate(k_cols))), shape=(n_u, n_u)
    )
    if d_vals:
        drift = sp.csr_matrix(
            (np.concatenate(d_vals), (np.concatenate(d_rows), np.concatenate(d_cols))),
            shape=(n_u, n_u),
        )
    else:
        drift = sp.csr_matrix((n_u, n_u))
    coupling = sp.csr_matrix(
        (np.concatenate(c_vals), (np.concatenate(c_rows), np.concatenate(c_cols))),
        shape=(n_u, domain.n_nodes),
    )
    mass = sp.diags(coeff.rho[unknowns].astype(float))
    log.debug("Assembled operator with %d unknowns and %d stiffness entries", n_u, stiffness.nnz)
    return DiscreteOperator(domain, coeff, stiffness, mass, drift, coupling, flux_matrix(domain, coeff))


# ---------------------------------------------------------------------------
# Reporting helpers
# ---------------------------------------------------------------------------


def compatibility_report(
    domain: GridDomain, first: CoefficientField, second: CoefficientField
) -> dict[str, Any]:
    """
    Discrete versions of the side-coverage and coefficient-matching conditions that gate
    uniqueness statements. Recorded, never enforced.
    """
    covered = set(domain.gamma_in_sides) | set(domain.gamma_out_sides)
    overlap = set(domain.gamma_in_sides) & set(domain.gamma_out_sides)
    difference = first.a - second.a

    boundary = domain.flux_nodes[: sum(domain.side_nodes(s).size for s in domain.sides)]
    axis = domain.flux_axis[: boundary.size]
    step = domain.flux_step[: boundary.size]
    strides = np.asarray(domain.strides())
    h = np.asarray(domain.spacing)[axis]
    inward = boundary + step * strides[axis]
    gradient_gap = float(np.abs((difference[inward] - difference[boundary]) / h).max())

    coords = domain.coordinates()
    distance = np.min(np.minimum(coords, domain.length - coords), axis=1)
    near = (distance > 0) & (distance <= 4 * max(domain.spacing)) & ~domain.obstacle_mask
    ratio = np.abs(difference[near]) / distance[near] ** 2
    return {
        "sides_cover_boundary": covered == set(domain.sides),
        "sides_overlap": bool(overlap),
        "boundary_gradient_gap": gradient_gap,
        "boundary_distance_ratio": float(ratio.max()) if ratio.size else 0.0,
    }


def export_coefficients_csv(domain: GridDomain, coeff: CoefficientField, path: Path) -> Path:
    coords = domain.coordinates()
    header = ["x", "y"][: domain.dim] + ["a", "rho", "q"]
    rows = (
        list(coords[i]) + [coeff.a[i], coeff.rho[i], coeff.q[i]] for i in range(domain.n_nodes)
    )
    return write_csv(path, header, rows)
