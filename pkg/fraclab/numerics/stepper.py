# fraclab/numerics/stepper.py
"""
L1 time-stepping for the Caputo problem with 0 < alpha <= 1 on a (graded) nonuniform mesh.

At t_n the Caputo derivative is replaced by sum_j a_{n,j} (u_j - u_{j-1}) with

    a_{n,j} = ((t_n - t_{j-1})^(1-alpha) - (t_n - t_j)^(1-alpha)) / (Gamma(2-alpha) dt_j),

the exact average of the kernel (t_n - s)^(-alpha) / Gamma(1-alpha) over step j. The history
part of the sum moves to the right-hand side; alpha = 1 reduces to backward Euler.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.special import gamma

from fraclab.core.errors import ParameterError, SolverError, UnsupportedOperatorError
from fraclab.core.logger import LoggerProxy
from fraclab.numerics.domain import DiscreteOperator
from fraclab.numerics.excitation import ExcitationSchedule, SmoothProfile
from fraclab.numerics.spectral import TimeTrace

log = LoggerProxy(__name__)

RESIDUAL_TOLERANCE = 1e-8
FACTOR_CACHE_SIZE = 16
# relative rounding allowed between neighbouring L1 weights, in ulps
WEIGHT_ORDER_SLACK = 64.0


def l1_weights(times: np.ndarray, n: int, alpha: float) -> np.ndarray:
    """
    L1 weights a_{n,1..n} on an arbitrary increasing grid t_0 < t_1 < ... .

    The difference (b + dt_j)^(1-alpha) - b^(1-alpha) with b = t_n - t_j is evaluated as
    b^(1-alpha) expm1((1-alpha) log1p(dt_j / b)), accurate for dt_j << b.
    """
    dt = np.diff(times[: n + 1])
    if alpha == 1.0:
        out = np.zeros(n)
        out[-1] = 1.0 / dt[-1]
        return out
    power = 1.0 - alpha
    behind = times[n] - times[1 : n + 1]
    spread = np.empty(n)
    inner = behind > 0
    spread[inner] = behind[inner] ** power * np.expm1(power * np.log1p(dt[inner] / behind[inner]))
    spread[~inner] = dt[~inner] ** power
    return spread / (gamma(2.0 - alpha) * dt)


def caputo_l1(times: np.ndarray, values: np.ndarray, alpha: float) -> np.ndarray:
    """
    L1 Caputo derivative of sampled values at times[1:], values[0] being the value at times[0]
    (taken as the start of memory).
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    increments = np.diff(values, axis=0)
    out = np.zeros((times.size - 1,) + values.shape[1:])
    for n in range(1, times.size):
        out[n - 1] = l1_weights(times, n, alpha) @ increments[:n]
    return out


@dataclass(frozen=True, eq=False)
class SteppingPlan:
    alpha: float
    horizon: float
    steps: int
    grading: float
    times: np.ndarray

    @classmethod
    def graded(
        cls, alpha: float, horizon: float, steps: int = 2048, grading: float | None = None
    ) -> SteppingPlan:
        """
        Mesh t_n = T (n/N)^r; r defaults to 2/alpha (r = 1 is uniform).

        Raises:
            UnsupportedOperatorError: alpha outside (0, 1].
            ParameterError: non-positive horizon, fewer than 8 steps, grading below 1.
        """
        if not 0.0 < alpha <= 1.0:
            raise UnsupportedOperatorError(f"L1 stepping covers 0 < alpha <= 1, got {alpha}")
        if horizon <= 0 or steps < 8:
            raise ParameterError("stepping needs a positive horizon and at least 8 steps")
        r = 2.0 / alpha if grading is None else float(grading)
        if r < 1.0:
            raise ParameterError(f"mesh grading must be >= 1, got {r}")
        times = horizon * (np.arange(steps + 1) / steps) ** r
        plan = cls(alpha, float(horizon), int(steps), r, times)
        plan._check_weights()
        return plan

    @property
    def uniform(self) -> bool:
        return self.grading == 1.0

    def weights(self, n: int) -> np.ndarray:
        """a_{n,1..n} for step n (1-based)."""
        return l1_weights(self.times, n, self.alpha)

    def _check_weights(self) -> None:
        slack = WEIGHT_ORDER_SLACK * np.finfo(float).eps
        for n in sorted({1, 2, self.steps // 2, self.steps}):
            w = self.weights(n)
            shrinking = np.diff(w) < -slack * w[1:]
            if np.any(w[-1:] <= 0) or (self.alpha < 1.0 and (np.any(w <= 0) or np.any(shrinking))):
                raise SolverError(f"L1 weights at step {n} are not positive and increasing toward t_n")


class _FactorCache:
    """LU factors of a M + (K + D) keyed by the leading weight a."""

    def __init__(self, op: DiscreteOperator):
        self.mass = op.mass.tocsc()
        self.system = op.system().tocsc()
        self.entries: OrderedDict[float, tuple[sp.csc_matrix, object]] = OrderedDict()
        self.factorizations = 0

    def get(self, lead: float) -> tuple[sp.csc_matrix, object]:
        key = float(np.format_float_scientific(lead, precision=12))
        if key in self.entries:
            self.entries.move_to_end(key)
            return self.entries[key]
        matrix = (lead * self.mass + self.system).tocsc()
        entry = (matrix, splu(matrix))
        self.factorizations += 1
        self.entries[key] = entry
        if len(self.entries) > FACTOR_CACHE_SIZE:
            self.entries.popitem(last=False)
        return entry


def step_solve(
    op: DiscreteOperator,
    plan: SteppingPlan,
    schedule: ExcitationSchedule | None = None,
    sigma: SmoothProfile | None = None,
    f: np.ndarray | None = None,
    u0: np.ndarray | None = None,
    observe: np.ndarray | None = None,
    keep_nodal: bool = True,
) -> TimeTrace:
    """
    March M d^alpha u + (K + D) u = C g + sigma f from u(0) = u0 over the plan's mesh.

    Returns the flux trace at t_1..t_N (observation nodes default to Gamma_out) and, when
    ``keep_nodal``, the full nodal history.

    Raises:
        SolverError: a step's linear solve misses the residual tolerance.
    """
    domain = op.domain
    nodes = domain.gamma_out if observe is None else np.asarray(observe, dtype=int)
    flux_rows = op.flux_rows(nodes)
    coupling = op.boundary_coupling
    mass = op.mass.tocsr()
    source = op.gather(np.asarray(f, dtype=float)) if f is not None else None

    u_prev = op.gather(np.asarray(u0, dtype=float)) if u0 is not None else np.zeros(op.size)
    increments = np.zeros((plan.steps, op.size))
    trace = np.zeros((plan.steps, nodes.size))
    nodal = np.zeros((plan.steps, domain.n_nodes)) if keep_nodal else None
    cache = _FactorCache(op)

    for n in range(1, plan.steps + 1):
        t_n = plan.times[n]
        weights = plan.weights(n)
        lead = weights[-1]
        matrix, lu = cache.get(lead)

        rhs = lead * (mass @ u_prev)
        if n > 1 and plan.alpha < 1.0:
            rhs -= mass @ (weights[:-1] @ increments[: n - 1])
        boundary = schedule.boundary_data(t_n)[0] if schedule is not None else None
        if boundary is not None:
            rhs += coupling @ boundary
        if sigma is not None and source is not None:
            rhs += float(sigma.value(t_n)) * source

        u = lu.solve(rhs)
        residual = float(np.abs(matrix @ u - rhs).max())
        scale = float(np.abs(rhs).max())
        if residual > RESIDUAL_TOLERANCE * scale + 1e-300:
            raise SolverError(f"L1 step {n} (t={t_n:.6g}) failed to solve", residual=residual / max(scale, 1e-300))

        increments[n - 1] = u - u_prev
        u_prev = u
        full = op.scatter(u, boundary)
        trace[n - 1] = flux_rows @ full
        if nodal is not None:
            nodal[n - 1] = full

    log.debug(
        "L1 stepping: alpha=%g, %d steps to T=%g, %d factorizations",
        plan.alpha,
        plan.steps,
        plan.horizon,
        cache.factorizations,
    )
    meta = {"alpha": plan.alpha, "steps": plan.steps, "grading": plan.grading, "factorizations": cache.factorizations}
    return TimeTrace(plan.times[1:], trace, nodes, nodal, meta)
