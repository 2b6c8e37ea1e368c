# fraclab/experiments/kernel.py
"""
kernel-validation: the per-mode contour realization against the Mittag-Leffler kernel, and the
fitted-constant large-time bounds of E_{alpha,1} and of the relaxation kernel.
"""

import itertools
import time
from collections.abc import Callable

import numpy as np
from scipy.integrate import quad_vec
from scipy.special import gamma

from fraclab.core.io import write_csv
from fraclab.core.logger import LoggerProxy
from fraclab.core.registry import experiment
from fraclab.core.result import ExperimentContext, ExperimentResult, PlotPanel, Severity
from fraclab.experiments.shared.problem import keep, param, typed_config
from fraclab.numerics.laplace import ContourSpec, contour_kernel
from fraclab.numerics.mlf import KernelQuery, kernel_laplace, mittag_leffler, relaxation_kernel

log = LoggerProxy(__name__)

ALPHAS = (0.3, 0.5, 0.8, 1.2, 1.5)
LAMBDAS = (1.0, 10.0, 100.0)
Z_VALUES = (0.1, 1.0, 5.0)
BOUND_ALPHAS = (0.3, 0.5, 0.8, 1.5)
BOUND_LAMBDAS = (1.0, 10.0)
CONTOUR_TOLERANCE = 1e-6
SAFETY = 2.0
FIT_POINTS = 20
CHECK_POINTS = 200
BOUND_START = 100.0
BOUND_END = 1e4
LAPLACE_ALPHAS = (0.3, 0.8, 1.5)
LAPLACE_P = (0.5, 1.0, 4.0)
LAPLACE_TOLERANCE = 1e-6

BoundRow = tuple[str, float, float, float, float, float]


def contour_table(alphas, lambdas, z_values, theta1: float) -> list[tuple[float, float, float, float, float, float]]:
    spec = ContourSpec(theta1=theta1)
    rows = []
    for alpha, lam, z in itertools.product(alphas, lambdas, z_values):
        by_contour = contour_kernel(spec, alpha, lam, z)
        by_series = KernelQuery(alpha, lam, z).value()
        error = abs(by_contour - by_series) / max(abs(by_series), 1e-300)
        rows.append((alpha, lam, z, by_contour, by_series, error))
    return rows


def laplace_by_quadrature(alpha: float, lam: float, p_values: np.ndarray) -> np.ndarray:
    """Transform of the relaxation kernel after t = s^(1/alpha), which absorbs the t^(alpha-1) factor."""
    p = np.asarray(p_values, dtype=float)

    def integrand(s: float) -> np.ndarray:
        return np.exp(-p * s ** (1.0 / alpha)) * mittag_leffler(alpha, alpha, -lam * s) / alpha

    value, _ = quad_vec(integrand, 0.0, np.inf, epsabs=0.0, epsrel=1e-10, limit=2000)
    return np.asarray(value)


def laplace_table(alphas, lambdas, p_values) -> list[tuple[float, float, float, float, float, float]]:
    rows = []
    for alpha, lam in itertools.product(alphas, lambdas):
        by_quadrature = laplace_by_quadrature(alpha, lam, np.asarray(p_values))
        closed = np.asarray(kernel_laplace(alpha, lam, np.asarray(p_values)))
        for p, numeric, exact in zip(p_values, by_quadrature, closed):
            rows.append((alpha, lam, p, float(numeric), float(exact), abs(numeric - exact) / exact))
    return rows


def ml_remainder(alpha: float, lam: float) -> Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """|E_{alpha,1}(-lam t^alpha) - t^-alpha / (lam Gamma(1-alpha))| against t^(-2 alpha) lam^-2."""

    def evaluate(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        value = np.asarray(mittag_leffler(alpha, 1.0, -lam * t**alpha), dtype=float)
        leading = t ** (-alpha) / (lam * gamma(1.0 - alpha))
        return np.abs(value - leading), t ** (-2.0 * alpha) / lam**2

    return evaluate


def kernel_magnitude(alpha: float, lam: float) -> Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """|t^(alpha-1) E_{alpha,alpha}(-lam t^alpha)| against t^(-1-alpha) lam^-2."""

    def evaluate(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        value = np.asarray(relaxation_kernel(alpha, lam, t), dtype=float)
        return np.abs(value), t ** (-1.0 - alpha) / lam**2

    return evaluate


def fitted_bound(
    family: str, alpha: float, lam: float, evaluate: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
) -> tuple[float, int, list[BoundRow]]:
    """
    Fit C on a coarse log grid over [BOUND_START, BOUND_END] (times a safety factor), then
    count violations of value <= C * scale on a finer grid over the same window.
    """
    value, scale = evaluate(np.geomspace(BOUND_START, BOUND_END, FIT_POINTS))
    constant = SAFETY * float((value / scale).max())
    fine = np.geomspace(BOUND_START, BOUND_END, CHECK_POINTS)
    value, scale = evaluate(fine)
    violations = int(np.count_nonzero(value > constant * scale))
    rows = [(family, alpha, lam, t, v, constant * s) for t, v, s in zip(fine, value, scale)]
    return constant, violations, rows


@experiment("kernel-validation")
def kernel_validation(ctx: ExperimentContext) -> ExperimentResult:
    config = typed_config(ctx)
    out = ctx["output_dir"]
    result = ExperimentResult(name="kernel-validation")
    alphas = tuple(param(config, "alphas", ALPHAS))
    lambdas = tuple(param(config, "lambdas", LAMBDAS))
    z_values = tuple(param(config, "z_values", Z_VALUES))

    started = time.perf_counter()
    table = contour_table(alphas, lambdas, z_values, config.laplace.theta1)
    elapsed = time.perf_counter() - started
    keep(result, write_csv(out / "kernel_table.csv", ["alpha", "lambda", "z", "contour", "ml", "rel_error"], table))
    worst = max(row[5] for row in table)
    result.check("contour_vs_ml_max_rel_error", worst, CONTOUR_TOLERANCE)
    result.metric("contour_vs_ml_max_rel_error", worst, rel_tol=1e-2)
    result.note(Severity.INFO, f"contour table of {len(table)} entries in {elapsed:.2f} s")

    transforms = laplace_table(LAPLACE_ALPHAS, LAMBDAS, LAPLACE_P)
    keep(result, write_csv(out / "kernel_laplace.csv", ["alpha", "lambda", "p", "quadrature", "closed_form", "rel_error"], transforms))
    result.check("laplace_identity_max_rel_error", max(row[5] for row in transforms), LAPLACE_TOLERANCE)

    families = {"ml_remainder": ml_remainder, "kernel": kernel_magnitude}
    constants: dict[str, float] = {}
    bound_rows: list[BoundRow] = []
    for family, builder in families.items():
        violations = 0
        for alpha, lam in itertools.product(BOUND_ALPHAS, BOUND_LAMBDAS):
            constant, missed, rows = fitted_bound(family, alpha, lam, builder(alpha, lam))
            constants[f"{family}/{alpha:g}/{lam:g}"] = constant
            violations += missed
            bound_rows.extend(rows)
        result.check(f"{family}_bound_violations", violations, 0, "==")
    keep(result, write_csv(out / "ml_bound.csv", ["family", "alpha", "lambda", "t", "value", "bound"], bound_rows))
    result.details["bound_constants"] = constants

    result.plots += [
        PlotPanel("contour vs ML relative error", "kernel_table.csv", 3, 6, logscale="xy", label="rel error"),
        PlotPanel(
            "E_{alpha,1} remainder and fitted bound",
            "ml_bound.csv",
            4,
            5,
            logscale="xy",
            label="remainder",
            where='strcol(1) eq "ml_remainder"',
            extra=[(6, "bound")],
        ),
    ]
    log.info("kernel-validation: worst contour error %.3e", worst)
    return result
