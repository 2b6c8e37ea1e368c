# fraclab/experiments/dtn.py
"""dtn-compare: Laplace-domain Dirichlet-to-Neumann maps of two coefficient sets on Gamma_out."""

import numpy as np

from fraclab.core.config import BumpSpec, CoefficientSpec, DriftSpec, FieldSpec
from fraclab.core.errors import PreconditionError
from fraclab.core.logger import LoggerProxy
from fraclab.core.registry import experiment
from fraclab.core.result import ExperimentContext, ExperimentResult, PlotPanel, Severity
from fraclab.experiments.shared.problem import build_problem, keep, param, typed_config
from fraclab.numerics.domain import compatibility_report, export_coefficients_csv
from fraclab.numerics.inverse import INVERSE_REPORT_NAME, InverseReport, dtn_compare, schedule_probes
from fraclab.numerics.laplace import p1_threshold

log = LoggerProxy(__name__)

BUMP = {"center": 0.3, "width": 0.05, "height": 0.5}
DRIFT_AMPLITUDE = 0.5
SAME_TOLERANCE = 0.0
DISTINCT_THRESHOLD = 1e-6


def perturbed(base: CoefficientSpec, dim: int, center: float, width: float, height: float) -> CoefficientSpec:
    bump = BumpSpec(center=[center] * dim, width=width, height=height)
    return base.model_copy(update={"rho": FieldSpec(base=base.rho.base, bumps=[*base.rho.bumps, bump])})


@experiment("dtn-compare")
def dtn(ctx: ExperimentContext) -> ExperimentResult:
    config = typed_config(ctx)
    out = ctx["output_dir"]
    result = ExperimentResult(name="dtn-compare")
    alpha = config.solver.alpha
    base = build_problem(config)
    dim = base.domain.dim
    probes = schedule_probes(base.schedule)
    bump = {**BUMP, **param(config, "rho_bump", {})}
    other = build_problem(config, coefficients=perturbed(config.coefficients, dim, **bump))
    p_values = np.asarray(param(config, "p_values", [1.0]), dtype=float)

    same = dtn_compare(base.op, base.op, alpha, p_values, probes)
    result.check("identical_operators_discrepancy", float(same.discrepancy.max()), SAME_TOLERANCE, "<=")

    distinct = dtn_compare(base.op, other.op, alpha, p_values, probes)
    relative = distinct.discrepancy / np.where(distinct.reference > 0, distinct.reference, 1.0)
    result.check("density_bump_relative_discrepancy", float(relative.min()), DISTINCT_THRESHOLD, ">")
    result.metric("density_bump_relative_discrepancy", float(relative.min()), rel_tol=1e-6)
    keep(result, distinct.write_csv(out / "dtn_density.csv"))
    keep(result, export_coefficients_csv(other.domain, other.coeff, out / "coefficients.csv"))
    result.details["density"] = distinct.to_json()
    result.details["compatibility"] = compatibility_report(base.domain, base.coeff, other.coeff)
    report = InverseReport(dtn=distinct, diagnostics={"compatibility": result.details["compatibility"]})
    keep(result, report.write_json(out / INVERSE_REPORT_NAME))

    drift_spec = config.coefficients.model_copy(
        update={"drift": DriftSpec(amplitude=float(param(config, "drift_amplitude", DRIFT_AMPLITUDE)))}
    )
    drifted = build_problem(config, coefficients=drift_spec)
    threshold = p1_threshold(drifted.op, alpha)
    drift_grid = np.geomspace(2.0 * threshold, 100.0 * threshold, 8)
    with_drift = dtn_compare(base.op, drifted.op, alpha, drift_grid, probes)
    keep(result, with_drift.write_csv(out / "dtn_drift.csv"))
    result.details["drift"] = {"p1": threshold, **with_drift.to_json()}

    below = min(1.0, 0.5 * threshold)
    try:
        dtn_compare(base.op, drifted.op, alpha, [below], probes)
        refused = False
    except PreconditionError as e:
        refused = True
        result.note(Severity.INFO, f"drift comparison below p1 refused: {e}")
    result.check("drift_below_p1_refused", float(refused), 1.0, "==")

    result.plots.append(PlotPanel("DtN discrepancy with drift", "dtn_drift.csv", 1, 3, logscale="xy", label="discrepancy"))
    log.info("dtn-compare: density discrepancy %s, p1 = %.4g", np.round(relative, 8).tolist(), threshold)
    return result
