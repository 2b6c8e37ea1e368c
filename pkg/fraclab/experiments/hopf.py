# fraclab/experiments/hopf.py
"""hopf-check: sign structure of the elliptic lift w on 1D and 2D grids, with and without potential."""

import numpy as np

from fraclab.core.config import DomainSpec, FieldSpec
from fraclab.core.errors import ParameterError
from fraclab.core.logger import LoggerProxy
from fraclab.core.registry import experiment
from fraclab.core.result import ExperimentContext, ExperimentResult, Severity
from fraclab.experiments.shared.problem import build_problem, param, square_domain, typed_config
from fraclab.numerics.inverse import hopf_check

log = LoggerProxy(__name__)

POTENTIALS = (0.0, 5.0)


def cases(cells_1d: int, cells_2d: int) -> dict[str, DomainSpec]:
    return {
        f"1d-{cells_1d}": DomainSpec(dim=1, cells=[cells_1d], gamma_in=["left"], gamma_out=["right"]),
        f"2d-{cells_2d}": square_domain(cells_2d),
    }


@experiment("hopf-check")
def hopf(ctx: ExperimentContext) -> ExperimentResult:
    config = typed_config(ctx)
    result = ExperimentResult(name="hopf-check")
    geometries = cases(int(param(config, "cells_1d", 256)), int(param(config, "cells_2d", 64)))

    reports = {}
    last = None
    for name, domain_spec in geometries.items():
        for q in param(config, "potentials", POTENTIALS):
            coefficients = config.coefficients.model_copy(update={"q": FieldSpec(base=q)})
            problem = build_problem(config, domain_spec, coefficients)
            report = hopf_check(problem.op, problem.schedule)
            label = f"{name}_q{q:g}"
            reports[label] = report.to_json()
            result.check(f"hopf_{label}_passed", float(report.passed), 1.0, "==")
            result.metric(f"hopf_{label}_boundary_min", report.boundary_min, rel_tol=1e-6)
            last = problem

    result.details["cases"] = reports
    zero = np.zeros(last.domain.n_nodes)
    try:
        hopf_check(last.op, zero)
        rejected = False
    except ParameterError as e:
        rejected = True
        result.note(Severity.INFO, f"zero boundary datum rejected: {e}")
    result.check("zero_input_rejected", float(rejected), 1.0, "==")
    log.info("hopf-check: %d cases", len(reports))
    return result
