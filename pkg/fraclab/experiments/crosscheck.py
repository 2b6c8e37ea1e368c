# fraclab/experiments/crosscheck.py
"""solver-crosscheck: spectral Duhamel traces against the graded-mesh L1 stepper."""

import time

import numpy as np

from fraclab.core.io import write_csv
from fraclab.core.logger import LoggerProxy
from fraclab.core.registry import experiment
from fraclab.core.result import ExperimentContext, ExperimentResult, PlotPanel
from fraclab.experiments.shared.problem import build_problem, keep, param, relative_l2, typed_config
from fraclab.numerics.spectral import eigensolve, forward_dirichlet
from fraclab.numerics.stepper import SteppingPlan, step_solve

log = LoggerProxy(__name__)

ALPHAS = (0.5, 0.8, 1.0)
HORIZON = 1.5
STRIDE = 8
TOLERANCE = 0.01


@experiment("solver-crosscheck")
def solver_crosscheck(ctx: ExperimentContext) -> ExperimentResult:
    config = typed_config(ctx)
    out = ctx["output_dir"]
    result = ExperimentResult(name="solver-crosscheck")
    problem = build_problem(config)
    dec = eigensolve(problem.op, config.solver.modes)
    horizon = float(param(config, "horizon", HORIZON))
    stride = int(param(config, "stride", STRIDE))

    rows = []
    for alpha in param(config, "alphas", ALPHAS):
        grading = config.solver.grading or (2.0 / alpha if alpha < 1.0 else 1.0)
        plan = SteppingPlan.graded(alpha, horizon, config.solver.steps, grading)
        started = time.perf_counter()
        stepped = step_solve(problem.op, plan, problem.schedule, keep_nodal=False)
        stepping_time = time.perf_counter() - started

        times = stepped.times[stride - 1 :: stride]
        reference = stepped.values[stride - 1 :: stride]
        spectral = forward_dirichlet(dec, problem.schedule, alpha, times)
        error = relative_l2(reference, spectral.values)

        tag = f"{alpha:g}"
        result.check(f"crosscheck_alpha_{tag}_rel_l2", error, TOLERANCE, "<=")
        result.metric(f"crosscheck_alpha_{tag}_rel_l2", error, rel_tol=1e-3)
        result.details[f"alpha_{tag}"] = {
            "grading": grading,
            "steps": plan.steps,
            "factorizations": stepped.meta["factorizations"],
            "stepper_seconds": round(stepping_time, 3),
            "truncation": spectral.meta["truncation"],
        }
        rows.extend(
            (alpha, t, s, l1)
            for t, s, l1 in zip(times, spectral.values[:, 0], reference[:, 0])
        )

    keep(result, write_csv(out / "crosscheck.csv", ["alpha", "time", "spectral", "stepper"], rows))
    result.plots.append(
        PlotPanel("flux at Gamma_out, alpha = 0.5", "crosscheck.csv", 2, 3, label="spectral", where="$1 == 0.5", extra=[(4, "L1")])
    )
    log.info("solver-crosscheck finished for %d orders", len(result.checks))
    return result
