# fraclab/experiments/weak_solution.py
"""
weak-solution: transformed solutions of both solvers satisfy the Laplace-domain resolvent
equation (K + D + p^alpha M) V = C g_hat at a few p.
"""

import numpy as np

from fraclab.core.io import write_csv
from fraclab.core.logger import LoggerProxy
from fraclab.core.registry import experiment
from fraclab.core.result import ExperimentContext, ExperimentResult
from fraclab.experiments.shared.problem import build_problem, keep, param, pulse_grid, typed_config
from fraclab.numerics.laplace import weak_solution_residual
from fraclab.numerics.spectral import eigensolve, forward_dirichlet
from fraclab.numerics.stepper import SteppingPlan, step_solve

log = LoggerProxy(__name__)

P_VALUES = (1.0, 2.0, 4.0)
HORIZON = 40.0
TOLERANCE = 1e-3


@experiment("weak-solution")
def weak_solution(ctx: ExperimentContext) -> ExperimentResult:
    config = typed_config(ctx)
    out = ctx["output_dir"]
    result = ExperimentResult(name="weak-solution")
    problem = build_problem(config)
    alpha = config.solver.alpha
    p_values = np.array(param(config, "p_values", P_VALUES), dtype=float)
    horizon = float(param(config, "horizon", HORIZON))
    laplace = config.laplace

    dec = eigensolve(problem.op, config.solver.modes)
    times = np.concatenate([[0.0], pulse_grid(problem.schedule.profiles[0], horizon)])
    spectral = forward_dirichlet(dec, problem.schedule, alpha, times, keep_nodal=True)
    plan = SteppingPlan.graded(alpha, horizon, config.solver.steps, config.solver.grading)
    stepped = step_solve(problem.op, plan, problem.schedule, keep_nodal=True)

    rows = []
    for label, trace in (("spectral", spectral), ("stepper", stepped)):
        residuals = weak_solution_residual(
            problem.op,
            alpha,
            trace,
            p_values,
            schedule=problem.schedule,
            tail_threshold=laplace.tail_threshold,
            extend_tail=laplace.extend_tail,
        )
        worst = float(residuals.max())
        result.check(f"{label}_resolvent_residual", worst, TOLERANCE)
        result.metric(f"{label}_resolvent_residual", worst, rel_tol=1e-2)
        rows.extend((label, p, r) for p, r in zip(p_values, residuals))

    keep(result, write_csv(out / "weak_residuals.csv", ["solver", "p", "residual"], rows))
    log.info("weak-solution residuals: %s", [f"{r[0]}@{r[1]:g}={r[2]:.2e}" for r in rows])
    return result
