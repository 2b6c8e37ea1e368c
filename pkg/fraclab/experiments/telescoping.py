# fraclab/experiments/telescoping.py
"""
telescoping: on the k-th window of the staircase the total solution is the partial sum of the
first k component solutions, and later components have not yet acted.
"""

import numpy as np

from fraclab.core.config import ScheduleSpec
from fraclab.core.io import write_csv
from fraclab.core.logger import LoggerProxy
from fraclab.core.registry import experiment
from fraclab.core.result import ExperimentContext, ExperimentResult, PlotPanel
from fraclab.experiments.shared.problem import build_problem, keep, param, relative_max, typed_config
from fraclab.numerics.spectral import eigensolve, forward_dirichlet

log = LoggerProxy(__name__)

COMPONENTS = 3
TOLERANCE = 1e-9
SAMPLES = 600


@experiment("telescoping")
def telescoping(ctx: ExperimentContext) -> ExperimentResult:
    config = typed_config(ctx)
    out = ctx["output_dir"]
    result = ExperimentResult(name="telescoping")
    count = max(config.schedule.components, int(param(config, "components", COMPONENTS)))
    spec = ScheduleSpec.model_validate({**config.schedule.model_dump(), "components": count})
    problem = build_problem(config, schedule_spec=spec)
    schedule = problem.schedule
    alpha = config.solver.alpha
    dec = eigensolve(problem.op, config.solver.modes)

    times = np.linspace(0.0, schedule.tau2, SAMPLES)
    total = forward_dirichlet(dec, schedule, alpha, times)
    parts = [forward_dirichlet(dec, schedule, alpha, times, component=k) for k in range(1, count + 1)]

    windows = {}
    for k in range(1, count + 1):
        _, end = schedule.window_of(k)
        inside = times < end
        partial = sum(part.values[inside] for part in parts[:k])
        gap = relative_max(total.values[inside], partial)
        result.check(f"window_{k}_partial_sum_rel_error", gap, TOLERANCE)
        result.metric(f"window_{k}_partial_sum_rel_error", gap, rel_tol=1.0)
        windows[k] = {"end": end, "samples": int(inside.sum())}
        if k < count:
            start = schedule.profiles[k].start
            idle = float(np.abs(parts[k].values[times <= start]).max(initial=0.0))
            result.check(f"component_{k + 1}_silent_before_start", idle, 0.0, "==")
    result.details["windows"] = windows
    result.details["schedule"] = schedule.to_json()

    rows = [
        (t, "all" if j == 0 else j, value)
        for j, trace in enumerate([total, *parts])
        for t, value in zip(times, trace.values[:, 0])
    ]
    keep(result, write_csv(out / "telescoping.csv", ["time", "component", "value"], rows))
    keep(result, schedule.write_csv(out / "schedule.csv", times))
    result.plots.append(
        PlotPanel("total flux", "telescoping.csv", 1, 3, label="all", where='strcol(2) eq "all"')
    )
    log.info("telescoping verified on %d windows", count)
    return result
