# fraclab/experiments/window.py
"""
window-rigidity: two different sources acting before tau1 are told apart on a late window for
alpha < 1, while for alpha = 1 the discrepancy sits under the exponential envelope.
"""

import numpy as np

from fraclab.core.io import write_csv
from fraclab.core.logger import LoggerProxy
from fraclab.core.registry import experiment
from fraclab.core.result import ExperimentContext, ExperimentResult, PlotPanel
from fraclab.experiments.shared.problem import build_problem, keep, param, typed_config
from fraclab.numerics.excitation import source_pulse
from fraclab.numerics.inverse import INVERSE_REPORT_NAME, InverseReport, WindowVerdict, window_rigidity_experiment
from fraclab.numerics.spectral import eigensolve, forward_source

log = LoggerProxy(__name__)

PULSE = (0.1, 0.5)
WINDOW = (2.0, 3.0)
SAMPLES = 400
FIRST_SAMPLE = 0.005
TOLERANCE = 1e-6
IDENTICAL_TOLERANCE = 1e-9


@experiment("window-rigidity")
def window_rigidity(ctx: ExperimentContext) -> ExperimentResult:
    config = typed_config(ctx)
    out = ctx["output_dir"]
    result = ExperimentResult(name="window-rigidity")
    problem = build_problem(config)
    dec = eigensolve(problem.op, config.solver.modes)
    sigma = source_pulse(*param(config, "pulse", PULSE))
    window = tuple(param(config, "window", WINDOW))
    times = np.linspace(FIRST_SAMPLE, window[1], SAMPLES)
    f1 = dec.nodal(0)
    f2 = dec.nodal(0) + 0.5 * dec.nodal(1)
    lam1 = float(dec.eigenvalues[0])

    verdicts: dict[str, WindowVerdict] = {}
    rows = []
    for alpha in (config.solver.alpha if config.solver.alpha < 1.0 else 0.5, 1.0):
        first = forward_source(dec, alpha, times, sigma, f1, support_before=problem.schedule.tau1)
        second = forward_source(dec, alpha, times, sigma, f2, support_before=problem.schedule.tau1)
        tag = f"{alpha:g}"
        verdicts[tag] = window_rigidity_experiment(first, second, window, alpha, sigma.end, TOLERANCE, lam1)
        same = window_rigidity_experiment(first, first, window, alpha, sigma.end, TOLERANCE, lam1)
        result.check(f"alpha_{tag}_identical_sources_norm", max(same.window_norm, same.caputo_norm), IDENTICAL_TOLERANCE)
        rows.extend((alpha, t, a - b) for t, a, b in zip(times, first.values[:, 0], second.values[:, 0]))

    fractional = next(v for v in verdicts.values() if v.alpha < 1.0)
    result.check("fractional_relative_window_norm", fractional.window_norm / fractional.peak, TOLERANCE, ">")
    classical = verdicts["1"]
    result.check("classical_within_envelope", float(bool(classical.within_envelope)), 1.0, "==")
    result.metric("fractional_relative_window_norm", fractional.window_norm / fractional.peak, rel_tol=1e-6)
    result.details["verdicts"] = {tag: v.to_json() for tag, v in verdicts.items()}
    report = InverseReport(window=fractional, diagnostics={"classical": classical.to_json()})
    keep(result, report.write_json(out / INVERSE_REPORT_NAME))

    keep(result, write_csv(out / "window_difference.csv", ["alpha", "time", "difference"], rows))
    result.plots.append(
        PlotPanel("flux difference of the two sources, alpha = 0.5", "window_difference.csv", 2, 3, where="$1 == 0.5")
    )
    log.info("window-rigidity: %s", {tag: v.verdict for tag, v in verdicts.items()})
    return result
