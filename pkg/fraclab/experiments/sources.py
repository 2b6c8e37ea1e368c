# fraclab/experiments/sources.py
"""source-recovery: modal coefficients of the initial value and of the source from one flux trace."""

import numpy as np

from fraclab.core.io import write_csv
from fraclab.core.logger import LoggerProxy
from fraclab.core.registry import experiment
from fraclab.core.result import ExperimentContext, ExperimentResult, PlotPanel
from fraclab.experiments.shared.problem import build_problem, keep, param, p_grid, relative_max, typed_config, with_noise
from fraclab.numerics.excitation import source_pulse
from fraclab.numerics.inverse import INVERSE_REPORT_NAME, InverseReport, SourceRecovery, recover_source_laplace, recover_sources
from fraclab.numerics.laplace import resolvent_flux_samples
from fraclab.numerics.spectral import TimeTrace, eigensolve, forward_source

log = LoggerProxy(__name__)

N_MODES = 5
SPLIT_TOLERANCE = 0.05
SINGLE_TOLERANCE = 0.03
LEAKAGE_TOLERANCE = 0.01
PULSE = (0.2, 0.5)
SAMPLES = 400
FIRST_SAMPLE = 0.005
HORIZON = 3.0


@experiment("source-recovery")
def source_recovery(ctx: ExperimentContext) -> ExperimentResult:
    config = typed_config(ctx)
    out = ctx["output_dir"]
    result = ExperimentResult(name="source-recovery")
    problem = build_problem(config)
    alpha = config.solver.alpha
    n_modes = int(param(config, "n_modes", N_MODES))
    dec = eigensolve(problem.op, config.solver.modes)
    domain = problem.domain
    nodes = domain.nodes_on(domain.sides)

    sigma = source_pulse(*param(config, "pulse", PULSE))
    u0 = dec.nodal(0)
    f = dec.nodal(0) + 0.5 * dec.nodal(1)
    true_ic = dec.project(u0)[:n_modes]
    true_source = dec.source_modes(f)[:n_modes]
    times = np.linspace(FIRST_SAMPLE, HORIZON, SAMPLES)

    def measure(f_values: np.ndarray | None, u0_values: np.ndarray | None) -> TimeTrace:
        trace = forward_source(dec, alpha, times, sigma, f_values, u0_values, observe=nodes)
        return with_noise(trace, config.noise.std, ctx["rng"])

    trace = measure(f, u0)
    keep(result, trace.write_csv(out / "source_trace.csv"))

    recoveries: dict[str, SourceRecovery] = {
        "vi": recover_sources(trace, dec, alpha, sigma, "vi", n_modes=n_modes),
        "iv": recover_sources(trace, dec, alpha, sigma, "iv", n_modes=n_modes, known_source=true_source),
        "v": recover_sources(trace, dec, alpha, sigma, "v", n_modes=n_modes, known_ic=true_ic),
    }
    samples = resolvent_flux_samples(problem.op, alpha, p_grid(config.laplace), sigma=sigma, f=f, u0=u0, observe=nodes)
    recoveries["laplace"] = recover_source_laplace(samples, dec, alpha, sigma, n_modes, known_ic=true_ic)

    vi = recoveries["vi"]
    result.check("vi_ic_rel_error", relative_max(vi.ic_modes, true_ic), SPLIT_TOLERANCE)
    result.check("vi_source_rel_error", relative_max(vi.source_modes, true_source), SPLIT_TOLERANCE)
    result.check("iv_ic_rel_error", relative_max(recoveries["iv"].ic_modes, true_ic), SINGLE_TOLERANCE)
    result.check("v_source_rel_error", relative_max(recoveries["v"].source_modes, true_source), SINGLE_TOLERANCE)
    result.check("laplace_source_rel_error", relative_max(recoveries["laplace"].source_modes, true_source), SINGLE_TOLERANCE)
    for split, found in recoveries.items():
        result.metric(f"{split}_ic_mode_1", found.ic_modes[0], rel_tol=1e-6)
        result.metric(f"{split}_source_mode_1", found.source_modes[0], rel_tol=1e-6)

    silent = TimeTrace(times, np.zeros((times.size, nodes.size)), nodes)
    zero = recover_sources(silent, dec, alpha, sigma, "vi", n_modes=n_modes)
    result.check("zero_trace_max_coefficient", float(np.abs(np.concatenate([zero.ic_modes, zero.source_modes])).max()), 0.0, "==")

    single = recover_sources(measure(dec.nodal(1), None), dec, alpha, sigma, "v", n_modes=n_modes)
    leakage = abs(single.source_modes[0]) / abs(single.source_modes[1])
    result.check("mode_2_leakage_into_mode_1", leakage, LEAKAGE_TOLERANCE, "<=")

    result.details["truth"] = {"ic_modes": true_ic.tolist(), "source_modes": true_source.tolist()}
    result.details["recoveries"] = {split: found.to_json() for split, found in recoveries.items()}
    report = InverseReport(sources=vi, diagnostics={split: found.to_json() for split, found in recoveries.items() if split != "vi"})
    keep(result, report.write_json(out / INVERSE_REPORT_NAME))
    rows = [
        (split, k + 1, found.ic_modes[k], found.source_modes[k], true_ic[k], true_source[k])
        for split, found in recoveries.items()
        for k in range(true_ic.size)
    ]
    keep(result, write_csv(out / "source_modes.csv", ["split", "mode", "ic", "source", "ic_true", "source_true"], rows))
    result.plots.append(
        PlotPanel("flux at the first observation node", "source_trace.csv", 1, 3, where=f"$2 == {int(nodes[0])}")
    )
    log.info("source-recovery: vi ic %s, source %s", np.round(vi.ic_modes, 4).tolist(), np.round(vi.source_modes, 4).tolist())
    return result
