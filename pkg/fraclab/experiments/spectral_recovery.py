# fraclab/experiments/spectral_recovery.py
"""
spectral-recovery: eigenvalues and boundary flux traces of eigenfunctions from Laplace-domain pole
fitting of a single Neumann measurement.
"""

import numpy as np

from fraclab.core.errors import ConfigError
from fraclab.core.logger import LoggerProxy
from fraclab.core.registry import experiment
from fraclab.core.result import ExperimentContext, ExperimentResult, PlotPanel, Severity
from fraclab.experiments.shared.problem import Problem, build_problem, keep, param, pulse_grid, relative_max, typed_config
from fraclab.numerics.inverse import INVERSE_REPORT_NAME, InverseReport, fit_spectral_data
from fraclab.numerics.laplace import LaplaceSamples, dtn_apply, p1_threshold, resolvent_flux_samples, transform
from fraclab.numerics.spectral import coupling_identity_errors, eigensolve, forward_dirichlet, parseval_partial_sums

log = LoggerProxy(__name__)

N_MODES = 3
EIGENVALUE_TOLERANCE = 0.01
CROSS_RATIO_TOLERANCE = 0.02
P_MIN, P_MAX, P_COUNT = 0.25, 1e4, 60
TRACE_P_MAX = 16.0
HORIZON = 40.0
COUPLING_TOLERANCE = 1e-8
PARSEVAL_EXCESS = 1e-9


def observation_nodes(problem: Problem) -> np.ndarray:
    domain = problem.domain
    return domain.nodes_on(domain.sides)


def unit_input_samples(problem: Problem, alpha: float, p_values: np.ndarray, nodes: np.ndarray) -> LaplaceSamples:
    """DtN response to the first spatial profile with a unit transform psi_hat(p) = 1."""
    boundary = problem.schedule.spatial(1)
    values = np.stack([dtn_apply(problem.op, alpha, p, boundary, nodes) for p in p_values])
    return LaplaceSamples(p_values, values, nodes, np.zeros(p_values.size), p1_threshold(problem.op, alpha), "exact")


@experiment("spectral-recovery")
def spectral_recovery(ctx: ExperimentContext) -> ExperimentResult:
    config = typed_config(ctx)
    out = ctx["output_dir"]
    result = ExperimentResult(name="spectral-recovery")
    problem = build_problem(config)
    alpha = config.solver.alpha
    schedule = problem.schedule
    n_modes = int(param(config, "n_modes", N_MODES))
    source = param(config, "data_source", "resolvent")
    if source not in ("resolvent", "trace"):
        raise ConfigError(f"unknown data source '{source}'", field_path="params.data_source")

    dec = eigensolve(problem.op, config.solver.modes)
    keep(result, dec.write_json(out / "eigen.json"))
    lead = schedule.chi * schedule.eta[0]
    coupling = coupling_identity_errors(dec, lead)
    result.check("coupling_identity_max_rel_error", max(coupling["relative_error"]), COUPLING_TOLERANCE)
    partial, limit = parseval_partial_sums(dec, lead)
    result.check("parseval_partial_sum_decreases", int(np.count_nonzero(np.diff(partial) < 0)), 0, "==")
    result.check("parseval_partial_sum_excess", (partial[-1] - limit) / limit, PARSEVAL_EXCESS, "<=")
    result.details["coupling_identity"] = coupling
    nodes = observation_nodes(problem)
    weight = float(schedule.weights[0])
    p_values = np.geomspace(P_MIN, P_MAX, P_COUNT)

    times = np.concatenate([[0.0], pulse_grid(schedule.profiles[0], float(param(config, "horizon", HORIZON)))])
    trace = forward_dirichlet(dec, schedule, alpha, times, component=1, observe=nodes)
    low = p_values[p_values <= TRACE_P_MAX]
    from_trace = transform(trace, low, config.laplace.tail_threshold, config.laplace.extend_tail)
    exact = resolvent_flux_samples(problem.op, alpha, low, schedule, components=[1], observe=nodes)
    consistency = relative_max(from_trace.values, exact.values)
    result.metric("trace_vs_resolvent_rel_error", consistency, rel_tol=1e-2)
    result.details["trace_transform_tail_model"] = from_trace.tail_model
    keep(result, from_trace.write_csv(out / "trace_laplace.csv"))

    if source == "resolvent":
        samples = unit_input_samples(problem, alpha, p_values, nodes)
        fit = fit_spectral_data(samples, alpha, n_modes, profile=None, weight=weight)
    else:
        samples = from_trace
        fit = fit_spectral_data(samples, alpha, n_modes, profile=schedule.profiles[0], weight=weight)
    keep(result, samples.write_csv(out / "laplace_samples.csv"))
    result.details["fit"] = fit.to_json()

    if not fit.reliable:
        result.note(Severity.WARNING, f"clustered leading poles {fit.clusters}; eigenvalue checks are unreliable")
    truth = dec.eigenvalues[:n_modes]
    for k in range(n_modes):
        error = abs(fit.eigenvalues[k] - truth[k]) / truth[k]
        result.check(f"lambda_{k + 1}_rel_error", error, EIGENVALUE_TOLERANCE)
        result.metric(f"lambda_{k + 1}_hat", fit.eigenvalues[k], rel_tol=1e-4)

    traces = dec.traces_at(nodes)
    first, second = 0, nodes.size - 1
    worst = 0.0
    for k in range(n_modes):
        for j in range(k + 1, n_modes):
            fitted = fit.cross_ratio(k, j, first, second)
            expected = traces[first, k] * traces[second, j] / (traces[second, k] * traces[first, j])
            worst = max(worst, abs(fitted - expected) / abs(expected))
    result.check("cross_ratio_max_rel_error", worst, CROSS_RATIO_TOLERANCE)

    coefficients = config.coefficients
    if problem.domain.dim == 1 and not (coefficients.a.bumps or coefficients.rho.bumps or coefficients.q.bumps or coefficients.drift):
        right = int(np.flatnonzero(nodes == problem.domain.side_nodes("right")[0])[0])
        signs = np.sign(fit.residues[:, right])
        repeats = int(np.count_nonzero(signs[1:] == signs[:-1]))
        result.check("right_residue_sign_alternation_misses", repeats, 0, "==")

    report = InverseReport(spectral=fit, diagnostics={"coupling_identity": coupling, "parseval_limit": limit})
    keep(result, report.write_json(out / INVERSE_REPORT_NAME))

    result.plots.append(
        PlotPanel("Laplace samples at the first observation node", "laplace_samples.csv", 1, 3, logscale="x", where=f"$2 == {int(nodes[0])}")
    )
    log.info("spectral-recovery: lambda_hat %s vs %s", np.round(fit.eigenvalues, 5).tolist(), np.round(truth, 5).tolist())
    return result
