# fraclab/experiments/obstacle.py
"""obstacle-scan: locate a square obstacle from the p = 1 flux on Gamma_out by exhaustive search."""

import numpy as np

from fraclab.core.config import ObstacleSpec
from fraclab.core.logger import LoggerProxy
from fraclab.core.registry import experiment
from fraclab.core.result import ExperimentContext, ExperimentResult, PlotPanel
from fraclab.experiments.shared.problem import keep, param, square_domain, typed_config
from fraclab.numerics.inverse import INVERSE_REPORT_NAME, InverseReport, candidate_flux, obstacle_scan, translated_candidates

log = LoggerProxy(__name__)

CELLS = 64
TRUTH_CENTER = (0.5, 0.5)
HALF_WIDTH = 0.1
OFFSETS = (-0.2, -0.1, 0.0, 0.1, 0.2)
GAMMA_OUT = ["right", "top", "bottom"]
TRUTH_TOLERANCE = 1e-10
SEPARATION = 1e3
FLOOR_MINIMUM = 1e-12


def interiors_disjoint(a: ObstacleSpec, b: ObstacleSpec) -> bool:
    return any(abs(ca - cb) >= ha + hb for ca, cb, ha, hb in zip(a.center, b.center, a.half_width, b.half_width))


@experiment("obstacle-scan")
def obstacle(ctx: ExperimentContext) -> ExperimentResult:
    config = typed_config(ctx)
    out = ctx["output_dir"]
    result = ExperimentResult(name="obstacle-scan")
    cells = int(param(config, "cells", CELLS))
    half = float(param(config, "half_width", HALF_WIDTH))
    cx, cy = param(config, "truth_center", TRUTH_CENTER)
    offsets = np.asarray(param(config, "offsets", OFFSETS), dtype=float)
    p = float(param(config, "p", 1.0))
    alpha = config.solver.alpha

    truth_spec = ObstacleSpec(center=[float(cx), float(cy)], half_width=[half, half])
    domain_spec = square_domain(cells, gamma_out=GAMMA_OUT)
    truth = candidate_flux(domain_spec, config.coefficients, alpha, config.schedule, truth_spec, p)
    candidates = [None, *translated_candidates([half, half], cx + offsets, cy + offsets)]
    scan = obstacle_scan(domain_spec, config.coefficients, alpha, config.schedule, truth, candidates)
    keep(result, scan.write_csv(out / "obstacle_landscape.csv"))
    result.details["scan"] = scan.to_json()
    keep(result, InverseReport(obstacle=scan).write_json(out / INVERSE_REPORT_NAME))

    def objective_of(spec: ObstacleSpec) -> float | None:
        for entry in scan.candidates:
            if entry["center"] == list(spec.center) and entry["half_width"] == list(spec.half_width):
                return entry["objective"]
        return None

    floor = objective_of(truth_spec)
    if floor is None:
        raise RuntimeError("the true obstacle was not among the scored candidates")
    result.check("truth_objective", floor, TRUTH_TOLERANCE)
    best = scan.best or {}
    result.check("argmin_is_truth", float(best.get("center") == truth_spec.center), 1.0, "==")

    disjoint = [
        entry["objective"]
        for entry, spec in zip(scan.candidates, candidates)
        if spec is not None and entry["objective"] is not None and interiors_disjoint(spec, truth_spec)
    ]
    threshold = SEPARATION * max(floor, FLOOR_MINIMUM)
    result.check("disjoint_min_objective", min(disjoint) if disjoint else float("nan"), threshold, ">=")
    empty = scan.candidates[0]["objective"]
    if empty is not None:
        result.metric("empty_candidate_objective", empty, rel_tol=1e-6)
    skipped = [entry for entry in scan.candidates if entry["objective"] is None]
    result.details["skipped"] = len(skipped)

    result.plots.append(
        PlotPanel("objective by candidate center x", "obstacle_landscape.csv", 1, 5, logscale="y", label="objective")
    )
    log.info("obstacle-scan: best %s, %d disjoint candidates", best.get("center"), len(disjoint))
    return result
