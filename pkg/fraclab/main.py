# fraclab/main.py

import importlib
import logging
from pathlib import Path
from typing import Annotated, Any

import numpy as np
import typer

from fraclab.core.config import ExperimentConfig, default_config, load_config, resolve_config, resolve_output_dir
from fraclab.core.errors import EXIT_ASSERTION, EXIT_OK, EXIT_SOLVER, ConfigError, FraclabError
from fraclab.core.io import write_json
from fraclab.core.logger import LoggerProxy, setup_logging
from fraclab.core.registry import EXPERIMENT_PACKAGE, ExperimentFunc, get_experiment_registry
from fraclab.core.report import write_report
from fraclab.core.result import ExperimentContext, ExperimentResult
from fraclab.core.state import check_drift, compare_metrics, load_report

log = LoggerProxy(__name__)

app = typer.Typer(help="Fractional diffusion inverse-problem lab")

# Explicit allowlist of experiment modules; nothing else is imported by name.
ALLOWED_MODULES = [
    "alpha",
    "crosscheck",
    "dtn",
    "hopf",
    "kernel",
    "obstacle",
    "sources",
    "spectral_recovery",
    "telescoping",
    "weak_solution",
    "window",
]

REPLAY_DIR = "replay"
REPLAY_DIFF = "replay-diff.json"

_options: dict[str, bool] = {"verbose": False}


def discover_experiments() -> dict[str, ExperimentFunc]:
    """
    Import the allowlisted experiment modules and return the registered runners whose
    defining module is one of them.
    """
    for module_name in ALLOWED_MODULES:
        full_module_name = f"{EXPERIMENT_PACKAGE}{module_name}"
        try:
            importlib.import_module(full_module_name)
        except Exception as e:
            log.error("Could not import %s: %s", full_module_name, e)

    allowed = {f"{EXPERIMENT_PACKAGE}{m}" for m in ALLOWED_MODULES}
    experiments = {}
    for name, fn in get_experiment_registry().items():
        module_name = getattr(fn, "__module__", "") or ""
        if module_name in allowed:
            experiments[name] = fn
        else:
            logging.warning("Rejecting experiment '%s' outside ALLOWED_MODULES (module %s)", name, module_name)
    return experiments


def execute(document: dict[str, Any], config: ExperimentConfig, output_dir: Path) -> tuple[ExperimentResult, Path]:
    """Run one experiment into ``output_dir`` and write its report."""
    experiments = discover_experiments()
    runner = experiments.get(config.experiment)
    if runner is None:
        raise ConfigError(f"experiment '{config.experiment}' is not registered", field_path="experiment")

    output_dir.mkdir(parents=True, exist_ok=True)
    context: ExperimentContext = {
        "config": document,
        "output_dir": output_dir,
        "rng": np.random.default_rng(config.seed),
    }
    log.info("Running '%s' into %s", config.experiment, output_dir)
    result = runner(context)
    for severity, message in result.messages:
        getattr(log, severity.log_method())(message)
    report_path = write_report(result, document, output_dir)
    return result, report_path


def _fail(error: Exception) -> typer.Exit:
    if isinstance(error, FraclabError):
        typer.secho(f"ERROR: {error}", fg=typer.colors.RED, err=True)
        return typer.Exit(code=error.exit_code)
    log.exception("Unexpected failure")
    typer.secho(f"ERROR: unexpected {type(error).__name__}: {error}", fg=typer.colors.RED, err=True)
    return typer.Exit(code=EXIT_SOLVER)


def _print_result(result: ExperimentResult, report_path: Path) -> None:
    colour = typer.colors.GREEN if result.success else typer.colors.RED
    typer.secho(str(result), fg=colour)
    for check in result.checks:
        mark = "ok  " if check.passed else "FAIL"
        typer.echo(f"  [{mark}] {check.name}: {check.value:.6g} {check.comparison} {check.threshold:.6g}")
    typer.echo(f"[REPORT] {report_path}")


@app.callback()
def main(
    verbose: Annotated[bool, typer.Option("--verbose", "-v", help="Log at DEBUG level.")] = False,
) -> None:
    _options["verbose"] = verbose


@app.command("run")
def run(config_path: Annotated[Path, typer.Argument(help="Experiment configuration (JSON).")]) -> None:
    """
    Run the experiment named in CONFIG_PATH and write CSVs, plot.gp, summary.md and report.json.
    Exit status: 0 pass, 1 failed check, 2 configuration error, 3 solver error.
    """
    setup_logging({}, _options["verbose"])
    try:
        document, config = load_config(config_path)
        output_dir = resolve_output_dir(config)
        setup_logging(document, _options["verbose"], output_dir)
        result, report_path = execute(document, config, output_dir)
    except Exception as e:
        raise _fail(e) from e
    _print_result(result, report_path)
    raise typer.Exit(code=EXIT_OK if result.success else EXIT_ASSERTION)


@app.command("replay")
def replay(report_path: Annotated[Path, typer.Argument(help="A report.json written by 'run'.")]) -> None:
    """
    Re-run the configuration embedded in REPORT_PATH into <report dir>/replay and compare its
    metrics (within the recorded tolerances) and artifact fingerprints.
    """
    setup_logging({}, _options["verbose"])
    try:
        recorded = load_report(report_path)
        document, config = resolve_config(recorded.config)
        output_dir = report_path.parent / REPLAY_DIR
        setup_logging(document, _options["verbose"], output_dir)
        result, fresh_path = execute(document, config, output_dir)
        fresh = load_report(fresh_path)
    except Exception as e:
        raise _fail(e) from e

    metric_diffs = compare_metrics(recorded.metrics, fresh.metrics, recorded.tolerances)
    drift = check_drift(recorded.artifacts, fresh.artifacts)
    status_changed = recorded.status != fresh.status
    if metric_diffs or drift or status_changed:
        diff_path = write_json(
            report_path.parent / REPLAY_DIFF,
            {
                "report": str(report_path),
                "replay": str(fresh_path),
                "metrics": metric_diffs,
                "artifacts": drift,
                "status": {"recorded": recorded.status, "replayed": fresh.status},
            },
        )
        typer.secho(
            f"Replay mismatch: {len(metric_diffs)} metric(s), {len(drift)} artifact(s); see {diff_path}",
            fg=typer.colors.RED,
        )
        raise typer.Exit(code=EXIT_ASSERTION)
    typer.secho(f"Replay of {recorded.experiment} matches ({len(fresh.metrics)} metrics, {len(fresh.artifacts)} artifacts)", fg=typer.colors.GREEN)
    raise typer.Exit(code=EXIT_OK)


@app.command("validate")
def validate(config_path: Annotated[Path, typer.Argument(help="Experiment configuration (JSON).")]) -> None:
    """Validate CONFIG_PATH against the schema and the typed model without running anything."""
    setup_logging({}, _options["verbose"])
    try:
        _, config = load_config(config_path)
    except Exception as e:
        raise _fail(e) from e
    typer.secho(f"{config_path}: valid '{config.experiment}' configuration", fg=typer.colors.GREEN)


@app.command("list-experiments")
def list_experiments() -> None:
    """List the registered experiments."""
    experiments = discover_experiments()
    typer.echo(f"{'Experiment':20} | {'Module':40}")
    typer.echo("-" * 63)
    for name in sorted(experiments):
        typer.echo(f"{name:20} | {experiments[name].__module__:40}")


@app.command("init-config")
def init_config(
    experiment: Annotated[str, typer.Argument(help="Experiment name, e.g. alpha-recovery.")],
    output: Annotated[Path | None, typer.Option("--output", "-o", help="Destination file.")] = None,
    force: Annotated[bool, typer.Option("--force", help="Overwrite an existing file.")] = False,
) -> None:
    """Write a configuration with every schema default filled in."""
    setup_logging({}, _options["verbose"])
    destination = output or Path(f"{experiment}.json")
    if destination.exists() and not force:
        typer.secho(f"{destination} already exists; use --force to overwrite.", fg=typer.colors.RED, err=True)
        raise typer.Exit(code=1)
    try:
        document = default_config(experiment)
    except Exception as e:
        raise _fail(e) from e
    write_json(destination, document)
    typer.echo(f"Default configuration written to {destination}")


if __name__ == "__main__":
    app()
