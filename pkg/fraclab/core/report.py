# fraclab/core/report.py

import platform
from collections.abc import Sequence
from importlib import metadata
from pathlib import Path
from typing import Any

from fraclab.core.io import atomic_write_text, write_json
from fraclab.core.result import ExperimentResult, PlotPanel
from fraclab.core.state import REPORT_SCHEMA_VERSION, compute_artifact_hashes

REPORT_NAME = "report.json"
SUMMARY_NAME = "summary.md"
PLOT_NAME = "plot.gp"


def markdown_escape(text: str) -> str:
    return str(text).replace("|", "\\|")


def package_versions() -> dict[str, str]:
    versions = {"python": platform.python_version()}
    for dist in ("fraclab", "numpy", "scipy", "mpmath", "pydantic", "jsonschema"):
        try:
            versions[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            versions[dist] = "unknown"
    return versions


def render_gnuplot(experiment: str, panels: Sequence[PlotPanel]) -> str:
    lines = [
        f"# gnuplot script for the {experiment} experiment",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set grid",
        "set terminal pngcairo size 900,600",
    ]
    for index, panel in enumerate(panels):
        lines.append("")
        lines.append(f"set output '{experiment}-{index}.png'")
        lines.append(f"set title '{panel.title}'")
        lines.append("unset logscale")
        if panel.logscale:
            lines.append(f"set logscale {panel.logscale}")
        y_expr = f"({panel.where} ? ${panel.y_column} : 1/0)" if panel.where else f"{panel.y_column}"
        series = [f"'{panel.csv_name}' using {panel.x_column}:{y_expr} with linespoints"]
        if panel.label:
            series[0] += f" title '{panel.label}'"
        for column, label in panel.extra:
            series.append(f"'' using {panel.x_column}:{column} with lines title '{label}'")
        lines.append("plot " + ", \\\n     ".join(series))
    return "\n".join(lines) + "\n"


def render_summary(result: ExperimentResult) -> str:
    status = "PASS" if result.success else "FAIL"
    lines = [
        f"# {result.name}: {status}",
        "",
        "| Check | Value | Threshold | Passed |",
        "|-------|-------|-----------|--------|",
    ]
    for check in result.checks:
        lines.append(
            f"| {markdown_escape(check.name)} | {check.value:.6g} | "
            f"{check.comparison} {check.threshold:.6g} | {'yes' if check.passed else 'no'} |"
        )
    if result.metrics:
        lines += ["", "| Metric | Value |", "|--------|-------|"]
        lines += [
            f"| {markdown_escape(name)} | {value:.12g} |"
            for name, value in sorted(result.metrics.items())
        ]
    if result.messages:
        lines += ["", "## Messages", ""]
        lines += [f"- **{sev.value}**: {markdown_escape(msg)}" for sev, msg in result.messages]
    return "\n".join(lines) + "\n"


def build_report(
    result: ExperimentResult, config: dict[str, Any], output_dir: Path
) -> dict[str, Any]:
    payload = result.as_dict()
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "experiment": result.name,
        "status": "pass" if result.success else "fail",
        "checks": payload["checks"],
        "metrics": payload["metrics"],
        "tolerances": payload["tolerances"],
        "messages": payload["messages"],
        "details": payload["details"],
        "config": config,
        "artifacts": compute_artifact_hashes(result.artifacts, output_dir),
        "versions": package_versions(),
    }


def write_report(result: ExperimentResult, config: dict[str, Any], output_dir: Path) -> Path:
    """Write plot script, Markdown summary and report JSON; returns the report path."""
    if result.plots:
        result.artifacts.append(
            atomic_write_text(output_dir / PLOT_NAME, render_gnuplot(result.name, result.plots))
        )
    atomic_write_text(output_dir / SUMMARY_NAME, render_summary(result))
    report = build_report(result, config, output_dir)
    return write_json(output_dir / REPORT_NAME, report)
