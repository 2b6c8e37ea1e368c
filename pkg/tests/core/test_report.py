import json
from pathlib import Path

from fraclab.core.report import (
    PLOT_NAME,
    REPORT_NAME,
    SUMMARY_NAME,
    build_report,
    markdown_escape,
    render_gnuplot,
    render_summary,
    write_report,
)
from fraclab.core.result import ExperimentResult, PlotPanel, Severity
from fraclab.core.state import load_report


def sample_result(tmp_path: Path) -> ExperimentResult:
    result = ExperimentResult(name="demo")
    result.check("error|max", 1e-9, 1e-8)
    result.metric("lambda_1", 9.8696)
    result.note(Severity.WARNING, "tail | risk")
    artifact = tmp_path / "data.csv"
    artifact.write_text("t,v\n0,1\n")
    result.artifacts.append(artifact)
    return result


def test_markdown_escape_pipes():
    assert markdown_escape("a|b") == "a\\|b"


def test_summary_tables(tmp_path):
    summary = render_summary(sample_result(tmp_path))
    assert summary.startswith("# demo: PASS\n")
    assert "| error\\|max | 1e-09 | < 1e-08 | yes |" in summary
    assert "| lambda_1 | 9.8696 |" in summary
    assert "- **warning**: tail \\| risk" in summary


def test_gnuplot_script_filters_and_overlays():
    script = render_gnuplot(
        "demo",
        [
            PlotPanel("flux", "trace.csv", 1, 3, logscale="xy", label="flux", where="$2 == 0", extra=[(4, "bound")]),
            PlotPanel("plain", "other.csv", 1, 2),
        ],
    )
    assert "set output 'demo-0.png'" in script
    assert "set logscale xy" in script
    assert "'trace.csv' using 1:($2 == 0 ? $3 : 1/0) with linespoints title 'flux'" in script
    assert "'' using 1:4 with lines title 'bound'" in script
    assert "'other.csv' using 1:2 with linespoints" in script


def test_report_hashes_artifacts_relative_to_output(tmp_path):
    report = build_report(sample_result(tmp_path), {"experiment": "demo"}, tmp_path)
    assert list(report["artifacts"]) == ["data.csv"]
    assert report["status"] == "pass"
    assert "numpy" in report["versions"]


def test_write_report_produces_loadable_files(tmp_path):
    result = sample_result(tmp_path)
    result.plots.append(PlotPanel("t", "data.csv", 1, 2))
    path = write_report(result, {"experiment": "demo"}, tmp_path)
    assert path == tmp_path / REPORT_NAME
    assert (tmp_path / SUMMARY_NAME).is_file()
    assert (tmp_path / PLOT_NAME).is_file()
    report = load_report(path)
    assert PLOT_NAME in report.artifacts
    assert report.metrics == {"lambda_1": 9.8696}
    assert json.loads(path.read_text())["checks"][0]["passed"] is True
