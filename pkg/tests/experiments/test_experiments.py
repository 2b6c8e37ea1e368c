import json

import pytest

from fraclab.core.config import resolve_config
from fraclab.core.state import load_report
from fraclab.main import execute

SHIPPED = [
    "alpha-recovery",
    "spectral-recovery",
    "source-recovery",
    "obstacle-scan",
    "dtn-compare",
    "window-rigidity",
    "solver-crosscheck",
    "kernel-validation",
    "weak-solution",
    "telescoping",
    "hopf-check",
]

# experiments whose inverse step writes its own structured report
WITH_INVERSE_REPORT = {
    "alpha-recovery",
    "spectral-recovery",
    "source-recovery",
    "obstacle-scan",
    "dtn-compare",
    "window-rigidity",
}


@pytest.mark.slow
@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_experiment_passes_with_defaults(name, tmp_path):
    document, config = resolve_config({"experiment": name})
    result, report_path = execute(document, config, tmp_path)

    failed = [str(check) for check in result.checks if not check.passed]
    assert result.success, failed
    report = load_report(report_path)
    assert report.status == "pass"
    assert report.experiment == name
    assert (tmp_path / "summary.md").is_file()
    assert (tmp_path / "plot.gp").is_file() == bool(result.plots)
    for artifact in report.artifacts:
        assert (tmp_path / artifact).is_file()
    if name in WITH_INVERSE_REPORT:
        payload = json.loads((tmp_path / "inverse_report.json").read_text())
        assert payload
