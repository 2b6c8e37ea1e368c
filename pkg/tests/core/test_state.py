import json
import math
import tempfile
import unittest
from pathlib import Path

from fraclab.core.errors import ConfigError
from fraclab.core.state import (
    REPORT_SCHEMA_VERSION,
    check_drift,
    compare_metrics,
    compute_artifact_hashes,
    compute_file_hash,
    load_report,
)


class TestArtifactDrift(unittest.TestCase):
    def test_drift_unchanged(self):
        """Unchanged artifacts do not trigger drift."""
        with tempfile.TemporaryDirectory() as td:
            root = Path(td)
            f1 = root / "f1.csv"
            f1.write_text("x\n1\n")

            self.assertEqual(check_drift(compute_artifact_hashes([f1], root), compute_artifact_hashes([f1], root)), [])

    def test_drift_changed_file(self):
        with tempfile.TemporaryDirectory() as td:
            root = Path(td)
            f1 = root / "f1.csv"
            f1.write_text("x\n1\n")
            before = compute_artifact_hashes([f1], root)

            f1.write_text("x\n2\n")
            self.assertEqual(check_drift(before, compute_artifact_hashes([f1], root)), ["f1.csv"])

    def test_drift_deleted_and_added_files(self):
        with tempfile.TemporaryDirectory() as td:
            root = Path(td)
            f1, f2 = root / "f1.csv", root / "sub" / "f2.csv"
            f1.write_text("a")
            f2.parent.mkdir()
            f2.write_text("b")
            before = compute_artifact_hashes([f1], root)
            after = compute_artifact_hashes([f1, f2], root)
            self.assertEqual(check_drift(before, after), ["sub/f2.csv"])

            f1.unlink()
            self.assertEqual(check_drift(after, compute_artifact_hashes([f1, f2], root)), ["f1.csv"])

    def test_hash_skips_symlinks_and_missing_files(self):
        with tempfile.TemporaryDirectory() as td:
            root = Path(td)
            target = root / "real.txt"
            target.write_text("data")
            link = root / "link.txt"
            link.symlink_to(target)

            self.assertTrue(compute_file_hash(target).startswith("sha256:"))
            self.assertIsNone(compute_file_hash(link))
            self.assertIsNone(compute_file_hash(root / "absent.txt"))


class TestMetricComparison(unittest.TestCase):
    def test_within_tolerance(self):
        self.assertEqual(compare_metrics({"m": 1.0}, {"m": 1.0 + 1e-12}, {}), {})

    def test_beyond_recorded_tolerance(self):
        diffs = compare_metrics({"m": 1.0}, {"m": 1.01}, {"m": 1e-3})
        self.assertEqual(diffs["m"]["rel_tol"], 1e-3)
        self.assertEqual(diffs["m"]["replayed"], 1.01)

    def test_loose_tolerance_accepts(self):
        self.assertEqual(compare_metrics({"m": 1.0}, {"m": 1.01}, {"m": 0.1}), {})

    def test_missing_and_nan_metrics(self):
        diffs = compare_metrics({"a": 1.0, "b": math.nan}, {"b": math.nan, "c": 2.0}, {})
        self.assertEqual(sorted(diffs), ["a", "c"])


class TestReportLoading(unittest.TestCase):
    def test_valid_report(self):
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "report.json"
            path.write_text(json.dumps({"experiment": "hopf-check", "status": "pass", "config": {}, "extra": 1}))
            report = load_report(path)
            self.assertEqual(report.schema_version, REPORT_SCHEMA_VERSION)
            self.assertEqual(report.status, "pass")

    def test_unreadable_report(self):
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "report.json"
            path.write_text("{")
            with self.assertRaises(ConfigError):
                load_report(path)
            with self.assertRaises(ConfigError):
                load_report(Path(td) / "absent.json")

    def test_schema_mismatch_names_the_field(self):
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "report.json"
            path.write_text(json.dumps({"experiment": "hopf-check", "status": "pass"}))
            with self.assertRaises(ConfigError) as ctx:
                load_report(path)
            self.assertEqual(ctx.exception.field_path, "config")
