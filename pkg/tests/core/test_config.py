import json
from pathlib import Path

import pytest

from fraclab.core.config import (
    DEFAULT_OUTPUT_ROOT,
    OUTPUT_ROOT_ENV,
    DomainSpec,
    LaplaceSpec,
    ScheduleSpec,
    default_config,
    fill_defaults,
    load_config,
    resolve_config,
    resolve_output_dir,
)
from fraclab.core.errors import EXIT_CONFIG, ConfigError


def write(tmp_path: Path, document) -> Path:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(document) if not isinstance(document, str) else document)
    return path


def test_defaults_are_filled_into_nested_sections():
    merged = default_config("alpha-recovery")
    assert merged["domain"]["cells"] == [256]
    assert merged["coefficients"]["q"]["base"] == 0.0
    assert merged["coefficients"]["a"] == {"base": 1.0, "bumps": []}
    assert merged["logging"]["console"] == "rich"
    assert merged["laplace"]["tail_threshold"] == pytest.approx(1e-12)


def test_fill_defaults_does_not_mutate_input():
    document = {"experiment": "hopf-check"}
    filled = fill_defaults(document)
    assert document == {"experiment": "hopf-check"}
    assert "domain" in filled


def test_user_values_override_defaults(tmp_path):
    path = write(tmp_path, {"experiment": "alpha-recovery", "solver": {"alpha": 0.8}, "domain": {"cells": [64]}})
    merged, typed = load_config(path)
    assert typed.solver.alpha == 0.8
    assert typed.solver.steps == 2048
    assert typed.domain.cells == [64]
    assert merged["solver"]["time_points"] == 200


@pytest.mark.parametrize(
    "document, field",
    [
        ({}, "<root>"),
        ({"experiment": "no-such-experiment"}, "experiment"),
        ({"experiment": "alpha-recovery", "unexpected": 1}, "<root>"),
        ({"experiment": "alpha-recovery", "domain": {"cells": [4]}}, "domain.cells.0"),
        ({"experiment": "alpha-recovery", "solver": {"alpha": 2.5}}, "solver.alpha"),
    ],
)
def test_schema_violations_carry_field_paths(tmp_path, document, field):
    with pytest.raises(ConfigError) as err:
        load_config(write(tmp_path, document))
    assert err.value.field_path == field
    assert err.value.exit_code == EXIT_CONFIG


def test_typed_model_errors_become_config_errors(tmp_path):
    document = {"experiment": "alpha-recovery", "schedule": {"tau1": 1.0, "tau2": 0.5}}
    with pytest.raises(ConfigError, match="tau2"):
        load_config(write(tmp_path, document))


def test_cells_must_match_dimension(tmp_path):
    document = {"experiment": "obstacle-scan", "domain": {"dim": 2}}
    with pytest.raises(ConfigError) as err:
        load_config(write(tmp_path, document))
    assert err.value.field_path.startswith("domain")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.json")


def test_invalid_json(tmp_path):
    with pytest.raises(ConfigError, match="invalid JSON at line 1"):
        load_config(write(tmp_path, "{not json"))


def test_non_object_document(tmp_path):
    with pytest.raises(ConfigError, match="JSON object"):
        load_config(write(tmp_path, "[1, 2]"))


def test_resolve_config_round_trips_a_merged_document():
    merged, typed = resolve_config({"experiment": "telescoping", "seed": 7})
    again, typed_again = resolve_config(merged)
    assert again == merged
    assert typed_again == typed


def test_output_dir_resolution(monkeypatch, tmp_path):
    _, typed = resolve_config({"experiment": "hopf-check"})
    monkeypatch.delenv(OUTPUT_ROOT_ENV, raising=False)
    assert resolve_output_dir(typed) == DEFAULT_OUTPUT_ROOT / "hopf-check"
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
    assert resolve_output_dir(typed) == tmp_path / "hopf-check"
    _, explicit = resolve_config({"experiment": "hopf-check", "output_dir": str(tmp_path / "here")})
    assert resolve_output_dir(explicit) == tmp_path / "here"


@pytest.mark.parametrize(
    "factory",
    [
        lambda: DomainSpec(dim=1, cells=[16], gamma_in=["top"]),
        lambda: DomainSpec(dim=2, cells=[16]),
        lambda: ScheduleSpec(components=1, plateaus=[0.5]),
        lambda: LaplaceSpec(p_min=2.0, p_max=1.0),
        lambda: LaplaceSpec(theta1=1.0),
    ],
)
def test_model_validators(factory):
    with pytest.raises(ValueError):
        factory()


def test_models_are_frozen():
    spec = DomainSpec()
    with pytest.raises(ValueError):
        spec.length = 2.0
