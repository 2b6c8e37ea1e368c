import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.integrate import quad

from fraclab.core.config import DomainSpec, ScheduleSpec
from fraclab.core.errors import ParameterError
from fraclab.numerics.domain import build_domain
from fraclab.numerics.excitation import (
    SmoothProfile,
    build_schedule,
    bump_mass,
    profile_laplace,
    source_pulse,
    unit_bump,
    unit_step,
    unit_step_derivative,
)


@pytest.fixture
def rod():
    return build_domain(DomainSpec(cells=[32]))


@pytest.fixture
def plate():
    return build_domain(DomainSpec(dim=2, cells=[32, 32]))


def test_unit_step_shape():
    x = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    np.testing.assert_allclose(unit_step(x), [0.0, 0.0, 0.5, 1.0, 1.0])
    assert np.all(np.diff(unit_step(np.linspace(0.0, 1.0, 101))) >= 0)


def test_unit_step_derivative_integrates_to_one():
    area, _ = quad(lambda x: float(unit_step_derivative(x)), 0.0, 1.0, epsabs=0.0, epsrel=1e-12)
    assert area == pytest.approx(1.0, rel=1e-10)


def test_bump_has_unit_mass_and_compact_support():
    assert bump_mass() == pytest.approx(0.00702985, rel=1e-5)
    area, _ = quad(lambda x: float(unit_bump(x)), 0.0, 1.0, epsabs=0.0, epsrel=1e-12)
    assert area == pytest.approx(1.0, rel=1e-10)
    assert unit_bump(0.0) == 0.0
    assert unit_bump(1.0) == 0.0


@pytest.mark.parametrize("start, end, kind", [(1.0, 1.0, "step"), (2.0, 1.0, "bump"), (0.0, 1.0, "ramp")])
def test_profile_rejects_bad_arguments(start, end, kind):
    with pytest.raises(ParameterError):
        SmoothProfile(start, end, 1.0, kind)


def test_source_pulse_carries_its_mass():
    sigma = source_pulse(0.2, 0.5, mass=2.0)
    area, _ = quad(lambda t: float(sigma.value(t)), 0.2, 0.5, epsabs=0.0, epsrel=1e-12)
    assert area == pytest.approx(2.0, rel=1e-9)
    assert sigma.final_value() == 0.0


def test_step_profile_levels():
    profile = SmoothProfile(1.0, 2.0, level=3.0)
    assert profile.value(0.5) == 0.0
    assert profile.value(5.0) == 3.0
    assert profile.final_value() == 3.0
    assert profile.w3_norm() > 3.0


@pytest.mark.parametrize("profile", [SmoothProfile(0.5, 0.75, 1.0, "bump"), SmoothProfile(0.25, 0.5, 2.0, "step")])
def test_profile_laplace_matches_integration_by_parts(profile):
    # L[psi](p) = (1/p) int e^{-pt} psi'(t) dt since psi(0) = 0
    for p in (0.5, 1.0, 20.0):
        by_parts, _ = quad(
            lambda t, p=p: math.exp(-p * t) * float(profile.derivative(t)),
            profile.start,
            profile.end,
            epsabs=0.0,
            epsrel=1e-12,
        )
        assert profile_laplace(profile, p) == pytest.approx(by_parts / p, rel=1e-9)


def test_profile_laplace_rejects_nonpositive_p():
    with pytest.raises(ParameterError):
        profile_laplace(SmoothProfile(0.0, 1.0), np.array([1.0, 0.0]))


def test_schedule_staircase_times_and_profiles(rod):
    schedule = build_schedule(rod, ScheduleSpec(tau1=0.5, tau2=1.0, components=3, plateaus=[0.0, 2.0]))
    np.testing.assert_allclose(schedule.step_times, [0.5, 0.75, 0.875, 0.9375, 0.96875, 0.984375, 0.9921875])
    assert [p.kind for p in schedule.profiles] == ["bump", "step", "step"]
    assert (schedule.profiles[1].start, schedule.profiles[1].end) == (0.875, 0.9375)
    np.testing.assert_allclose(schedule.plateaus, [0.0, 2.0, 1.0])
    assert schedule.window_of(0) == (0.0, 0.5)
    assert schedule.window_of(1) == (0.0, 0.875)
    expected = [2.0 ** -(k + 1) / (1.0 + p.w3_norm()) for k, p in enumerate(schedule.profiles)]
    np.testing.assert_allclose(schedule.weights, expected)


def test_schedule_in_one_dimension_drives_left_node(rod):
    schedule = build_schedule(rod, ScheduleSpec())
    assert schedule.components == 1
    assert np.flatnonzero(schedule.spatial(1)).tolist() == [0]
    assert schedule.gamma_in_star.tolist() == [0]
    np.testing.assert_allclose(schedule.eta[0, 0], 1.0)


def test_boundary_data_vanishes_before_tau1_and_after_bump(rod):
    schedule = build_schedule(rod, ScheduleSpec())
    data = schedule.boundary_data([0.1, 0.6, 2.0])
    assert data.shape == (3, rod.n_nodes)
    assert not data[0].any()
    assert data[1, 0] > 0.0
    assert not data[2].any()


def test_schedule_index_errors(rod):
    schedule = build_schedule(rod, ScheduleSpec(components=2))
    with pytest.raises(ParameterError):
        schedule.smooth_step(3, 1.0)
    with pytest.raises(IndexError):
        schedule.window_of(3)


def test_schedule_spec_validation():
    with pytest.raises(ValidationError):
        ScheduleSpec(tau1=1.0, tau2=0.5)
    with pytest.raises(ValidationError):
        ScheduleSpec(components=2, plateaus=[1.0])
    with pytest.raises(ValidationError):
        ScheduleSpec(components=1, plateaus=[0.0, 1.0])


def test_plate_cutoff_and_profile_normalization(plate):
    schedule = build_schedule(plate, ScheduleSpec(components=2, chi_plateau=0.5))
    left = plate.side_nodes("left")
    s = plate.coordinates()[left, 1]
    star = schedule.gamma_in_star
    assert star.size > 0
    inside = s[np.isin(left, star)]
    assert inside.min() >= 0.25 - 1e-12 and inside.max() <= 0.75 + 1e-12
    assert np.all(schedule.chi[left] >= 0.0) and np.all(schedule.chi[left] <= 1.0)
    for k in range(2):
        norm = plate.face_measure * float((schedule.eta[k] ** 2).sum())
        assert norm == pytest.approx(1.0)
    assert np.all(schedule.chi * schedule.eta[0] >= 0.0)


def test_schedule_csv_and_json(rod, tmp_path):
    schedule = build_schedule(rod, ScheduleSpec(components=2))
    times = np.linspace(0.0, 1.0, 5)
    lines = schedule.write_csv(tmp_path / "schedule.csv", times).read_text().splitlines()
    assert lines[0] == "time,k,value"
    assert len(lines) == 1 + 2 * times.size
    payload = schedule.to_json()
    assert payload["profiles"][0]["kind"] == "bump"
    assert payload["gamma_in_nodes"] == 1


def test_first_plateau_must_vanish_even_without_validation(rod):
    spec = ScheduleSpec.model_construct(tau1=0.5, tau2=1.0, components=2, plateaus=[1.0, 2.0], chi_plateau=0.5)
    with pytest.raises(ParameterError, match="first plateau"):
        build_schedule(rod, spec)


def test_default_schedule_weights_are_finite(rod):
    schedule = build_schedule(rod, ScheduleSpec(components=3))
    assert np.all(np.isfinite(schedule.weights))
    assert np.all(schedule.weights > 0)
