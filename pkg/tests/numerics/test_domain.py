import math

import numpy as np
import pytest

from fraclab.core.config import BumpSpec, CoefficientSpec, DomainSpec, DriftSpec, FieldSpec, ObstacleSpec
from fraclab.core.errors import CoefficientError, DomainConstructionError, ParameterError
from fraclab.numerics.domain import (
    CoefficientField,
    assemble,
    boundary_flux,
    build_domain,
    coefficient_field,
    compatibility_report,
    drift_field,
    export_coefficients_csv,
)


def square(cells=16, obstacle=None, gamma_out=None):
    return DomainSpec(dim=2, cells=[cells, cells], obstacle=obstacle, gamma_in=["left"], gamma_out=gamma_out or ["right"])


def test_interval_nodes_and_sides():
    domain = build_domain(DomainSpec(cells=[10]))
    assert domain.n_nodes == 11
    assert domain.unknowns().tolist() == list(range(1, 10))
    assert domain.side_nodes("left").tolist() == [0]
    assert domain.side_nodes("right").tolist() == [10]
    assert domain.gamma_in.tolist() == [0]
    assert domain.gamma_out.tolist() == [10]
    assert domain.face_measure == 1.0


def test_square_sides_exclude_corners():
    domain = build_domain(square(8))
    left = domain.side_nodes("left")
    assert left.size == 7
    coords = domain.coordinates()[left]
    assert np.all(coords[:, 0] == 0.0)
    assert np.all((coords[:, 1] > 0.0) & (coords[:, 1] < 1.0))
    assert domain.nodes_on(["left", "right"]).size == 14


def test_unknown_side_rejected():
    domain = build_domain(DomainSpec(cells=[10]))
    with pytest.raises(ParameterError):
        domain.side_nodes("top")


@pytest.mark.parametrize(
    "spec",
    [
        DomainSpec(cells=[4]),
        DomainSpec(cells=[16], obstacle=ObstacleSpec(center=[0.5], half_width=[0.1])),
        square(16, ObstacleSpec(center=[0.1, 0.5], half_width=[0.1, 0.1])),
        square(16, ObstacleSpec(center=[0.52, 0.52], half_width=[0.01, 0.01])),
        DomainSpec(cells=[16], gamma_in=[]),
    ],
    ids=["too-coarse", "1d-obstacle", "touching-boundary", "empty-obstacle", "empty-gamma-in"],
)
def test_invalid_domains(spec):
    with pytest.raises(DomainConstructionError):
        build_domain(spec)


def test_obstacle_is_removed_from_unknowns_and_has_faces():
    domain = build_domain(square(20, ObstacleSpec(center=[0.5, 0.5], half_width=[0.1, 0.1])))
    assert domain.obstacle_mask.sum() == 25
    assert not np.any(domain.fluid_mask() & domain.obstacle_mask)
    faces = domain.obstacle_face_nodes()
    # the four corners of the 5x5 block have two fluid neighbours
    assert faces.size == 12
    assert set(faces.tolist()) <= set(np.flatnonzero(domain.obstacle_mask).tolist())
    assert set(faces.tolist()) <= set(domain.flux_nodes.tolist())


def test_all_sides_expand():
    domain = build_domain(square(8, gamma_out=["all"]))
    assert domain.gamma_out_sides == ("left", "right", "bottom", "top")


def test_coefficient_bumps_and_validation():
    domain = build_domain(DomainSpec(cells=[20]))
    spec = CoefficientSpec(rho=FieldSpec(base=1.0, bumps=[BumpSpec(center=[0.5], width=0.05, height=0.5)]))
    coeff = coefficient_field(domain, spec)
    assert coeff.rho[10] == pytest.approx(1.5)
    assert coeff.rho[0] == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(CoefficientError) as err:
        coefficient_field(domain, CoefficientSpec(a=FieldSpec(base=-1.0)))
    assert err.value.nodes


def test_negative_potential_rejected():
    domain = build_domain(DomainSpec(cells=[20]))
    with pytest.raises(CoefficientError, match="potential"):
        coefficient_field(domain, CoefficientSpec(q=FieldSpec(base=-0.5)))


def test_drift_is_a_gradient_vanishing_tangentially():
    domain = build_domain(square(16))
    drift = drift_field(domain, 0.5)
    assert drift.shape == (domain.n_nodes, 2)
    left = domain.side_nodes("left")
    # the potential vanishes on the boundary, so its tangential derivative does too
    np.testing.assert_allclose(drift[left, 1], 0.0, atol=1e-14)


def test_laplacian_eigenvalues_converge():
    domain = build_domain(DomainSpec(cells=[128]))
    op = assemble(domain, CoefficientField.constant(domain))
    lowest = np.sort(np.linalg.eigvalsh(op.stiffness.toarray()))[:3]
    exact = (np.pi * np.arange(1, 4)) ** 2
    np.testing.assert_allclose(lowest, exact, rtol=1e-3)


def test_stiffness_is_symmetric_without_drift():
    domain = build_domain(square(12, ObstacleSpec(center=[0.5, 0.5], half_width=[0.17, 0.17])))
    op = assemble(domain, coefficient_field(domain, CoefficientSpec(a=FieldSpec(base=2.0))))
    assert abs(op.stiffness - op.stiffness.T).max() < 1e-12
    assert not op.has_drift
    assert op.drift.nnz == 0


def test_drift_operator_is_not_symmetric():
    domain = build_domain(square(12))
    op = assemble(domain, coefficient_field(domain, CoefficientSpec(drift=DriftSpec(amplitude=1.0))))
    assert op.has_drift
    system = op.system()
    assert abs(system - system.T).max() > 1e-6


def test_linear_field_is_harmonic_and_has_exact_flux():
    domain = build_domain(DomainSpec(cells=[32]))
    coeff = CoefficientField.constant(domain, a=3.0)
    op = assemble(domain, coeff)
    x = domain.coordinates()[:, 0]
    np.testing.assert_allclose(op.apply(x), 0.0, atol=1e-10)
    # outward normal derivative: -1 on the left, +1 on the right
    flux = boundary_flux(domain, coeff, x, [0, 32])
    np.testing.assert_allclose(flux, [-3.0, 3.0], rtol=1e-12)


def test_flux_stencil_is_second_order():
    errors = []
    for cells in (32, 64):
        domain = build_domain(DomainSpec(cells=[cells]))
        coeff = CoefficientField.constant(domain)
        x = domain.coordinates()[:, 0]
        flux = boundary_flux(domain, coeff, np.sin(x), [cells])
        errors.append(abs(flux[0] - math.cos(1.0)))
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.1)


def test_lift_matches_boundary_data():
    domain = build_domain(DomainSpec(cells=[16]))
    op = assemble(domain, CoefficientField.constant(domain))
    boundary = np.zeros(domain.n_nodes)
    boundary[0] = 2.0
    lifted = op.lift(boundary)
    np.testing.assert_allclose(lifted, 2.0 * (1.0 - domain.coordinates()[:, 0]), atol=1e-12)


def test_scatter_gather_round_trip():
    domain = build_domain(square(10, ObstacleSpec(center=[0.5, 0.5], half_width=[0.15, 0.15])))
    op = assemble(domain, CoefficientField.constant(domain))
    interior = np.arange(op.size, dtype=float) + 1.0
    boundary = np.full(domain.n_nodes, 7.0)
    full = op.scatter(interior, boundary)
    np.testing.assert_array_equal(op.gather(full), interior)
    assert np.all(full[domain.obstacle_mask] == 0.0)
    assert np.all(full[domain.boundary_mask()] == 7.0)


def test_flux_position_rejects_interior_nodes():
    domain = build_domain(DomainSpec(cells=[16]))
    with pytest.raises(IndexError):
        domain.flux_position([5])


def test_compatibility_report_flags():
    domain = build_domain(DomainSpec(cells=[32]))
    base = CoefficientField.constant(domain)
    same = compatibility_report(domain, base, base)
    assert same["sides_cover_boundary"] is True
    assert same["sides_overlap"] is False
    assert same["boundary_gradient_gap"] == 0.0
    assert same["boundary_distance_ratio"] == 0.0

    shifted = base.with_values(a=base.a + domain.coordinates()[:, 0])
    report = compatibility_report(domain, base, shifted)
    assert report["boundary_gradient_gap"] == pytest.approx(1.0)


def test_export_coefficients_csv(tmp_path):
    domain = build_domain(square(8))
    coeff = CoefficientField.constant(domain, a=2.0)
    path = export_coefficients_csv(domain, coeff, tmp_path / "coefficients.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,a,rho,q"
    assert len(lines) == domain.n_nodes + 1
    assert lines[1] == "0,0,2.0,1.0,0"
