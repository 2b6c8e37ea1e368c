import numpy as np
import pytest
from scipy.integrate import quad

from fraclab.core.config import CoefficientSpec, DomainSpec, DriftSpec
from fraclab.core.errors import ParameterError, PreconditionError, SolverError, UnsupportedOperatorError
from fraclab.numerics.domain import CoefficientField, assemble, build_domain, coefficient_field
from fraclab.numerics.excitation import source_pulse
from fraclab.numerics.mlf import ml_decay
from fraclab.numerics.spectral import (
    TimeTrace,
    cluster_eigenvalues,
    coupling_identity_errors,
    eigensolve,
    forward_dirichlet,
    forward_source,
    parseval_partial_sums,
    truncation_tail,
)


def interval_operator(cells=64):
    domain = build_domain(DomainSpec(cells=[cells]))
    return assemble(domain, CoefficientField.constant(domain))


def test_interval_eigenvalues_and_normalization():
    op = interval_operator()
    dec = eigensolve(op)
    assert dec.complete
    assert dec.count == op.size
    h = op.domain.spacing[0]
    k = np.arange(1, 4)
    # three-point Dirichlet Laplacian: 4 / h^2 sin^2(k pi h / 2)
    np.testing.assert_allclose(dec.eigenvalues[:3], 4.0 / h**2 * np.sin(k * np.pi * h / 2.0) ** 2, rtol=1e-10)
    np.testing.assert_allclose(dec.eigenvalues[:3], (np.pi * k) ** 2, rtol=3e-3)
    # rho-orthonormal: projecting a mode onto the basis returns a unit vector
    np.testing.assert_allclose(dec.project(dec.nodal(1)), np.eye(dec.count)[1], atol=1e-10)
    assert dec.residual < 1e-8


def test_signs_are_fixed():
    dec = eigensolve(interval_operator(32), modes=4)
    assert dec.count == 4
    assert not dec.complete
    first_significant = [column[np.abs(column) > 1e-8][0] for column in dec.eigenvectors.T]
    assert all(value > 0 for value in first_significant)


def test_plate_lanczos_matches_dense(plate_problem):
    sparse = eigensolve(plate_problem.op, modes=6)
    dense = eigensolve(plate_problem.op, modes=plate_problem.op.size)
    np.testing.assert_allclose(sparse.eigenvalues, dense.eigenvalues[:6], rtol=1e-9)
    # lambda_2 = lambda_3 on the square
    assert (1, 2) in sparse.clusters


def test_drift_operator_is_rejected():
    domain = build_domain(DomainSpec(cells=[16]))
    op = assemble(domain, coefficient_field(domain, CoefficientSpec(drift=DriftSpec(amplitude=1.0))))
    with pytest.raises(UnsupportedOperatorError):
        eigensolve(op)


def test_too_many_modes_rejected():
    with pytest.raises(ParameterError):
        eigensolve(interval_operator(16), modes=100)


def test_cluster_eigenvalues():
    assert cluster_eigenvalues(np.array([1.0, 1.0 + 1e-10, 2.0, 3.0])) == ((0, 1), (2,), (3,))


def test_time_trace_validation():
    nodes = np.array([3])
    with pytest.raises(ParameterError):
        TimeTrace(np.array([1.0, 0.5]), np.zeros((2, 1)), nodes)
    with pytest.raises(ParameterError):
        TimeTrace(np.array([0.5, 1.0]), np.zeros((2, 2)), nodes)
    with pytest.raises(SolverError):
        TimeTrace(np.array([0.5, 1.0]), np.array([[0.0], [np.nan]]), nodes)


def test_time_trace_helpers(tmp_path):
    trace = TimeTrace(np.array([0.5, 1.0, 2.0]), np.array([[1.0], [2.0], [3.0]]), np.array([7]))
    np.testing.assert_array_equal(trace.column(7), [1.0, 2.0, 3.0])
    with pytest.raises(IndexError):
        trace.column(8)
    assert trace.restrict(0.6, 3.0).times.tolist() == [1.0, 2.0]
    np.testing.assert_array_equal(trace.combine(trace, scale=-1.0).values, 0.0)
    lines = trace.write_csv(tmp_path / "trace.csv").read_text().splitlines()
    assert lines == ["time,node,value", "0.5,7,1.0", "1.0,7,2.0", "2.0,7,3.0"]


def test_parseval_sums_reach_the_lift_norm(rod_problem):
    dec = eigensolve(rod_problem.op)
    g = rod_problem.schedule.spatial(1)
    partial, limit = parseval_partial_sums(dec, g)
    assert np.all(np.diff(partial) >= 0)
    assert partial[-1] == pytest.approx(limit, rel=1e-9)
    head, tail = truncation_tail(dec, g)
    assert tail == 0.0
    assert head == pytest.approx(limit, rel=1e-9)


def test_truncation_tail_for_partial_basis(rod_problem):
    dec = eigensolve(rod_problem.op, modes=3)
    head, tail = truncation_tail(dec, rod_problem.schedule.spatial(1))
    assert head > 0.0
    assert 0.0 < tail < head


def test_coupling_identity_holds_for_the_discrete_pairing(rod_problem):
    dec = eigensolve(rod_problem.op)
    report = coupling_identity_errors(dec, rod_problem.schedule.spatial(1))
    assert max(report["relative_error"]) < 1e-8
    assert len(report["expected"]) == 5


def test_initial_mode_decays_like_mittag_leffler(rod_problem):
    dec = eigensolve(rod_problem.op)
    times = np.array([0.01, 0.1, 1.0])
    trace = forward_source(dec, 0.6, times, u0=dec.nodal(0), keep_nodal=True)
    decay = ml_decay(0.6, dec.eigenvalues[0], times)
    node = rod_problem.domain.gamma_out[0]
    expected = decay * dec.traces_at(np.array([node]))[0, 0]
    np.testing.assert_allclose(trace.column(node), expected, rtol=1e-9)
    np.testing.assert_allclose(trace.nodal[1], decay[1] * dec.nodal(0), atol=1e-12)


def test_classical_source_response_matches_direct_convolution():
    op = interval_operator(16)
    dec = eigensolve(op)
    sigma = source_pulse(0.1, 0.4)
    f = np.zeros(op.domain.n_nodes)
    f[8] = 1.0
    t = 0.7
    trace = forward_source(dec, 1.0, [t], sigma=sigma, f=f, keep_nodal=True)
    modes = dec.source_modes(f)
    coefficients = [
        modes[k] * quad(lambda s, lam=lam: np.exp(-lam * (t - s)) * float(sigma.value(s)), 0.1, 0.4, epsrel=1e-12)[0]
        for k, lam in enumerate(dec.eigenvalues)
    ]
    expected = op.scatter(dec.eigenvectors @ np.array(coefficients))
    np.testing.assert_allclose(trace.nodal[0], expected, rtol=1e-8, atol=1e-14)


def test_source_support_precondition(rod_problem):
    dec = eigensolve(rod_problem.op, modes=5)
    f = np.zeros(rod_problem.domain.n_nodes)
    f[10] = 1.0
    with pytest.raises(PreconditionError):
        forward_source(dec, 0.5, [1.0, 2.0], sigma=source_pulse(0.2, 0.8), f=f, support_before=0.5)


def test_times_must_increase(rod_problem):
    dec = eigensolve(rod_problem.op, modes=5)
    with pytest.raises(ParameterError):
        forward_dirichlet(dec, rod_problem.schedule, 0.5, [1.0, 1.0])


def test_dirichlet_response_is_silent_before_excitation(rod_problem):
    dec = eigensolve(rod_problem.op)
    trace = forward_dirichlet(dec, rod_problem.schedule, 0.5, [0.1, 0.4, 0.7, 2.0])
    assert not trace.values[:2].any()
    assert np.all(np.abs(trace.values[2:]) > 0)
    assert trace.meta["truncation"][0]["tail"] == 0.0


def test_dirichlet_components_superpose(staircase_problem):
    dec = eigensolve(staircase_problem.op)
    schedule = staircase_problem.schedule
    times = np.array([0.6, 0.9, 1.5, 4.0])
    total = forward_dirichlet(dec, schedule, 0.7, times, keep_nodal=True)
    parts = [forward_dirichlet(dec, schedule, 0.7, times, component=k, keep_nodal=True) for k in (1, 2)]
    combined = parts[0].combine(parts[1])
    scale = float(np.abs(total.values).max())
    np.testing.assert_allclose(total.values, combined.values, rtol=1e-7, atol=1e-9 * scale)
    np.testing.assert_allclose(total.nodal, combined.nodal, rtol=1e-7, atol=1e-9 * float(np.abs(total.nodal).max()))
