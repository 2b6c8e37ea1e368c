import mpmath
import numpy as np
import pytest
from scipy.special import gamma

from fraclab.core.errors import ParameterError, UnsupportedOperatorError
from fraclab.experiments.shared.problem import relative_max
from fraclab.numerics.spectral import eigensolve, forward_dirichlet, forward_source
from fraclab.numerics.stepper import SteppingPlan, caputo_l1, l1_weights, step_solve


@pytest.mark.parametrize(
    "kwargs, error",
    [
        ({"alpha": 1.5, "horizon": 1.0}, UnsupportedOperatorError),
        ({"alpha": 0.0, "horizon": 1.0}, UnsupportedOperatorError),
        ({"alpha": 0.5, "horizon": 0.0}, ParameterError),
        ({"alpha": 0.5, "horizon": 1.0, "steps": 4}, ParameterError),
        ({"alpha": 0.5, "horizon": 1.0, "grading": 0.5}, ParameterError),
    ],
)
def test_plan_validation(kwargs, error):
    with pytest.raises(error):
        SteppingPlan.graded(**kwargs)


def test_graded_mesh_defaults():
    plan = SteppingPlan.graded(0.5, 2.0, steps=16)
    assert plan.grading == 4.0
    assert not plan.uniform
    assert plan.times[0] == 0.0
    assert plan.times[-1] == pytest.approx(2.0)
    assert np.all(np.diff(np.diff(plan.times)) > 0)


def test_weights_are_positive_and_grow_toward_current_step():
    plan = SteppingPlan.graded(0.3, 1.0, steps=32, grading=1.0)
    w = plan.weights(20)
    assert w.size == 20
    assert np.all(w > 0)
    assert np.all(np.diff(w) > 0)


def test_backward_euler_weights():
    times = np.array([0.0, 0.1, 0.3])
    np.testing.assert_array_equal(l1_weights(times, 2, 1.0), [0.0, 5.0])


@pytest.mark.parametrize("alpha", [0.5, 0.8])
def test_strongly_graded_plan_builds_with_ordered_weights(alpha):
    plan = SteppingPlan.graded(alpha, 1.5, steps=2048)
    assert plan.grading == pytest.approx(2.0 / alpha)
    w = plan.weights(plan.steps)
    assert np.all(w > 0)
    # early weights agree to rounding, the kernel is nearly flat there
    assert np.all(np.diff(w) >= -1e-13 * w[1:])
    assert w[-1] > w[plan.steps // 2] > w[0]


def exact_weights(times, n, alpha, indices):
    with mpmath.workdps(50):
        power = 1 - mpmath.mpf(alpha)
        t_n = mpmath.mpf(times[n])
        scale = mpmath.gamma(2 - mpmath.mpf(alpha))
        out = []
        for j in indices:
            left, right = mpmath.mpf(times[j - 1]), mpmath.mpf(times[j])
            spread = (t_n - left) ** power - (t_n - right) ** power
            out.append(float(spread / (scale * (right - left))))
    return np.array(out)


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
def test_graded_weights_match_high_precision_values(alpha):
    plan = SteppingPlan.graded(alpha, 1.5, steps=2048)
    n = plan.steps
    indices = list(range(1, 41)) + [n // 2, n - 1, n]
    w = plan.weights(n)
    np.testing.assert_allclose(w[np.array(indices) - 1], exact_weights(plan.times, n, alpha, indices), rtol=1e-10)


def test_stable_weights_equal_direct_formula_on_uniform_grid():
    times = np.linspace(0.0, 2.0, 65)
    alpha, n = 0.4, 64
    power = 1.0 - alpha
    direct = ((times[n] - times[:n]) ** power - (times[n] - times[1 : n + 1]) ** power) / (
        gamma(2.0 - alpha) * np.diff(times)
    )
    np.testing.assert_allclose(l1_weights(times, n, alpha), direct, rtol=1e-12)


def test_l1_is_exact_for_linear_functions_on_graded_mesh():
    plan = SteppingPlan.graded(0.5, 1.0, steps=256)
    derivative = caputo_l1(plan.times, 3.0 * plan.times, 0.5)
    np.testing.assert_allclose(derivative, 3.0 * plan.times[1:] ** 0.5 / gamma(1.5), rtol=1e-10)


def test_l1_is_exact_for_linear_functions():
    times = np.sort(np.random.default_rng(7).uniform(0.0, 3.0, 40))
    times = np.concatenate([[0.0], times])
    alpha = 0.35
    derivative = caputo_l1(times, 2.0 * times, alpha)
    np.testing.assert_allclose(derivative, 2.0 * times[1:] ** (1 - alpha) / gamma(2 - alpha), rtol=1e-12)


def test_l1_handles_vector_values():
    times = np.linspace(0.0, 1.0, 11)
    values = np.stack([times, -times], axis=1)
    derivative = caputo_l1(times, values, 0.5)
    assert derivative.shape == (10, 2)
    np.testing.assert_allclose(derivative[:, 0], -derivative[:, 1])


def test_uniform_mesh_reuses_one_factorization(rod_problem):
    plan = SteppingPlan.graded(0.5, 1.0, steps=64, grading=1.0)
    trace = step_solve(rod_problem.op, plan, schedule=rod_problem.schedule, keep_nodal=False)
    assert trace.meta["factorizations"] == 1
    assert trace.nodal is None
    assert trace.times.size == 64


def test_initial_mode_agrees_with_spectral_solution(rod_problem):
    dec = eigensolve(rod_problem.op)
    u0 = dec.nodal(0)
    plan = SteppingPlan.graded(0.5, 1.0, steps=1024)
    stepped = step_solve(rod_problem.op, plan, u0=u0)
    later = plan.times[1:] >= 0.1
    reference = forward_source(dec, 0.5, plan.times[1:][later], u0=u0)
    assert relative_max(stepped.values[later], reference.values) < 5e-3


def test_boundary_driven_solution_agrees_with_spectral_solution(rod_problem):
    dec = eigensolve(rod_problem.op)
    plan = SteppingPlan.graded(0.8, 2.0, steps=1024, grading=1.0)
    stepped = step_solve(rod_problem.op, plan, schedule=rod_problem.schedule)
    sample = slice(255, None, 64)
    reference = forward_dirichlet(dec, rod_problem.schedule, 0.8, plan.times[1:][sample])
    assert relative_max(stepped.values[sample], reference.values) < 2e-2
    # Dirichlet data is imposed on the nodal history
    g = rod_problem.schedule.boundary_data(plan.times[1:][sample])
    np.testing.assert_array_equal(stepped.nodal[sample][:, 0], g[:, 0])
