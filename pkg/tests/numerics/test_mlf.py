import math

import mpmath
import numpy as np
import pytest
from scipy.special import erfcx, gamma

from fraclab.core.errors import MittagLefflerOverflowError, ParameterError, SingularInputError
from fraclab.numerics.mlf import (
    KernelQuery,
    MLParams,
    asymptotic_flux_model,
    check_alpha,
    kernel_laplace,
    ml_decay,
    ml_eval,
    mittag_leffler,
    negative_axis_table,
    relaxation_kernel,
    step_response,
)


def series_oracle(a: float, b: float, z: float, terms: int = 800, digits: int = 120) -> float:
    """Power series summed in multiprecision, Gamma arguments included."""
    with mpmath.workdps(digits):
        a_mp, b_mp, z_mp = mpmath.mpf(a), mpmath.mpf(b), mpmath.mpf(z)
        total = mpmath.mpf(0)
        term_z = mpmath.mpf(1)
        for k in range(terms):
            total += term_z * mpmath.rgamma(a_mp * k + b_mp)
            term_z *= z_mp
        return float(total)


def test_exponential_special_case():
    assert mittag_leffler(1.0, 1.0, 1.0) == pytest.approx(math.e, rel=1e-15)


def test_value_at_zero_is_reciprocal_gamma():
    assert mittag_leffler(0.7, 0.5, 0.0) == pytest.approx(1.0 / math.sqrt(math.pi), rel=1e-14)


def test_expm1_special_case():
    z = np.array([-3.0, -1e-9, 0.0, 2.0])
    expected = np.where(z == 0, 1.0, np.expm1(z) / np.where(z == 0, 1.0, z))
    np.testing.assert_allclose(mittag_leffler(1.0, 2.0, z), expected, rtol=1e-14)


@pytest.mark.parametrize("x", [0.1, 1.0, 5.0, 20.0, 35.0, 100.0, 1e4])
def test_half_order_matches_scaled_erfc(x):
    # E_{1/2,1}(-x) = exp(x^2) erfc(x) covers the series, contour and asymptotic regimes
    assert mittag_leffler(0.5, 1.0, -x) == pytest.approx(float(erfcx(x)), rel=1e-9)


@pytest.mark.parametrize(
    "a, b, z",
    [
        (0.3, 1.0, -2.0),
        (0.5, 0.5, -8.0),
        (0.8, 0.8, -9.5),
        (1.2, 1.0, -6.0),
        (1.5, 1.5, -9.0),
        (0.8, 1.0, 3.0),
        (1.7, 2.0, 7.5),
    ],
)
def test_agrees_with_high_precision_series(a, b, z):
    assert mittag_leffler(a, b, z) == pytest.approx(series_oracle(a, b, z), rel=1e-10, abs=1e-15)


@pytest.mark.parametrize("a", [0.5, 0.8, 1.2, 1.9])
@pytest.mark.parametrize("same_b", [False, True])
def test_matches_200_term_partial_sum_inside_disc(a, same_b):
    b = a if same_b else 1.0
    z = np.array([-5.0, -2.5, -0.5, 0.7, 2.5, 5.0])
    expected = [series_oracle(a, b, float(x), terms=200, digits=60) for x in z]
    np.testing.assert_allclose(mittag_leffler(a, b, z), expected, rtol=1e-10, atol=1e-15)


def test_real_input_gives_real_output_and_keeps_shape():
    z = -np.linspace(0.0, 30.0, 12).reshape(3, 4)
    values = mittag_leffler(0.6, 1.0, z)
    assert values.shape == (3, 4)
    assert not np.iscomplexobj(values)


def test_complex_input_gives_complex_output():
    value = mittag_leffler(0.9, 1.0, 1.0 + 2.0j)
    assert isinstance(value, complex)
    with mpmath.workdps(60):
        expected = complex(mpmath.nsum(lambda k: mpmath.mpc(1, 2) ** k / mpmath.gamma(0.9 * k + 1), [0, mpmath.inf]))
    assert value == pytest.approx(expected, rel=1e-9)


@pytest.mark.parametrize("beta1, beta2", [(0.0, 1.0), (-0.5, 1.0), (0.5, 0.0), (math.nan, 1.0)])
def test_rejects_bad_indices(beta1, beta2):
    with pytest.raises(ParameterError):
        MLParams(beta1, beta2)


def test_rejects_non_finite_argument():
    with pytest.raises(ParameterError):
        mittag_leffler(0.5, 1.0, np.array([1.0, np.inf]))


def test_overflow_is_reported():
    with pytest.raises(MittagLefflerOverflowError):
        mittag_leffler(0.5, 1.0, 1e6)


def test_negative_axis_table_matches_direct_evaluation():
    x = np.geomspace(1e-10, 1e7, 400)
    table = negative_axis_table(0.5, 1.5)
    np.testing.assert_allclose(table(x), ml_eval(MLParams(0.5, 1.5), -x), rtol=1e-9)


def test_negative_axis_table_outside_range_falls_back():
    table = negative_axis_table(0.7, 1.0)
    x = np.array([0.0, 1e-14, 1e10])
    np.testing.assert_allclose(table(x), ml_eval(MLParams(0.7, 1.0), -x), rtol=1e-12)


@pytest.mark.parametrize("alpha", [2.0, 0.0, -1.0, 2.5])
def test_check_alpha_rejects_out_of_range(alpha):
    with pytest.raises(ParameterError):
        check_alpha(alpha)


def test_classical_kernel_is_exponential():
    t = np.linspace(0.0, 3.0, 7)
    np.testing.assert_allclose(relaxation_kernel(1.0, 2.0, t), np.exp(-2.0 * t), rtol=1e-15)


def test_kernel_is_singular_at_zero_for_small_alpha():
    with pytest.raises(SingularInputError):
        relaxation_kernel(0.5, 1.0, np.array([0.0, 1.0]))


def test_kernel_query_validates_and_evaluates():
    assert KernelQuery(0.5, 1.0, 1.0).value() == pytest.approx(float(relaxation_kernel(0.5, 1.0, 1.0)))
    with pytest.raises(ParameterError):
        KernelQuery(0.5, -1.0, 1.0)
    with pytest.raises(ParameterError):
        KernelQuery(0.5, 1.0, -0.1)


def test_kernel_small_time_behaviour():
    # t^(alpha-1) E_{alpha,alpha}(-lam t^alpha) ~ t^(alpha-1) / Gamma(alpha) as t -> 0
    t = 1e-20
    assert relaxation_kernel(0.4, 1.0, t) == pytest.approx(t ** (-0.6) / gamma(0.4), rel=1e-6)


def test_step_response_integrates_kernel():
    alpha, lam = 0.6, 3.0
    t = np.array([0.01, 0.5, 2.0, 40.0])
    expected = (1.0 - mittag_leffler(alpha, 1.0, -lam * t**alpha)) / lam
    np.testing.assert_allclose(step_response(alpha, lam, t), expected, rtol=1e-9)


def test_step_response_classical():
    t = np.array([0.0, 0.3, 5.0])
    np.testing.assert_allclose(step_response(1.0, 2.0, t), -np.expm1(-2.0 * t) / 2.0, rtol=1e-15)


def test_ml_decay_broadcasts_modes_against_times():
    lam = np.array([1.0, 4.0, 9.0])
    t = np.array([0.5, 1.0])
    values = ml_decay(0.5, lam[None, :], t[:, None])
    assert values.shape == (2, 3)
    np.testing.assert_allclose(values[1], erfcx(lam), rtol=1e-9)


def test_ml_decay_is_monotone_for_subdiffusion():
    values = ml_decay(0.7, 2.0, np.linspace(0.0, 50.0, 200))
    assert values[0] == 1.0
    assert np.all(np.diff(values) < 0)


def test_kernel_laplace_closed_form():
    assert kernel_laplace(0.5, 1.0, 4.0) == pytest.approx(1.0 / 3.0, rel=1e-15)
    with pytest.raises(ParameterError):
        kernel_laplace(0.5, 1.0, 0.0)


def test_asymptotic_flux_model_vanishes_for_classical_order():
    assert asymptotic_flux_model(1.0, 2.5, 10.0) == 0.0


def test_asymptotic_flux_model_sign_and_rate():
    t = np.array([10.0, 100.0])
    model = asymptotic_flux_model(0.5, 1.0, t)
    # -1/Gamma(-1/2) = 1/(2 sqrt(pi)) > 0
    np.testing.assert_allclose(model, t**-1.5 / (2.0 * math.sqrt(math.pi)), rtol=1e-14)
