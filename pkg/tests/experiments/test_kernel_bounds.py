import numpy as np
import pytest

from fraclab.experiments.kernel import (
    BOUND_END,
    BOUND_START,
    CHECK_POINTS,
    fitted_bound,
    kernel_magnitude,
    ml_remainder,
)


@pytest.mark.parametrize(
    "family, builder, alpha, lam",
    [
        ("kernel", kernel_magnitude, 0.3, 1.0),
        ("kernel", kernel_magnitude, 1.5, 10.0),
        ("ml_remainder", ml_remainder, 0.5, 1.0),
        ("ml_remainder", ml_remainder, 0.8, 10.0),
    ],
)
def test_bound_is_fitted_and_checked_on_fixed_window(family, builder, alpha, lam):
    constant, violations, rows = fitted_bound(family, alpha, lam, builder(alpha, lam))

    assert constant > 0
    assert violations == 0
    assert len(rows) == CHECK_POINTS
    times = np.array([row[3] for row in rows])
    assert times[0] == pytest.approx(BOUND_START)
    assert times[-1] == pytest.approx(BOUND_END)
    assert (BOUND_START, BOUND_END) == (100.0, 1e4)
    assert all(row[0] == family and row[4] <= row[5] for row in rows)


def test_window_does_not_depend_on_lambda():
    small = fitted_bound("kernel", 0.3, 1.0, kernel_magnitude(0.3, 1.0))[2]
    large = fitted_bound("kernel", 0.3, 10.0, kernel_magnitude(0.3, 10.0))[2]
    np.testing.assert_array_equal([row[3] for row in small], [row[3] for row in large])
