import numpy as np
import pytest

from mfgcontrol.rates import boundary_window, fit_log_slope, fit_power, fit_power_with_offset


def test_power_fit_recovers_exact_law():
    d = np.geomspace(1e-3, 1e-1, 40)
    fit = fit_power(d, 3.7 * d**-1.25)
    assert fit.exponent == pytest.approx(-1.25, abs=1e-9)
    assert fit.coefficient == pytest.approx(3.7, rel=1e-9)


def test_power_fit_tolerates_multiplicative_noise(rng):
    d = np.geomspace(1e-3, 1e-1, 200)
    y = 2.0 * d**1.5 * np.exp(0.01 * rng.standard_normal(200))
    fit = fit_power(d, y)
    assert fit.exponent == pytest.approx(1.5, abs=0.01)
    assert fit.coefficient == pytest.approx(2.0, rel=0.02)


def test_log_slope_fit_recovers_slope():
    d = np.geomspace(1e-3, 1e-1, 40)
    fit = fit_log_slope(d, 2.5 * np.log(1.0 / d) + 0.7)
    assert fit.coefficient == pytest.approx(2.5, rel=1e-9)


def test_offset_fit_separates_constant_from_power():
    d = np.geomspace(1e-3, 1e-1, 60)
    fit = fit_power_with_offset(d, 3.7 * d**-1.25 + 5.0, exponent_range=(-2.0, -0.5))
    assert fit.exponent == pytest.approx(-1.25, abs=1e-6)
    assert fit.coefficient == pytest.approx(3.7, rel=1e-6)


def test_boundary_window_is_half_open():
    d = np.geomspace(1e-3, 1e-1, 40)
    idx = boundary_window(d, 5e-3, 5e-2)
    assert d[idx].min() > 5e-3
    assert d[idx].max() <= 5e-2


def test_boundary_window_needs_enough_samples():
    d = np.array([0.01, 0.02])
    with pytest.raises(ValueError):
        boundary_window(d, 1e-3, 0.5)
