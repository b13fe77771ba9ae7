import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from viscontact.errors import ConfigError
from viscontact.rheology import GlenRheology, viscosity, viscosity_derivative


def test_newtonian_viscosity_is_constant():
    rh = GlenRheology(A=0.5, n=1.0)
    assert rh.viscosity(0.0) == 1.0
    assert np.all(rh.viscosity(np.array([0.0, 1.0, 7.0])) == 1.0)
    assert rh.viscosity_derivative(3.0) == 0.0


def test_glen_value_matches_closed_form():
    rh = GlenRheology(A=0.5, n=3.0, delta_reg=0.0)
    s = 2.0
    expected = 0.5 * 0.5 ** (-1 / 3) * (0.5 * s * s) ** (-1 / 3)
    assert rh.viscosity(s) == pytest.approx(expected, rel=1e-14)


def test_regularization_keeps_zero_strain_finite():
    rh = GlenRheology(A=0.5, n=3.0, delta_reg=1e-10)
    eta0 = rh.viscosity(0.0)
    assert np.isfinite(eta0)
    assert eta0 == pytest.approx(0.5 * 0.5 ** (-1 / 3) * 1e-10 ** (-1 / 3))


@pytest.mark.parametrize("n", [1.5, 3.0, 5.0])
@pytest.mark.parametrize("s", [1e-3, 0.3, 2.0])
def test_derivative_matches_finite_difference(n, s):
    rh = GlenRheology(A=0.5, n=n, delta_reg=1e-10)
    h = 1e-6 * (0.5 * s * s)
    # derivative is with respect to the half squared norm q = s^2 / 2
    up = rh.viscosity(np.sqrt(2 * (0.5 * s * s + h)))
    dn = rh.viscosity(np.sqrt(2 * (0.5 * s * s - h)))
    fd = (up - dn) / (2 * h)
    assert abs(rh.viscosity_derivative(s) - fd) <= 1e-5 * abs(fd)


def test_invariant_form_agrees_with_norm_form():
    rh = GlenRheology(A=0.7, n=3.0)
    s = np.linspace(0.0, 3.0, 7)
    eta, deta = rh.viscosity_from_invariant(0.5 * s * s)
    np.testing.assert_allclose(eta, rh.viscosity(s), rtol=1e-14)
    np.testing.assert_allclose(deta, rh.viscosity_derivative(s), rtol=1e-14)
    assert viscosity(rh, 1.0) == rh.viscosity(1.0)
    assert viscosity_derivative(rh, 1.0) == rh.viscosity_derivative(1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1.0, 6.0), st.floats(0.0, 50.0), st.floats(0.0, 50.0))
def test_viscosity_positive_and_shear_thinning(n, s1, s2):
    rh = GlenRheology(A=0.5, n=n, delta_reg=1e-10)
    lo, hi = sorted((s1, s2))
    assert rh.viscosity(lo) > 0
    assert rh.viscosity(hi) <= rh.viscosity(lo) * (1 + 1e-12)
    assert rh.viscosity_derivative(lo) <= 0


@pytest.mark.parametrize("kwargs", [{"A": 0.0}, {"A": -1.0}, {"n": 0.5}, {"delta_reg": -1e-3}])
def test_invalid_parameters_rejected(kwargs):
    with pytest.raises(ConfigError):
        GlenRheology(**kwargs)
