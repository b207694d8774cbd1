import math

import numpy as np
import pytest

from habitcontrol import oracles
from habitcontrol.filtering import omega_hat_closed
from habitcontrol.params import ModelParams


def test_richardson_exact_on_polynomials():
    f = lambda x: 3 * x ** 5 - x ** 2
    assert oracles.richardson_derivative(f, 0.7, 0.1, 1) == pytest.approx(15 * 0.7 ** 4 - 1.4, rel=1e-12)
    assert oracles.richardson_derivative(f, 0.7, 0.1, 2) == pytest.approx(60 * 0.7 ** 3 - 2, rel=1e-11)
    with pytest.raises(ValueError):
        oracles.richardson_derivative(f, 0.7, 0.1, 3)


def test_rk4_omega_converges():
    prm = ModelParams()
    t = np.array([0.5, 1.0])
    coarse = oracles.rk4_omega(t, prm, 1e-2)
    fine = oracles.rk4_omega(t, prm, 1e-3)
    exact = omega_hat_closed(t, prm)
    # fourth order: a tenfold smaller step shrinks the error by about 1e4
    assert np.all(np.abs(fine - exact) < 1e-3 * np.abs(coarse - exact) + 1e-16)


def test_rk4_aux_zero_at_start():
    np.testing.assert_array_equal(oracles.rk4_aux(np.array([0.0]), ModelParams(), 1e-3), 0.0)


def test_m_quad_constant_rates():
    prm = ModelParams()
    assert oracles.m_quad(0.0, prm) == pytest.approx(-math.expm1(-0.2) / 0.2, rel=1e-12)


def test_merton_n_limits():
    prm = ModelParams(sigma_mu=0.0, lam=0.0, delta_fn=0.0, alpha_fn=0.0)
    assert oracles.merton_n(1.0, 0.3, prm) == 1.0
    assert oracles.merton_n(0.0, 0.0, prm) == pytest.approx(2.0)


def test_characteristic_requires_zero_gain():
    with pytest.raises(ValueError):
        oracles.characteristic_n(0.0, 0.0, ModelParams())


def test_omega_check_grid():
    t, closed, rk4 = oracles.omega_check_grid(ModelParams(), n=10, step=1e-4)
    assert t.shape == closed.shape == rk4.shape == (10,)
    np.testing.assert_allclose(closed, rk4, rtol=1e-10)
