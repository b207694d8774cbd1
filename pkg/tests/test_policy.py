import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from habitcontrol import simulation as sm
from habitcontrol.errors import DomainError
from habitcontrol.filtering import omega_hat_closed
from habitcontrol.oracles import richardson_derivative
from habitcontrol.params import ModelParams
from habitcontrol.policy import (
    AdmissibilityError,
    StateVector,
    ValueModel,
    hjb_residual,
    log_gamma_increments,
    policy_c,
    policy_pi,
    value_model,
    value_v,
    wealth_explicit,
)

from conftest import POSITIVE_P


def foc_oracle(model, t, x, z, eta):
    """Maximiser of the HJB Hamiltonian from Richardson finite differences of V."""
    prm = model.params
    y = x - float(model.m(t)) * z

    def v(xx=x, zz=z, ee=eta):
        return float(model.value(t, xx, zz, ee))

    hx = 1e-2 * y
    vx = richardson_derivative(lambda xx: v(xx), x, hx, 1)
    vxx = richardson_derivative(lambda xx: v(xx), x, hx, 2)
    vz = richardson_derivative(lambda zz: v(x, zz), z, 1e-2 * y, 1)
    vxe = richardson_derivative(
        lambda ee: richardson_derivative(lambda xx: v(xx, z, ee), x, hx, 1), eta, 1e-2, 1)
    gain = float(omega_hat_closed(t, prm)) + prm.drift_gain_offset
    pi = -(eta * vx + gain * vxe) / (prm.sigma_s ** 2 * vxx)
    c = z + (vx - prm.delta_fn(t) * vz) ** (1.0 / (prm.p - 1.0))
    return pi, c


def random_states(model, n, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        t = rng.uniform(0.0, 0.95)
        z = rng.uniform(0.5, 1.5)
        y = rng.uniform(0.2, 2.0)
        yield t, y + float(model.m(t)) * z, z, rng.uniform(-0.3, 0.4)


class TestValue:
    def test_terminal(self, default_params):
        for x, z in ((2.0, 1.0), (0.5, 3.0)):
            assert value_v(StateVector(1.0, x, z, 0.3), default_params) == pytest.approx(x ** -1 / -1)

    def test_boundary(self, default_params):
        m = value_model(default_params).m(0.2)
        assert value_v(StateVector(0.2, m, 1.0, 0.0), default_params) == -math.inf
        assert value_v(StateVector(0.2, m, 1.0, 0.0), POSITIVE_P) == 0.0
        with pytest.raises(DomainError):
            value_v(StateVector(0.2, 0.9 * m, 1.0, 0.0), default_params)

    @settings(max_examples=40, deadline=None)
    @given(t=st.floats(0, 1), z=st.floats(0, 2), y=st.floats(0.05, 3), eta=st.floats(-0.5, 0.5))
    def test_homogeneity(self, t, z, y, eta):
        prm = ModelParams()
        x = y + float(value_model(prm).m(t)) * z
        base = value_v(StateVector(t, x, z, eta), prm)
        scaled = value_v(StateVector(t, 2.5 * x, 2.5 * z, eta), prm)
        assert scaled == pytest.approx(2.5 ** prm.p * base, rel=1e-12)

    def test_gate(self):
        with pytest.raises(AdmissibilityError) as info:
            ValueModel(ModelParams(p=0.9, lam=0.05, rho=0.0, theta0=0.002))
        assert "moment_bound" in info.value.report.violated
        ValueModel(ModelParams(p=0.9, lam=0.05, rho=0.0, theta0=0.002), gate=False)


class TestPolicies:
    def test_boundary(self, default_params):
        m = value_model(default_params).m(0.4)
        s = StateVector(0.4, 2 * m, 2.0, 0.1)
        assert policy_pi(s, default_params) == 0.0
        assert policy_c(s, default_params) == 2.0
        with pytest.raises(DomainError):
            policy_c(StateVector(0.4, m, 2.0, 0.1), default_params)

    def test_terminal_consumption(self, default_params):
        assert policy_c(StateVector(1.0, 2.0, 0.5, 0.1), default_params) - 0.5 == pytest.approx(2.0)

    def test_merton_investment(self):
        prm = ModelParams(sigma_mu=0.0, theta0=0.0)
        model = value_model(prm)
        t, z, eta = 0.3, 1.0, 0.2
        x = float(model.m(t)) + 1.5
        assert policy_pi(StateVector(t, x, z, eta), prm) == pytest.approx(
            eta * 1.5 / ((1 - prm.p) * prm.sigma_s ** 2), rel=1e-14)

    @pytest.mark.parametrize("prm", [ModelParams(), POSITIVE_P], ids=["p<0", "p>0"])
    def test_first_order_conditions(self, prm):
        model = value_model(prm)
        for t, x, z, eta in random_states(model, 20, seed=3):
            pi_o, c_o = foc_oracle(model, t, x, z, eta)
            pi, c = model.feedback(t, x, z, eta)
            assert pi == pytest.approx(pi_o, rel=1e-8)
            assert c == pytest.approx(c_o, rel=1e-7)

    @pytest.mark.parametrize("k", [0.5, 2.0, 10.0])
    def test_scale_equivariance(self, default_params, k):
        model = value_model(default_params)
        for t, x, z, eta in random_states(model, 10, seed=4):
            pi, c = model.feedback(t, x, z, eta)
            pik, ck = model.feedback(t, k * x, k * z, eta)
            assert pik == pytest.approx(k * pi, rel=1e-12)
            assert ck - k * z == pytest.approx(k * (c - z), rel=1e-12)

    def test_ratio_identities(self, default_params):
        model = value_model(default_params)
        for t, x, z, eta in random_states(model, 10, seed=5):
            pi, c = model.feedback(t, x, z, eta)
            pi_x, c_x = model.ratios(t, x, z, eta)
            assert pi_x == pytest.approx(pi / x, rel=1e-13, abs=1e-15)
            assert c_x == pytest.approx(c / x, rel=1e-13)

    def test_vectorised(self, default_params):
        model = value_model(default_params)
        x = np.array([1.5, 2.0, 3.0])
        pi, c = model.feedback(0.2, x, np.ones(3), np.array([0.0, 0.1, 0.2]))
        assert pi.shape == c.shape == (3,)
        assert np.all(c >= 1.0)


class TestWealth:
    def test_initial_wealth(self, default_params):
        t = np.linspace(0, 1, 3)
        x = wealth_explicit(t, np.full(3, 0.05), np.zeros(2), np.ones(3), default_params)
        assert x[0] == pytest.approx(default_params.x0, rel=1e-14)

    def test_degenerate_market_ode(self):
        prm = ModelParams(sigma_mu=0.0, theta0=0.0, eta0=0.0, mu_bar=0.0)
        model = value_model(prm)

        def rhs(t, u):
            x, z = u
            c = model.c(t, x, z, 0.0)
            return [-c, prm.delta_fn(t) * c - prm.alpha_fn(t) * z]

        t = np.linspace(0, 1, 21)
        sol = solve_ivp(rhs, (0, 1), [prm.x0, prm.z0], t_eval=t, rtol=1e-12, atol=1e-14)
        x = wealth_explicit(t, np.zeros(21), np.zeros(20), sol.y[1], prm, model)
        np.testing.assert_allclose(x, sol.y[0], rtol=1e-8)


@pytest.fixture(scope="module")
def fine_paths():
    prm = ModelParams()
    model = value_model(prm, 64)
    sim = sm.SimConfig(n_paths=4, n_steps=10_000, store_paths=4, chunk_size=4, seed=3)
    res = sm.simulate_paths(sm.OptimalPolicy(model), prm, sim, model=model, checkpoints=False)
    stack = {k: np.stack([getattr(p, k) for p in res.paths], axis=1)
             for k in ("mu_hat", "dw_hat", "X", "Z")}
    return prm, model, res.paths[0].t, stack


def test_explicit_wealth_matches_euler(fine_paths):
    prm, model, t, s = fine_paths
    x = wealth_explicit(t, s["mu_hat"], s["dw_hat"], s["Z"], prm, model)
    assert np.max(np.abs(x - s["X"]) / s["X"]) <= 5e-3
    assert np.all(x > np.asarray(model.m(t))[:, None] * s["Z"])


def test_gamma_increments(fine_paths):
    prm, model, t, s = fine_paths
    realised, predicted = log_gamma_increments(t, s["mu_hat"], s["dw_hat"], s["X"], s["Z"], prm, model)
    dt = t[1] - t[0]
    assert np.max(np.abs(realised - predicted)) <= 10 * dt
    # the cumulative drift of the mismatch stays O(dt)-small over the whole path
    assert np.max(np.abs(np.sum(realised - predicted, axis=0))) <= 5e-2


class TestHJB:
    PTS = (np.linspace(0, 1, 6), np.linspace(1.6, 2.4, 5), np.linspace(0.6, 1.0, 5),
           np.linspace(-0.2, 0.3, 5))

    def test_convergence(self, default_params):
        coarse = hjb_residual(*self.PTS, default_params, steps=(2e-3,) * 4)
        fine = hjb_residual(*self.PTS, default_params, steps=(1e-3,) * 4)
        assert 3.2 <= coarse.max_abs / fine.max_abs <= 4.8
        assert fine.max_abs <= 1e-4

    def test_negative_control(self, default_params):
        assert hjb_residual(*self.PTS, default_params, scale=1.01).max_abs > 1e-2

    def test_positive_p(self):
        pts = (np.linspace(0, 1, 4), np.linspace(1.6, 2.4, 3), np.linspace(0.6, 1.0, 3),
               np.linspace(-0.2, 0.3, 3))
        assert hjb_residual(*pts, POSITIVE_P, steps=(1e-3,) * 4).max_abs <= 1e-4

    def test_terminal_row_exact(self, default_params):
        model = value_model(default_params)
        x = np.linspace(0.5, 3, 6)
        np.testing.assert_array_equal(model.value(1.0, x, 1.0, 0.2), x ** -1.0 / -1.0)

    def test_outside_domain(self, default_params):
        with pytest.raises(DomainError):
            hjb_residual([0.0], [0.9], [1.0], [0.0], default_params)
