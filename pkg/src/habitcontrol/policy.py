"""Value function, optimal feedback policies and the HJB residual check.

With ``Y = x - m(t) z`` the excess of wealth over the subsistence cost of the
current habit, the candidate value function is

    V(t, x, z, eta) = N(t, eta)^(1-p) * Y^p / p

and the feedback controls are

    pi* = [eta / ((1-p) sigma_S^2) + G N_eta / (sigma_S^2 N)] * Y
    c*  = z + Y / ((1 + delta m)^(1/(1-p)) N)

where ``G = Omega(t) + sigma_S sigma_mu rho`` is the filter gain numerator.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from habitcontrol.closed_form import (
    DEFAULT_PANELS,
    ResidualReport,
    n_evaluator,
    shifted_times,
    subsistence_cost,
    time_stencil,
)
from habitcontrol.errors import DomainError, HabitControlError
from habitcontrol.filtering import omega_hat_closed
from habitcontrol.params import ModelParams, check_admissibility, classify_regime, require_no_explosion

__all__ = [
    "StateVector",
    "PolicyPair",
    "AdmissibilityError",
    "ValueModel",
    "value_model",
    "value_v",
    "policy_pi",
    "policy_c",
    "wealth_explicit",
    "log_gamma_increments",
    "hjb_residual",
]

BOUNDARY_RTOL = 1e-12


class AdmissibilityError(HabitControlError, ValueError):
    """Raised when a hypothesis of the verification theorem fails."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class StateVector:
    t: float
    x: float
    z: float
    eta: float


@dataclass(frozen=True)
class PolicyPair:
    pi: float
    c: float


class ValueModel:
    """Closed-form solution bundle for one parameter set.

    Parameters
    ----------
    params : model constants
    panels : Simpson panels for the ``s`` integral in ``N``
    gate : for ``0 < p < 1``, refuse to build unless the verification-theorem
        hypotheses (other than the initial budget) hold

    Raises
    ------
    ExplosionError
        if the horizon reaches the critical horizon of the auxiliary system.
    AdmissibilityError
        if ``gate`` is set and a hypothesis fails.
    """

    def __init__(self, params: ModelParams, panels: int = DEFAULT_PANELS, gate: bool = True):
        self.params = params
        self.regime = classify_regime(params)
        require_no_explosion(params, self.regime)
        if gate and params.p > 0:
            report = check_admissibility(params)
            failed = [n for n in report.violated if not n.startswith("budget")]
            if failed:
                raise AdmissibilityError(f"verification hypotheses fail: {failed}", report)
        self.m = subsistence_cost(params)
        self.n = n_evaluator(params, panels)
        p = params.p
        self._inv_pow = 1.0 / (1.0 - p)

    # -- helpers --------------------------------------------------------
    def excess(self, t, x, z):
        """``Y = x - m(t) z``; raises below the boundary, snaps rounding noise to 0."""
        m = self.m(t)
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        y = x - m * z
        tol = BOUNDARY_RTOL * (np.abs(x) + np.abs(m * z))
        if np.any(y < -tol):
            raise DomainError("state lies below the subsistence boundary x = m(t) z")
        return np.maximum(y, 0.0)

    def gain(self, t):
        return omega_hat_closed(t, self.params) + self.params.drift_gain_offset

    def consumption_scale(self, t):
        """``(1 + delta(t) m(t))^(1/(1-p))``."""
        return (1.0 + self.params.delta_fn(t) * self.m(t)) ** self._inv_pow

    # -- value and policies --------------------------------------------
    def value(self, t, x, z, eta):
        """``V = N^(1-p) Y^p / p``; on the boundary ``0`` for ``p > 0`` and ``-inf`` for ``p < 0``."""
        p = self.params.p
        y = self.excess(t, x, z)
        n = self.n(t, eta)
        with np.errstate(divide="ignore"):
            v = n ** (1.0 - p) * y ** p / p
        return _out(v)

    def feedback(self, t, x, z, eta):
        """Optimal ``(pi*, c*)`` at a common time ``t`` for arrays of states."""
        p, s2 = self.params.p, self.params.sigma_s ** 2
        y = self.excess(t, x, z)
        eta = np.asarray(eta, dtype=float)
        n, n_e = self.n.evaluate(t, eta, 1)
        pi = (eta / ((1.0 - p) * s2) + self.gain(t) / s2 * n_e / n) * y
        c = np.asarray(z, dtype=float) + y / (self.consumption_scale(t) * n)
        return _out(pi), _out(c)

    def pi(self, t, x, z, eta):
        return self.feedback(t, x, z, eta)[0]

    def c(self, t, x, z, eta):
        return self.feedback(t, x, z, eta)[1]

    def ratios(self, t, x, z, eta):
        """``pi*/x`` and ``c*/x`` through the habit-to-wealth ratio ``z/x``."""
        p, s2 = self.params.p, self.params.sigma_s ** 2
        x = np.asarray(x, dtype=float)
        zx = np.asarray(z, dtype=float) / x
        n, n_e = self.n.evaluate(t, eta, 1)
        m = self.m(t)
        scale = self.consumption_scale(t) * n
        pi_x = (np.asarray(eta) / ((1.0 - p) * s2) + self.gain(t) / s2 * n_e / n) * (1.0 - m * zx)
        c_x = 1.0 / scale + (1.0 - m / scale) * zx
        return _out(pi_x), _out(c_x)


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


@functools.lru_cache(maxsize=32)
def value_model(params: ModelParams, panels: int = DEFAULT_PANELS, gate: bool = True) -> ValueModel:
    return ValueModel(params, panels, gate)


def value_v(state: StateVector, params: ModelParams) -> float:
    """Candidate value function at ``state``.

    Raises
    ------
    DomainError
        if ``x < m(t) z``.
    """
    return value_model(params).value(state.t, state.x, state.z, state.eta)


def policy_pi(state: StateVector, params: ModelParams) -> float:
    """Optimal amount invested in the stock; zero on the subsistence boundary."""
    return value_model(params).pi(state.t, state.x, state.z, state.eta)


def policy_c(state: StateVector, params: ModelParams) -> float:
    """Optimal consumption rate; equals ``z`` on the subsistence boundary."""
    return value_model(params).c(state.t, state.x, state.z, state.eta)


def wealth_explicit(t_grid, mu_hat, dw_hat, z_path, params: ModelParams,
                    model: ValueModel | None = None):
    """Optimal wealth reconstructed from the filtered drift and innovations.

    Parameters
    ----------
    t_grid : times ``t_0 = 0 < ... < t_n``
    mu_hat : filtered drift, shape ``(n + 1, ...)``
    dw_hat : innovation increments over each step, shape ``(n, ...)``
    z_path : habit path, shape ``(n + 1, ...)``

    Returns
    -------
    ndarray
        ``X_k = Y_0 N(t_k, mu_hat_k) / N(0, eta0) exp(I_k) + m(t_k) Z_k`` where
        ``I_k`` is the left-point (Ito) sum of
        ``mu_hat^2 / (2 (1-p) sigma_S^2) dt + mu_hat / ((1-p) sigma_S) dW``.
    """
    model = model or value_model(params)
    p, s_s = params.p, params.sigma_s
    t_grid = np.asarray(t_grid, dtype=float)
    mu_hat = np.asarray(mu_hat, dtype=float)
    dw_hat = np.asarray(dw_hat, dtype=float)
    z_path = np.asarray(z_path, dtype=float)
    dt = np.diff(t_grid).reshape((-1,) + (1,) * (mu_hat.ndim - 1))
    incr = (mu_hat[:-1] ** 2 / (2.0 * (1.0 - p) * s_s ** 2) * dt
            + mu_hat[:-1] / ((1.0 - p) * s_s) * dw_hat)
    expo = np.concatenate([np.zeros((1,) + mu_hat.shape[1:]), np.cumsum(incr, axis=0)])
    y0 = params.x0 - model.m(0.0) * params.z0
    n0 = model.n(0.0, params.eta0)
    n_path = np.array([model.n(t, mu_hat[k]) for k, t in enumerate(t_grid)])
    m_path = np.asarray(model.m(t_grid)).reshape((-1,) + (1,) * (mu_hat.ndim - 1))
    return y0 * n_path / n0 * np.exp(expo) + m_path * z_path


def log_gamma_increments(t_grid, mu_hat, dw_hat, x_path, z_path, params: ModelParams,
                         model: ValueModel | None = None):
    """Realised and predicted increments of ``log Gamma``, ``Gamma = N(t, mu_hat) / (X - m Z)``.

    Returns ``(realised, predicted)``; along the optimal wealth path they agree
    up to the discretisation error of the wealth scheme.
    """
    model = model or value_model(params)
    p, s_s = params.p, params.sigma_s
    t_grid = np.asarray(t_grid, dtype=float)
    mu_hat = np.asarray(mu_hat, dtype=float)
    shape = (-1,) + (1,) * (mu_hat.ndim - 1)
    n_path = np.array([model.n(t, mu_hat[k]) for k, t in enumerate(t_grid)])
    y_path = np.asarray(x_path) - np.asarray(model.m(t_grid)).reshape(shape) * np.asarray(z_path)
    log_gamma = np.log(n_path) - np.log(y_path)
    dt = np.diff(t_grid).reshape(shape)
    predicted = (-mu_hat[:-1] ** 2 / (2.0 * (1.0 - p) * s_s ** 2) * dt
                 - mu_hat[:-1] / ((1.0 - p) * s_s) * np.asarray(dw_hat))
    return np.diff(log_gamma, axis=0), predicted


def hjb_residual(t_points, x_points, z_points, eta_points, params: ModelParams,
                 steps=(1e-3, 1e-3, 1e-3, 1e-3), scale: float = 1.0,
                 panels: int = DEFAULT_PANELS) -> ResidualReport:
    """Finite-difference residual of the HJB equation with the optimal controls plugged in.

    The residual is evaluated on the tensor mesh ``t x x x z x eta`` using
    finite-difference spacings ``steps = (h_t, h_x, h_z, h_eta)``; halving all
    spacings should divide it by about four.  ``V`` is multiplied by ``scale``
    to build negative controls.  Every stencil point must lie inside the
    effective domain ``x > m(t) z``.
    """
    prm = params
    p, s2 = prm.p, prm.sigma_s ** 2
    h_t, h_x, h_z, h_e = steps
    T = prm.horizon
    model = value_model(prm, panels)
    t = np.atleast_1d(np.asarray(t_points, dtype=float))
    x = np.atleast_1d(np.asarray(x_points, dtype=float))
    z = np.atleast_1d(np.asarray(z_points, dtype=float))
    e = np.atleast_1d(np.asarray(eta_points, dtype=float))

    def table(tt, xx, zz, ee):
        m = np.asarray(model.m(tt))
        y = xx[None, :, None] - m[:, None, None] * zz[None, None, :]
        if np.any(y <= 0):
            raise DomainError("HJB stencil leaves the effective domain")
        n = model.n.grid(tt, ee)
        return scale * (n ** (1.0 - p))[:, None, None, :] * (y ** p / p)[:, :, :, None]

    w = time_stencil(t, h_t, T)
    v_t = 0.0
    for k, tk in enumerate(shifted_times(t, h_t, T)):
        if np.any(w[:, k]):
            v_t = v_t + w[:, k, None, None, None] * table(tk, x, z, e)
    v0 = table(t, x, z, e)
    vxp, vxm = table(t, x + h_x, z, e), table(t, x - h_x, z, e)
    vzp, vzm = table(t, x, z + h_z, e), table(t, x, z - h_z, e)
    vep, vem = table(t, x, z, e + h_e), table(t, x, z, e - h_e)
    v_x = (vxp - vxm) / (2 * h_x)
    v_xx = (vxp - 2 * v0 + vxm) / h_x ** 2
    v_z = (vzp - vzm) / (2 * h_z)
    v_e = (vep - vem) / (2 * h_e)
    v_ee = (vep - 2 * v0 + vem) / h_e ** 2
    v_xe = (table(t, x + h_x, z, e + h_e) - table(t, x + h_x, z, e - h_e)
            - table(t, x - h_x, z, e + h_e) + table(t, x - h_x, z, e - h_e)) / (4 * h_x * h_e)

    zz = z[None, None, :, None]
    ee = e[None, None, None, :]
    gain = (omega_hat_closed(t, prm) + prm.drift_gain_offset)[:, None, None, None]
    delta = np.asarray(prm.delta_fn(t))[:, None, None, None]
    alpha = np.asarray(prm.alpha_fn(t))[:, None, None, None]
    marg = v_x - delta * v_z
    with np.errstate(invalid="ignore"):
        field = (v_t - alpha * zz * v_z - prm.lam * (ee - prm.mu_bar) * v_e
                 + gain ** 2 / (2 * s2) * v_ee
                 - ee * gain / s2 * v_x * v_xe / v_xx
                 - ee ** 2 / (2 * s2) * v_x ** 2 / v_xx
                 - gain ** 2 / (2 * s2) * v_xe ** 2 / v_xx
                 - zz * marg
                 - (p - 1.0) / p * marg ** (p / (p - 1.0)))
    return ResidualReport(float(np.max(np.abs(field))), float(np.sqrt(np.mean(field ** 2))),
                          field, tuple(steps))
