"""Kalman-Bucy filter for the hidden Ornstein-Uhlenbeck drift.

The conditional variance ``Omega(t)`` is deterministic and known in closed
form; the conditional mean ``mu_hat`` is driven by observed stock returns.
With ``y = Omega + h`` the variance Riccati equation becomes
``y' = k - y^2 / sigma_S^2`` where

    k = lambda^2 sigma_S^2 + 2 sigma_S sigma_mu lambda rho + sigma_mu^2,
    h = lambda sigma_S^2 + sigma_S sigma_mu rho.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from habitcontrol.errors import DomainError, NumericError
from habitcontrol.params import ModelParams

__all__ = [
    "FilterState",
    "riccati_constants",
    "omega_hat_closed",
    "omega_rhs",
    "steady_state_theta",
    "filter_gain",
    "filter_step",
    "filter_update",
    "innovation_increment",
    "initial_state",
]


@dataclass(frozen=True)
class FilterState:
    """Filter output at time ``t``: conditional mean and variance of the drift."""

    t: float
    mu_hat: float
    omega_hat: float


def riccati_constants(params: ModelParams) -> tuple[float, float]:
    """Return ``(k, h)`` of the shifted variance Riccati equation."""
    s_s, s_m, lam, rho = params.sigma_s, params.sigma_mu, params.lam, params.rho
    k = lam * lam * s_s * s_s + 2.0 * s_s * s_m * lam * rho + s_m * s_m
    h = lam * s_s * s_s + s_s * s_m * rho
    # k = (lam s_S + rho s_mu)^2 + (1 - rho^2) s_mu^2 >= 0 up to rounding
    return max(k, 0.0), h


def omega_rhs(omega, params: ModelParams):
    """Right-hand side of the variance Riccati ODE."""
    s_s, s_m, lam, rho = params.sigma_s, params.sigma_mu, params.lam, params.rho
    return (-(omega * omega) / (s_s * s_s)
            + (-2.0 * s_m * rho / s_s - 2.0 * lam) * omega
            + (1.0 - rho * rho) * s_m * s_m)


def omega_hat_closed(t, params: ModelParams, theta0: float | None = None):
    """Closed-form conditional variance ``Omega(t; theta0)`` (vectorised in ``t``).

    Evaluated in an ``expm1`` form that stays accurate when ``k`` is tiny and
    reduces to ``y0 / (1 + y0 t / sigma_S^2)`` at ``k = 0``.
    """
    theta0 = params.theta0 if theta0 is None else theta0
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("omega_hat_closed requires t >= 0")
    s_s = params.sigma_s
    k, h = riccati_constants(params)
    rk = math.sqrt(k)
    y0 = h + theta0
    k2 = -rk * s_s + y0
    if rk > 0:
        em = np.expm1(-2.0 * rk * t / s_s)
        em_over_rk = em / rk
    else:
        em = np.zeros_like(t)
        em_over_rk = -2.0 * t / s_s
    den = 2.0 * s_s - k2 * em_over_rk
    if np.any(den <= 0):
        raise NumericError("variance closed form denominator vanished")
    y = s_s * (2.0 * y0 + k2 * em) / den
    out = y - h
    return float(out) if out.ndim == 0 else out


def steady_state_theta(params: ModelParams) -> float:
    """Fixed point ``theta* = sigma_S sqrt(k) - h`` of the variance Riccati ODE."""
    k, h = riccati_constants(params)
    return params.sigma_s * math.sqrt(k) - h


def filter_gain(omega, params: ModelParams):
    """``(Omega + sigma_S sigma_mu rho) / sigma_S^2``, the weight on observed returns."""
    return (omega + params.drift_gain_offset) / (params.sigma_s ** 2)


def initial_state(params: ModelParams) -> FilterState:
    return FilterState(0.0, params.eta0, params.theta0)


def filter_update(mu_hat, ret, t, dt, params: ModelParams, form: str = "returns"):
    """Vectorised Euler step of the conditional mean.

    Parameters
    ----------
    mu_hat : current conditional mean(s)
    ret : arithmetic return increment(s) ``dS/S``
    t : time of the left endpoint (``Omega(t)`` is used for the gain)
    dt : step size
    form : ``"returns"`` (drift written against ``dS/S``) or ``"innovation"``
        (mean reversion plus gain times the innovation).  The two agree up
        to floating-point rounding.
    """
    gain = filter_gain(omega_hat_closed(t, params), params)
    lam, mu_bar = params.lam, params.mu_bar
    if form == "returns":
        return mu_hat + (-(lam + gain) * mu_hat + lam * mu_bar) * dt + gain * ret
    if form == "innovation":
        dw = (ret - mu_hat * dt) / params.sigma_s
        return mu_hat - lam * (mu_hat - mu_bar) * dt + gain * params.sigma_s * dw
    raise ValueError(f"unknown filter form {form!r}")


def filter_step(state: FilterState, return_increment: float, dt: float,
                params: ModelParams, form: str = "returns") -> FilterState:
    """Advance the filter by one observed return increment ``dS/S``.

    The mean takes an explicit Euler step; the variance is read off the closed
    form at ``t + dt``.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt!r}")
    if state.t + dt > params.horizon * (1 + 1e-12) + 1e-12:
        raise DomainError("filter step runs past the horizon")
    mu_new = filter_update(state.mu_hat, return_increment, state.t, dt, params, form)
    t_new = state.t + dt
    return FilterState(t_new, float(mu_new), omega_hat_closed(t_new, params))


def innovation_increment(state: FilterState, return_increment, dt, params: ModelParams | None = None,
                         sigma_s: float | None = None):
    """Innovation ``(dS/S - mu_hat dt) / sigma_S``."""
    if sigma_s is None:
        if params is None:
            raise ValueError("pass params or sigma_s")
        sigma_s = params.sigma_s
    return (return_increment - state.mu_hat * dt) / sigma_s
