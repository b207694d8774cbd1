"""Independent numerical oracles for the closed forms.

None of these routines reuse the closed-form formulas they are meant to check:
the Riccati systems are integrated with classical RK4, ``m`` by nested
adaptive quadrature, ``N`` by a Crank-Nicolson solve of its linear PDE or by
characteristics in the noiseless-drift case, and value-function derivatives
by Richardson-extrapolated finite differences.  The only shared ingredient is
the closed-form ``Omega(t)`` inside the ``A, B, C`` integration, which is
itself checked against RK4 separately.
"""

from __future__ import annotations

import math

import numba
import numpy as np
from scipy import integrate, linalg

from habitcontrol.filtering import omega_hat_closed, riccati_constants
from habitcontrol.params import ModelParams, classify_regime

__all__ = [
    "rk4_omega",
    "rk4_aux",
    "rk4_abc",
    "m_quad",
    "crank_nicolson_n",
    "characteristic_n",
    "merton_n",
    "richardson_derivative",
]


@numba.njit(cache=True)
def _omega_rhs(om, s_s, s_m, lam, rho):
    return -(om * om) / (s_s * s_s) + (-2.0 * s_m * rho / s_s - 2.0 * lam) * om \
        + (1.0 - rho * rho) * s_m * s_m


@numba.njit(cache=True)
def _rk4_omega(t_out, theta0, s_s, s_m, lam, rho, h_max):
    out = np.empty(t_out.size)
    om = theta0
    t = 0.0
    for i in range(t_out.size):
        span = t_out[i] - t
        n = int(math.ceil(span / h_max - 1e-9)) if span > 0 else 0
        if n > 0:
            h = span / n
            for _ in range(n):
                k1 = _omega_rhs(om, s_s, s_m, lam, rho)
                k2 = _omega_rhs(om + 0.5 * h * k1, s_s, s_m, lam, rho)
                k3 = _omega_rhs(om + 0.5 * h * k2, s_s, s_m, lam, rho)
                k4 = _omega_rhs(om + h * k3, s_s, s_m, lam, rho)
                om += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        t = t_out[i]
        out[i] = om
    return out


def rk4_omega(t_out, params: ModelParams, step: float = 1e-5) -> np.ndarray:
    """RK4 integration of the variance Riccati ODE from ``Omega(0) = theta0``.

    ``t_out`` must be nondecreasing and nonnegative.
    """
    t_out = np.asarray(t_out, dtype=float)
    return _rk4_omega(t_out, params.theta0, params.sigma_s, params.sigma_mu,
                      params.lam, params.rho, step)


@numba.njit(cache=True)
def _aux_rhs(y, g1, g2, g3, lm, s_m, s_s, rho, q):
    a, b, c, f = y[0], y[1], y[2], y[3]
    out = np.empty(5)
    out[0] = 2.0 * g1 * a * a + 2.0 * g2 * a + 0.5 * g3
    out[1] = 2.0 * g1 * a * b + 2.0 * lm * a + g2 * b
    out[2] = s_m * s_m * a + 0.5 * g1 * b * b + lm * b
    out[3] = 2.0 * (1.0 - rho * rho) * s_m * s_m * f * f - 2.0 * q / s_s * f \
        - 1.0 / (2.0 * s_s * s_s)
    out[4] = -s_m * s_m * (1.0 - rho * rho) * (f - a)
    return out


@numba.njit(cache=True)
def _rk4_aux(tau_out, g1, g2, g3, lm, s_m, s_s, rho, q, h_max):
    out = np.empty((5, tau_out.size))
    y = np.zeros(5)
    tau = 0.0
    for i in range(tau_out.size):
        span = tau_out[i] - tau
        n = int(math.ceil(span / h_max - 1e-9)) if span > 0 else 0
        if n > 0:
            h = span / n
            for _ in range(n):
                k1 = _aux_rhs(y, g1, g2, g3, lm, s_m, s_s, rho, q)
                k2 = _aux_rhs(y + 0.5 * h * k1, g1, g2, g3, lm, s_m, s_s, rho, q)
                k3 = _aux_rhs(y + 0.5 * h * k2, g1, g2, g3, lm, s_m, s_s, rho, q)
                k4 = _aux_rhs(y + h * k3, g1, g2, g3, lm, s_m, s_s, rho, q)
                y = y + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        tau = tau_out[i]
        out[:, i] = y
    return out


def rk4_aux(tau_out, params: ModelParams, step: float = 1e-5) -> np.ndarray:
    """RK4 integration of the auxiliary system in the time to go ``tau``.

    In ``tau = s - t`` the system reads (with ``q = lambda sigma_S + rho sigma_mu``)::

        a' = 2 g1 a^2 + 2 g2 a + g3 / 2
        b' = 2 g1 a b + 2 lambda mu_bar a + g2 b
        c' = sigma_mu^2 a + g1 b^2 / 2 + lambda mu_bar b
        f' = 2 (1 - rho^2) sigma_mu^2 f^2 - 2 q f / sigma_S - 1 / (2 sigma_S^2)
        g' = -sigma_mu^2 (1 - rho^2) (f - a)

    with zero initial values.  Returns an array of shape ``(5, len(tau_out))``.
    """
    reg = classify_regime(params)
    tau_out = np.asarray(tau_out, dtype=float)
    order = np.argsort(tau_out, kind="stable")
    q = params.lam * params.sigma_s + params.rho * params.sigma_mu
    vals = _rk4_aux(tau_out[order], reg.gamma1, reg.gamma2, reg.gamma3,
                    params.lam * params.mu_bar, params.sigma_mu, params.sigma_s,
                    params.rho, q, step)
    out = np.empty_like(vals)
    out[:, order] = vals
    return out


@numba.njit(cache=True)
def _omega_closed_nb(t, theta0, s_s, k, hh):
    rk = math.sqrt(k)
    y0 = hh + theta0
    k2 = -rk * s_s + y0
    if rk > 0:
        em = math.expm1(-2.0 * rk * t / s_s)
        em_rk = em / rk
    else:
        em = 0.0
        em_rk = -2.0 * t / s_s
    return s_s * (2.0 * y0 + k2 * em) / (2.0 * s_s - k2 * em_rk) - hh


@numba.njit(cache=True)
def _abc_rhs(t, y, p, s_s, lam, lm, offset, theta0, k, hh):
    gain = _omega_closed_nb(t, theta0, s_s, k, hh) + offset
    big_a, big_b = y[0], y[1]
    coef = -lam + p * gain / (s_s * s_s * (1.0 - p))
    quad = 2.0 * gain * gain / (s_s * s_s)
    out = np.empty(3)
    # derivatives in forward time t; integrated backward from s
    out[0] = -(p / (2.0 * (1.0 - p) ** 2 * s_s * s_s) + 2.0 * coef * big_a + quad * big_a * big_a)
    out[1] = -(coef * big_b + 2.0 * lm * big_a + quad * big_a * big_b)
    out[2] = -(lm * big_b + 0.25 * quad * (big_b * big_b + 2.0 * big_a))
    return out


@numba.njit(cache=True)
def _rk4_abc(s, t_out, p, s_s, lam, lm, offset, theta0, k, hh, h_max):
    # t_out sorted in decreasing order, all <= s
    out = np.empty((3, t_out.size))
    y = np.zeros(3)
    t = s
    for i in range(t_out.size):
        span = t - t_out[i]
        n = int(math.ceil(span / h_max - 1e-9)) if span > 0 else 0
        if n > 0:
            h = -span / n
            for _ in range(n):
                k1 = _abc_rhs(t, y, p, s_s, lam, lm, offset, theta0, k, hh)
                k2 = _abc_rhs(t + 0.5 * h, y + 0.5 * h * k1, p, s_s, lam, lm, offset, theta0, k, hh)
                k3 = _abc_rhs(t + 0.5 * h, y + 0.5 * h * k2, p, s_s, lam, lm, offset, theta0, k, hh)
                k4 = _abc_rhs(t + h, y + h * k3, p, s_s, lam, lm, offset, theta0, k, hh)
                y = y + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
                t += h
        t = t_out[i]
        out[:, i] = y
    return out


def rk4_abc(s: float, t_out, params: ModelParams, step: float = 1e-5) -> np.ndarray:
    """RK4 integration of the ``A, B, C`` ODEs backward from ``A = B = C = 0`` at ``s``.

    The time-dependent coefficients use ``Omega(t)`` at every RK4 substep.
    Returns an array of shape ``(3, len(t_out))``; every ``t_out <= s``.
    """
    t_out = np.asarray(t_out, dtype=float)
    if np.any(t_out > s + 1e-15):
        raise ValueError("rk4_abc needs t <= s")
    order = np.argsort(-t_out, kind="stable")
    k, hh = riccati_constants(params)
    vals = _rk4_abc(float(s), t_out[order], params.p, params.sigma_s, params.lam,
                    params.lam * params.mu_bar, params.drift_gain_offset, params.theta0,
                    k, hh, step)
    out = np.empty_like(vals)
    out[:, order] = vals
    return out


def m_quad(t: float, params: ModelParams, horizon: float | None = None) -> float:
    """``m(t)`` by nested adaptive quadrature of the rate functions themselves."""
    T = params.horizon if horizon is None else horizon
    bps = sorted(set(params.delta_fn.breakpoints()) | set(params.alpha_fn.breakpoints()))

    def rate(v):
        return float(params.delta_fn(v) - params.alpha_fn(v))

    def inner(s):
        pts = [b for b in bps if t < b < s] or None
        return integrate.quad(rate, t, s, points=pts, epsabs=1e-14, epsrel=1e-13, limit=200)[0]

    pts = [b for b in bps if t < b < T] or None
    val, _ = integrate.quad(lambda s: math.exp(inner(s)), t, T, points=pts,
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def crank_nicolson_n(params: ModelParams, eta_min: float, eta_max: float,
                     n_eta: int = 401, n_t: int = 400):
    """Solve the linear PDE for ``N`` backward from ``N(T) = 1`` by Crank-Nicolson.

    The ``eta`` domain is truncated to ``[eta_min, eta_max]`` with the
    linear-extrapolation condition ``N_ee = 0`` at both ends, so accuracy is
    only meaningful away from the edges.  ``m`` in the source term comes from
    :func:`m_quad`.

    Returns ``(t_grid, eta_grid, values)`` with ``values[i, j] = N(t_i, eta_j)``.
    """
    from habitcontrol.closed_form import n_pde_coefficients  # coefficient algebra only

    T = params.horizon
    eta = np.linspace(eta_min, eta_max, n_eta)
    t_grid = np.linspace(0.0, T, n_t + 1)
    he = eta[1] - eta[0]
    k = T / n_t
    p = params.p
    m_vals = np.array([m_quad(t, params) for t in t_grid])
    src_all = (1.0 + params.delta_fn(t_grid) * m_vals) ** (p / (p - 1.0))
    inner = eta[1:-1]
    n_in = inner.size

    def operator(i):
        pot, diff, drift, _ = n_pde_coefficients(t_grid[i], inner, params)
        diff = np.broadcast_to(diff, inner.shape)
        lo = diff / he ** 2 - drift / (2 * he)
        di = -2.0 * diff / he ** 2 + pot
        up = diff / he ** 2 + drift / (2 * he)
        # eliminate the ghost edges with N_0 = 2 N_1 - N_2 and N_{n-1} = 2 N_{n-2} - N_{n-3}
        di = di.copy()
        up = up.copy()
        lo = lo.copy()
        di[0] += 2.0 * lo[0]
        up[0] -= lo[0]
        di[-1] += 2.0 * up[-1]
        lo[-1] -= up[-1]
        lo[0] = 0.0
        up[-1] = 0.0
        return lo, di, up

    def apply(op, v):
        lo, di, up = op
        out = di * v
        out[1:] += lo[1:] * v[:-1]
        out[:-1] += up[:-1] * v[1:]
        return out

    values = np.empty((n_t + 1, n_eta))
    v = np.ones(n_in)
    values[-1] = 1.0
    op_next = operator(n_t)
    for i in range(n_t - 1, -1, -1):
        op_now = operator(i)
        rhs = v + 0.5 * k * apply(op_next, v) + 0.5 * k * (src_all[i] + src_all[i + 1])
        lo, di, up = op_now
        ab = np.zeros((3, n_in))
        ab[0, 1:] = -0.5 * k * up[:-1]
        ab[1] = 1.0 - 0.5 * k * di
        ab[2, :-1] = -0.5 * k * lo[1:]
        v = linalg.solve_banded((1, 1), ab, rhs)
        values[i, 1:-1] = v
        values[i, 0] = 2 * v[0] - v[1]
        values[i, -1] = 2 * v[-1] - v[-2]
        op_next = op_now
    return t_grid, eta, values


def characteristic_n(t: float, eta: float, params: ModelParams) -> float:
    """``N(t, eta)`` by characteristics when the filter gain vanishes.

    Requires ``sigma_mu = 0`` and ``theta0 = 0`` (so ``Omega = 0`` and, with
    ``rho`` irrelevant, the gain ``Omega + sigma_S sigma_mu rho`` is zero).
    The PDE is then first order and ``eta`` moves along
    ``mu_bar + (eta - mu_bar) exp(-lambda (u - t))``.
    """
    if params.sigma_mu != 0.0 or params.theta0 != 0.0:
        raise ValueError("characteristic oracle needs sigma_mu = 0 and theta0 = 0")
    p, lam, mu_bar = params.p, params.lam, params.mu_bar
    kappa = p / (2.0 * (1.0 - p) ** 2 * params.sigma_s ** 2)
    d = eta - mu_bar

    def potential(s):
        # int_t^s kappa * eta(u)^2 du
        return integrate.quad(lambda u: kappa * (mu_bar + d * math.exp(-lam * (u - t))) ** 2,
                              t, s, epsabs=1e-15, epsrel=1e-13)[0]

    def integrand(s):
        src = (1.0 + float(params.delta_fn(s)) * m_quad(s, params)) ** (p / (p - 1.0))
        return src * math.exp(potential(s))

    T = params.horizon
    body = integrate.quad(integrand, t, T, epsabs=1e-14, epsrel=1e-12)[0]
    return body + math.exp(potential(T))


def merton_n(t, eta, params: ModelParams):
    """Analytic ``N`` when ``sigma_mu = lambda = 0`` and ``delta = alpha = 0``.

    The drift estimate is frozen, the source is one, and
    ``N = (e^{k tau} - 1)/k + e^{k tau}`` with ``k = p eta^2 / (2 (1-p)^2 sigma_S^2)``.
    """
    tau = params.horizon - np.asarray(t, dtype=float)
    kk = params.p * np.asarray(eta, dtype=float) ** 2 / (2.0 * (1.0 - params.p) ** 2
                                                         * params.sigma_s ** 2)
    growth = np.where(kk == 0.0, tau, np.expm1(kk * tau) / np.where(kk == 0.0, 1.0, kk))
    return growth + np.exp(kk * tau)


def richardson_derivative(func, x0: float, h: float, order: int = 1, levels: int = 3) -> float:
    """Central finite difference of ``func`` at ``x0``, Richardson-extrapolated.

    ``levels`` step sizes ``h, h/2, ...`` are combined to cancel the
    ``h^2, h^4, ...`` error terms.
    """
    table = []
    for j in range(levels):
        hj = h / 2 ** j
        if order == 1:
            d = (func(x0 + hj) - func(x0 - hj)) / (2.0 * hj)
        elif order == 2:
            d = (func(x0 + hj) - 2.0 * func(x0) + func(x0 - hj)) / (hj * hj)
        else:
            raise ValueError("order must be 1 or 2")
        row = [d]
        for i in range(1, j + 1):
            fac = 4.0 ** i
            row.append((fac * row[i - 1] - table[j - 1][i - 1]) / (fac - 1.0))
        table.append(row)
    return table[-1][-1]


def omega_check_grid(params: ModelParams, n: int = 100, step: float = 1e-5):
    """Closed-form and RK4 ``Omega`` on an ``n``-point grid of ``[0, T]``."""
    t = np.linspace(0.0, params.horizon, n)
    return t, omega_hat_closed(t, params), rk4_omega(t, params, step)
