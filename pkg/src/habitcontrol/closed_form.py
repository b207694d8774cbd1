"""Closed-form pieces of the reduced HJB solution.

This module evaluates

* the subsistence cost ``m(t) = int_t^T exp(int_t^s (delta - alpha) dv) ds``;
* the auxiliary quintuple ``a, b, c, f, g`` as functions of the time to go
  ``tau = s - t`` (constant-coefficient Riccati system);
* the coefficients ``A, B, C`` of ``exp(A eta^2 + B eta + C)`` obtained from
  the quintuple and the filter variance ``Omega(t)``;
* the function ``N(t, eta)`` and its first two ``eta`` derivatives;
* finite-difference residuals of the linear PDE solved by ``N``.

All four families (Normal, Hyperbolic, Polynomial, Tangent) are evaluated
through the same entire functions of ``x = Delta tau^2``::

    c(x) = cosh(sqrt x),     s(x) = sinh(sqrt x)/sqrt x,   k(x) = (c - 1)/x,

continued to ``cos``/``sin`` for ``x < 0`` and replaced by their Taylor
series near ``x = 0``.  This keeps the formulas accurate across the regime
boundaries, where the textbook forms cancel catastrophically.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from habitcontrol.errors import DomainError, ExplosionError, NumericError, SingularityError
from habitcontrol.filtering import omega_hat_closed
from habitcontrol.params import ModelParams, RegimeClassification, classify_regime

__all__ = [
    "SubsistenceCost",
    "subsistence_cost",
    "m_of_t",
    "AuxQuintuple",
    "AbcTriple",
    "aux_quintuple",
    "aux_values",
    "abc_from_aux",
    "abc_values",
    "NEvaluator",
    "n_evaluator",
    "n_function",
    "n_eta",
    "n_eta_eta",
    "TriangleScan",
    "triangle_scan",
    "ResidualReport",
    "pde_residual_n",
    "time_stencil",
    "shifted_times",
    "SINGULARITY_TOL",
]

SINGULARITY_TOL = 1e-12
DEFAULT_PANELS = 400

# ---------------------------------------------------------------------------
# subsistence cost m(t)
# ---------------------------------------------------------------------------

_SIMPSON_M_PANELS = 200


def _simpson_weights(n_panels: int) -> np.ndarray:
    """Composite Simpson weights on ``[0, 1]`` with an even number of panels."""
    if n_panels < 2 or n_panels % 2:
        raise ValueError("Simpson rule needs an even number of panels >= 2")
    w = np.ones(n_panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / (3.0 * n_panels)


class SubsistenceCost:
    """Evaluator of ``m(t)``, the wealth needed per unit of habit.

    The inner integral uses the exact antiderivative of ``delta - alpha``;
    the outer one is composite Simpson, split at grid knots so that every
    piece has a smooth integrand.

    Parameters
    ----------
    params : model constants
    horizon : terminal time; defaults to ``params.horizon``.  A longer horizon
        gives the "time-shifted" cost used by one of the perturbed policies.
    panels : Simpson panels per piece
    """

    def __init__(self, params: ModelParams, horizon: float | None = None,
                 panels: int = _SIMPSON_M_PANELS):
        self.params = params
        self.horizon = params.horizon if horizon is None else float(horizon)
        self.panels = panels
        self._w = _simpson_weights(panels)
        self._u = np.linspace(0.0, 1.0, panels + 1)
        bps = set(params.delta_fn.breakpoints()) | set(params.alpha_fn.breakpoints())
        inner = sorted(b for b in bps if 0.0 < b < self.horizon)
        self.knots = np.array([0.0] + inner + [self.horizon])
        # seg[j] = int_{knot_j}^{knot_{j+1}} exp(F(u) - F(knot_j)) du
        lo, hi = self.knots[:-1], self.knots[1:]
        self._seg = np.array([self._piece(a, b) for a, b in zip(lo, hi)])
        self._f_knots = self._big_f(self.knots)

    def _big_f(self, t):
        p = self.params
        return p.delta_fn.antiderivative(t) - p.alpha_fn.antiderivative(t)

    def _piece(self, a, b):
        """``int_a^b exp(F(u) - F(a)) du`` for arrays ``a <= b`` of equal shape."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        nodes = a[..., None] + (b - a)[..., None] * self._u
        vals = np.exp(self._big_f(nodes) - self._big_f(a)[..., None])
        return (b - a) * (vals @ self._w)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-12) or np.any(t > self.horizon + 1e-12):
            raise DomainError("m(t) requires 0 <= t <= horizon")
        tc = np.clip(t, 0.0, self.horizon).ravel()
        j = np.clip(np.searchsorted(self.knots, tc, side="right") - 1, 0, len(self.knots) - 2)
        first = self._piece(tc, self.knots[j + 1])
        f_t = self._big_f(tc)
        # contributions of the whole pieces after the one containing t
        scaled = np.exp(self._f_knots[1:-1][None, :] - f_t[:, None]) * self._seg[1:][None, :]
        mask = np.arange(1, len(self.knots) - 1)[None, :] > j[:, None]
        rest = np.sum(np.where(mask, scaled, 0.0), axis=1)
        out = np.where(tc >= self.horizon, 0.0, first + rest).reshape(t.shape)
        return float(out) if out.ndim == 0 else out

    def derivative(self, t):
        """``m'(t) = (alpha - delta) m - 1`` from the defining ODE."""
        p = self.params
        return (p.alpha_fn(t) - p.delta_fn(t)) * self(t) - 1.0


@functools.lru_cache(maxsize=64)
def subsistence_cost(params: ModelParams, horizon: float | None = None) -> SubsistenceCost:
    return SubsistenceCost(params, horizon)


def m_of_t(t, params: ModelParams):
    """Subsistence cost ``m(t)``; ``m(T) = 0`` exactly."""
    return subsistence_cost(params)(t)


# ---------------------------------------------------------------------------
# entire functions of x = Delta tau^2
# ---------------------------------------------------------------------------

_SERIES_RADIUS = 4.0
_SERIES_TERMS = 30
_FACT = np.array([math.factorial(i) for i in range(2 * _SERIES_TERMS + 4)], dtype=float)


def _series(x, coeffs):
    out = np.zeros_like(x)
    for coef in coeffs[::-1]:
        out = out * x + coef
    return out


_N = np.arange(_SERIES_TERMS)
_C_COEF = 1.0 / _FACT[2 * _N]
_S_COEF = 1.0 / _FACT[2 * _N + 1]
_K_COEF = 1.0 / _FACT[2 * _N + 2]
_P1_COEF = 2.0 * (_N + 1) / _FACT[2 * _N + 3]
_P2_COEF = -(2.0 * (_N + 2) - 2.0) / _FACT[2 * _N + 4]


def basis_functions(x):
    """Return ``(c, s, k, p1, p2)`` evaluated at ``x``.

    ``p1 = (c - s)/x`` and ``p2 = (2k - s)/x`` are the combinations that
    appear in the auxiliary ``c`` function.
    """
    x = np.asarray(x, dtype=float)
    c = np.empty_like(x)
    s = np.empty_like(x)
    k = np.empty_like(x)
    p1 = np.empty_like(x)
    p2 = np.empty_like(x)
    small = np.abs(x) < _SERIES_RADIUS
    if np.any(small):
        xs = x[small]
        c[small] = _series(xs, _C_COEF)
        s[small] = _series(xs, _S_COEF)
        k[small] = _series(xs, _K_COEF)
        p1[small] = _series(xs, _P1_COEF)
        p2[small] = _series(xs, _P2_COEF)
    for sign in (1.0, -1.0):
        sel = ~small & (np.sign(x) == sign)
        if not np.any(sel):
            continue
        xs = x[sel]
        r = np.sqrt(sign * xs)
        with np.errstate(over="ignore"):
            if sign > 0:
                cc, ss = np.cosh(r), np.sinh(r) / r
            else:
                cc, ss = np.cos(r), np.sin(r) / r
        kk = (cc - 1.0) / xs
        c[sel], s[sel], k[sel] = cc, ss, kk
        p1[sel] = (cc - ss) / xs
        p2[sel] = (2.0 * kk - ss) / xs
    return c, s, k, p1, p2


# ---------------------------------------------------------------------------
# auxiliary quintuple a, b, c, f, g
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuxQuintuple:
    """Auxiliary functions at ``(t; s)``; scalars or equal-shape arrays."""

    a: object
    b: object
    c: object
    f: object
    g: object

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.f, self.g], dtype=float)


@dataclass(frozen=True)
class AbcTriple:
    """Coefficients of ``exp(A eta^2 + B eta + C)`` at ``(t; s)``."""

    A: object
    B: object
    C: object

    def as_array(self) -> np.ndarray:
        return np.array([self.A, self.B, self.C], dtype=float)


def _disc_for(regime: RegimeClassification) -> float:
    return 0.0 if regime.is_zero_disc else regime.delta_disc


def aux_values(tau, params: ModelParams, regime: RegimeClassification | None = None,
               t=None, s=None):
    """Vectorised auxiliary functions at time to go ``tau >= 0``.

    Returns a tuple ``(a, b, c, f, g)`` of arrays shaped like ``tau``.

    Raises
    ------
    ExplosionError
        if some ``tau`` reaches the critical horizon of the regime.
    NumericError
        if a logarithm argument leaves its domain or a value is not finite.
    """
    regime = regime or classify_regime(params)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise DomainError("aux functions need s >= t")
    crit = regime.critical_horizon
    if crit is not None and np.any(tau >= crit):
        bad = np.flatnonzero(np.ravel(tau) >= crit)[0]
        t_bad = None if t is None else float(np.broadcast_to(t, tau.shape).ravel()[bad])
        s_bad = None if s is None else float(np.broadcast_to(s, tau.shape).ravel()[bad])
        raise ExplosionError(
            f"time to go {float(np.ravel(tau)[bad])!r} reaches the critical horizon {crit!r}",
            t=t_bad, s=s_bad)

    p, rho, s_s = params.p, params.rho, params.sigma_s
    g2, g3 = regime.gamma2, regime.gamma3
    disc = _disc_for(regime)
    lam_mu = params.lam * params.mu_bar
    r = (1.0 - p) / (1.0 - p + p * rho * rho)

    cc, ss, kk, p1, p2 = basis_functions(disc * tau * tau)
    sfun = tau * ss
    kfun = tau * tau * kk
    w = cc - g2 * sfun
    wm1 = disc * tau * tau * kk - g2 * sfun
    if np.any(w <= 0):
        raise ExplosionError("auxiliary Riccati solution left its domain (w <= 0)")
    log_w = np.log1p(wm1)
    a = g3 * sfun / (2.0 * w)
    b = lam_mu * g3 * kfun / w
    q_fun = tau ** 3 * (p1 + g2 * tau * p2) / w
    c = -0.5 * r * (g2 * tau + log_w) + 0.5 * lam_mu * lam_mu * g3 * q_fun

    q = params.lam * s_s + rho * params.sigma_mu
    disc1 = regime.xi1 ** 2
    c1, s1, k1, _, _ = basis_functions(disc1 * tau * tau)
    s1fun = tau * s1
    w1 = c1 + (q / s_s) * s1fun
    if np.any(w1 <= 0):
        raise NumericError("f-equation denominator is not positive")
    log_w1 = np.log1p(disc1 * tau * tau * k1 + (q / s_s) * s1fun)
    f = -s1fun / (2.0 * s_s * s_s * w1)
    g = 0.5 * (log_w1 - q * tau / s_s) - 0.5 * r * (1.0 - rho * rho) * (g2 * tau + log_w)

    out = (a, b, c, f, g)
    if not all(np.all(np.isfinite(v)) for v in out):
        raise NumericError("non-finite auxiliary function value")
    return out


def aux_quintuple(t, s, regime: RegimeClassification | None, params: ModelParams) -> AuxQuintuple:
    """Auxiliary functions ``a, b, c, f, g`` at ``(t; s)`` with ``0 <= t <= s <= T``."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    tol = 1e-12 * max(1.0, params.horizon)
    if np.any(t < -tol) or np.any(s > params.horizon + tol) or np.any(t > s + tol):
        raise DomainError("aux_quintuple needs 0 <= t <= s <= T")
    tau = np.maximum(s - t, 0.0)
    vals = aux_values(tau, params, regime, t=t, s=s)
    if tau.ndim == 0:
        vals = [float(v) for v in vals]
    return AuxQuintuple(*vals)


def abc_from_aux(t, s, quintuple: AuxQuintuple, omega, params: ModelParams) -> AbcTriple:
    """Map the auxiliary quintuple and ``Omega(t)`` to ``(A, B, C)``.

    Raises
    ------
    SingularityError
        if ``|1 - 2 a Omega| < 1e-12``.
    DomainError
        if a logarithm argument ``1 - 2 a Omega`` or ``1 - 2 f Omega`` is not positive.
    """
    a, b, c, f, g = (np.asarray(v, dtype=float) for v in
                     (quintuple.a, quintuple.b, quintuple.c, quintuple.f, quintuple.g))
    omega = np.asarray(omega, dtype=float)
    p = params.p
    two_a_om = 2.0 * a * omega
    d = 1.0 - two_a_om
    if np.any(np.abs(d) < SINGULARITY_TOL):
        idx = np.flatnonzero(np.ravel(np.abs(d) < SINGULARITY_TOL))[0]
        raise SingularityError("1 - 2 a Omega vanishes",
                               t=_pick(t, d.shape, idx), s=_pick(s, d.shape, idx))
    if np.any(d <= 0):
        raise DomainError("1 - 2 a Omega is negative; real logarithm undefined")
    d1 = 1.0 - 2.0 * f * omega
    if np.any(d1 <= 0):
        raise DomainError("1 - 2 f Omega is not positive")
    scale = 1.0 / ((1.0 - p) * d)
    big_a = a * scale
    big_b = b * scale
    big_c = (c + omega * b * b / (2.0 * d) - 0.5 * (1.0 - p) * np.log1p(-two_a_om)
             - 0.5 * p * np.log1p(-2.0 * f * omega) - p * g) / (1.0 - p)
    if big_a.ndim == 0:
        return AbcTriple(float(big_a), float(big_b), float(big_c))
    return AbcTriple(big_a, big_b, big_c)


def _pick(v, shape, idx):
    if v is None:
        return None
    return float(np.broadcast_to(np.asarray(v, dtype=float), shape).ravel()[idx])


def abc_values(t, s, params: ModelParams, regime: RegimeClassification | None = None) -> AbcTriple:
    """``A, B, C`` at ``(t; s)`` (broadcast arrays) straight from the parameters."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    t, s = np.broadcast_arrays(t, s)
    quint = aux_quintuple(t, s, regime, params)
    return abc_from_aux(t, s, quint, omega_hat_closed(t, params), params)


# ---------------------------------------------------------------------------
# N(t, eta)
# ---------------------------------------------------------------------------

class NEvaluator:
    """Evaluate ``N(t, eta)`` and its ``eta`` derivatives.

    ``N(t, eta) = int_t^T src(s) E(t, s, eta) ds + E(t, T, eta)`` with
    ``E = exp(A eta^2 + B eta + C)`` and ``src = (1 + delta m)^(p/(p-1))``.
    The ``s`` integral is composite Simpson with ``panels`` panels on ``[t, T]``.
    Coefficients for a given ``t`` are cached, so evaluating many ``eta`` at a
    common ``t`` (one simulation step) costs a single coefficient sweep.
    """

    def __init__(self, params: ModelParams, panels: int = DEFAULT_PANELS, cache_size: int = 4096):
        self.params = params
        self.panels = panels
        self.regime = classify_regime(params)
        self.m = subsistence_cost(params)
        self._w = _simpson_weights(panels)
        self._u = np.linspace(0.0, 1.0, panels + 1)
        self._coeffs = functools.lru_cache(maxsize=cache_size)(self._coeffs_uncached)

    def source(self, s):
        p = self.params
        return (1.0 + p.delta_fn(s) * self.m(s)) ** (p.p / (p.p - 1.0))

    def _coeffs_uncached(self, t: float):
        T = self.params.horizon
        s_nodes = t + (T - t) * self._u
        tri = abc_values(np.full_like(s_nodes, t), s_nodes, self.params, self.regime)
        weights = (T - t) * self._w * self.source(s_nodes)
        big_a = np.append(tri.A, tri.A[-1])
        big_b = np.append(tri.B, tri.B[-1])
        big_c = np.append(tri.C, tri.C[-1])
        # the terminal exponential is carried as an extra node with unit weight
        weights = np.append(weights, 1.0)
        return big_a, big_b, big_c, weights

    def coefficients(self, t: float):
        t = float(t)
        T = self.params.horizon
        if t < -1e-12 or t > T + 1e-12:
            raise DomainError("N(t, eta) needs 0 <= t <= T")
        return self._coeffs(min(max(t, 0.0), T))

    def evaluate(self, t: float, eta, order: int = 0):
        """Return ``N`` (order 0), ``(N, N_eta)`` (1) or ``(N, N_eta, N_eta_eta)`` (2)."""
        big_a, big_b, big_c, weights = self.coefficients(t)
        eta = np.asarray(eta, dtype=float)
        e = eta.reshape(-1)
        expo = big_a[:, None] * e * e + big_b[:, None] * e + big_c[:, None]
        terms = weights[:, None] * np.exp(expo)
        n = terms.sum(axis=0).reshape(eta.shape)
        if order == 0:
            return _maybe_float(n)
        lin = 2.0 * big_a[:, None] * e + big_b[:, None]
        n_e = (terms * lin).sum(axis=0).reshape(eta.shape)
        if order == 1:
            return _maybe_float(n), _maybe_float(n_e)
        n_ee = (terms * (lin * lin + 2.0 * big_a[:, None])).sum(axis=0).reshape(eta.shape)
        return _maybe_float(n), _maybe_float(n_e), _maybe_float(n_ee)

    def __call__(self, t, eta):
        return self.evaluate(t, eta, 0)

    def eta(self, t, eta):
        return self.evaluate(t, eta, 1)[1]

    def eta_eta(self, t, eta):
        return self.evaluate(t, eta, 2)[2]

    def grid(self, t_grid, eta_grid, order: int = 0):
        """Evaluate on the tensor mesh ``t_grid x eta_grid`` (rows are times)."""
        rows = [self.evaluate(t, eta_grid, order) for t in np.asarray(t_grid, dtype=float)]
        if order == 0:
            return np.array(rows)
        return tuple(np.array(r) for r in zip(*rows))


def _maybe_float(v):
    return float(v) if np.ndim(v) == 0 else v


@functools.lru_cache(maxsize=32)
def n_evaluator(params: ModelParams, panels: int = DEFAULT_PANELS) -> NEvaluator:
    return NEvaluator(params, panels)


def n_function(t, eta, params: ModelParams, panels: int = DEFAULT_PANELS):
    """``N(t, eta)``; strictly positive, equal to 1 at ``t = T``."""
    return n_evaluator(params, panels)(t, eta)


def n_eta(t, eta, params: ModelParams, panels: int = DEFAULT_PANELS):
    """Analytic ``dN/deta``: each exponential term weighted by ``2 A eta + B``."""
    return n_evaluator(params, panels).eta(t, eta)


def n_eta_eta(t, eta, params: ModelParams, panels: int = DEFAULT_PANELS):
    return n_evaluator(params, panels).eta_eta(t, eta)


# ---------------------------------------------------------------------------
# triangular (t, s) scan used by the admissibility check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TriangleScan:
    """Auxiliary and mapped values on the triangle ``0 <= t <= s <= T``."""

    t: np.ndarray
    s: np.ndarray
    aux: np.ndarray  # shape (5, n_points)
    abc: np.ndarray  # shape (3, n_points), nan where the mapping failed
    finite: bool
    min_one_minus_2a_omega: float
    k1_bar: float


def triangle_points(horizon: float, n: int = 20):
    grid = np.linspace(0.0, horizon, n)
    ti, si = np.meshgrid(grid, grid, indexing="ij")
    keep = ti <= si
    return ti[keep], si[keep]


def triangle_scan(params: ModelParams, n: int = 20) -> TriangleScan:
    """Evaluate the quintuple and ``A, B, C`` on an ``n x n`` triangular grid."""
    t, s = triangle_points(params.horizon, n)
    regime = classify_regime(params)
    try:
        quint = aux_quintuple(t, s, regime, params)
        aux = quint.as_array()
        finite = bool(np.all(np.isfinite(aux)))
    except (ExplosionError, NumericError):
        nan = np.full((5, t.size), np.nan)
        return TriangleScan(t, s, nan, np.full((3, t.size), np.nan), False, math.nan, math.nan)
    omega = omega_hat_closed(t, params)
    one_minus = 1.0 - 2.0 * aux[0] * omega
    try:
        abc = abc_from_aux(t, s, quint, omega, params).as_array()
    except (SingularityError, DomainError):
        abc = np.full((3, t.size), np.nan)
    k1_bar = float(np.nanmax(abc[0])) if np.any(np.isfinite(abc[0])) else math.nan
    return TriangleScan(t, s, aux, abc, finite, float(np.min(one_minus)), k1_bar)


# ---------------------------------------------------------------------------
# PDE residual of N
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResidualReport:
    """Finite-difference residual evaluated at a fixed set of points.

    ``field`` has one entry per evaluation point; ``steps`` are the
    finite-difference spacings that produced it.
    """

    max_abs: float
    l2: float
    field: np.ndarray
    steps: tuple

    def to_dict(self) -> dict:
        return {"max_abs": self.max_abs, "l2": self.l2, "steps": list(self.steps),
                "n_points": int(self.field.size)}


def time_stencil(t, h: float, horizon: float) -> np.ndarray:
    """Weights ``W[i, k]`` on offsets ``k = -2..2`` for ``d/dt`` at each time ``t_i``.

    Central differences where ``t +- h`` stays inside ``[0, T]``, three-point
    one-sided second-order stencils at the ends.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    w = np.zeros((t.size, 5))
    tol = 1e-12 * max(1.0, horizon)
    for i, ti in enumerate(t):
        if ti - h < -tol:
            w[i, 2:] = np.array([-3.0, 4.0, -1.0]) / (2.0 * h)
        elif ti + h > horizon + tol:
            w[i, :3] = np.array([1.0, -4.0, 3.0]) / (2.0 * h)
        else:
            w[i, 1], w[i, 3] = -0.5 / h, 0.5 / h
    return w


def shifted_times(t, h: float, horizon: float) -> list:
    """``t + k h`` for ``k = -2..2``, clipped into ``[0, T]`` (clipped entries get zero weight)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return [np.clip(t + k * h, 0.0, horizon) for k in range(-2, 3)]


def n_pde_coefficients(t, eta, params: ModelParams):
    """Coefficients of the linear PDE for ``N`` at ``(t, eta)``.

    Returns ``(potential, diffusion, drift, source)`` so that the PDE reads
    ``N_t + potential N + diffusion N_ee + drift N_e + source = 0``.
    """
    p, s_s = params.p, params.sigma_s
    t = np.asarray(t, dtype=float)
    gain = omega_hat_closed(t, params) + params.drift_gain_offset
    m = m_of_t(t, params)
    potential = p * eta * eta / (2.0 * (1.0 - p) ** 2 * s_s * s_s)
    diffusion = gain * gain / (2.0 * s_s * s_s)
    drift = -params.lam * (eta - params.mu_bar) + eta * gain * p / ((1.0 - p) * s_s * s_s)
    source = (1.0 + params.delta_fn(t) * m) ** (p / (p - 1.0))
    return potential, diffusion, drift, source


def pde_residual_n(t_points, eta_points, params: ModelParams, h_t: float = 5e-3,
                   h_eta: float = 5e-3, scale: float = 1.0, offset: float = 0.0,
                   panels: int = DEFAULT_PANELS) -> ResidualReport:
    """Finite-difference residual of the linear PDE satisfied by ``N``.

    The residual is evaluated on the tensor mesh ``t_points x eta_points``
    with spacings ``h_t`` and ``h_eta``; halving both should divide it by
    about four.  ``scale`` and ``offset`` replace ``N`` by ``scale N + offset``
    to build negative controls.
    """
    t = np.atleast_1d(np.asarray(t_points, dtype=float))
    e = np.atleast_1d(np.asarray(eta_points, dtype=float))
    T = params.horizon
    ev = n_evaluator(params, panels)

    def table(tt, ee):
        return scale * ev.grid(tt, ee) + offset

    w = time_stencil(t, h_t, T)
    tabs = [table(ts, e) for ts in shifted_times(t, h_t, T)]
    n0 = tabs[2]
    n_t = sum(w[:, k, None] * tabs[k] for k in range(5))
    n_plus = table(t, e + h_eta)
    n_minus = table(t, e - h_eta)
    n_e = (n_plus - n_minus) / (2.0 * h_eta)
    n_ee = (n_plus - 2.0 * n0 + n_minus) / (h_eta * h_eta)
    tt, ee = np.meshgrid(t, e, indexing="ij")
    pot, diff, drift, src = n_pde_coefficients(tt, ee, params)
    field = n_t + pot * n0 + diff * n_ee + drift * n_e + src
    return ResidualReport(float(np.max(np.abs(field))), float(np.sqrt(np.mean(field ** 2))),
                          field, (h_t, h_eta))
