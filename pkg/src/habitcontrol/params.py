"""Model constants, regime classification and admissibility checks.

``ModelParams`` is the single source of truth for every market, preference,
habit and initial-state constant.  The habit rates ``delta`` and ``alpha`` are
deterministic nonnegative functions of time and are carried as
:class:`RateFunction` objects (constant, affine or a sampled grid).
"""

from __future__ import annotations

import dataclasses
import enum
import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from habitcontrol.errors import ConfigError, ExplosionError

__all__ = [
    "RateFunction",
    "ModelParams",
    "Regime",
    "RegimeClassification",
    "ConditionResult",
    "AdmissibilityReport",
    "classify_regime",
    "check_admissibility",
    "params_from_dict",
    "load_config",
    "default_params",
    "DELTA_ZERO_RTOL",
]

# |Delta| <= DELTA_ZERO_RTOL * max(1, lambda^2) is treated as an exact zero.
DELTA_ZERO_RTOL = 1e-12


@dataclass(frozen=True)
class RateFunction:
    """Nonnegative deterministic rate on ``[0, T]``.

    Three representations are supported: ``constant`` (``coef=(c,)``),
    ``affine`` (``coef=(a, b)`` meaning ``a + b t``) and ``grid`` (knots
    ``t`` and values ``v``, linearly interpolated, held constant outside the
    knot range).
    """

    kind: str
    coef: tuple[float, ...] = ()
    t: tuple[float, ...] = ()
    v: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind == "constant":
            if len(self.coef) != 1:
                raise ConfigError("constant rate needs exactly one coefficient")
        elif self.kind == "affine":
            if len(self.coef) != 2:
                raise ConfigError("affine rate needs coefficients [a, b]")
        elif self.kind == "grid":
            if len(self.t) < 2 or len(self.t) != len(self.v):
                raise ConfigError("grid rate needs >= 2 knots and matching values")
            if any(b <= a for a, b in zip(self.t, self.t[1:])):
                raise ConfigError("grid knots must be strictly increasing")
        else:
            raise ConfigError(f"unknown rate kind {self.kind!r}")
        vals = self.coef + self.t + self.v
        if not all(math.isfinite(x) for x in vals):
            raise ConfigError("rate function contains non-finite numbers")

    @classmethod
    def constant(cls, c: float) -> "RateFunction":
        return cls("constant", coef=(float(c),))

    @classmethod
    def affine(cls, a: float, b: float) -> "RateFunction":
        return cls("affine", coef=(float(a), float(b)))

    @classmethod
    def grid(cls, t, v) -> "RateFunction":
        return cls("grid", t=tuple(float(x) for x in t), v=tuple(float(x) for x in v))

    @classmethod
    def from_config(cls, obj: Any) -> "RateFunction":
        if isinstance(obj, RateFunction):
            return obj
        if _is_number(obj):
            return cls.constant(obj)
        if isinstance(obj, Mapping) and len(obj) == 1:
            if "affine" in obj:
                ab = obj["affine"]
                if not (isinstance(ab, list) and len(ab) == 2 and all(map(_is_number, ab))):
                    raise ConfigError("'affine' must be a list of two numbers")
                return cls.affine(*ab)
            if "grid" in obj:
                g = obj["grid"]
                if not (isinstance(g, Mapping) and set(g) == {"t", "v"}):
                    raise ConfigError("'grid' must be an object with keys 't' and 'v'")
                if not all(isinstance(g[k], list) and all(map(_is_number, g[k])) for k in "tv"):
                    raise ConfigError("grid 't' and 'v' must be lists of numbers")
                return cls.grid(g["t"], g["v"])
        raise ConfigError(f"cannot interpret rate specification {obj!r}")

    def to_config(self) -> Any:
        if self.kind == "constant":
            return self.coef[0]
        if self.kind == "affine":
            return {"affine": list(self.coef)}
        return {"grid": {"t": list(self.t), "v": list(self.v)}}

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full_like(t, self.coef[0])
        if self.kind == "affine":
            return self.coef[0] + self.coef[1] * t
        return np.interp(t, self.t, self.v)

    def antiderivative(self, t):
        """Exact ``int_0^t rate(u) du`` (vectorised)."""
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return self.coef[0] * t
        if self.kind == "affine":
            a, b = self.coef
            return a * t + 0.5 * b * t * t
        return self._grid_primitive(t) - self._grid_primitive(np.zeros(()))

    def _grid_primitive(self, t):
        # primitive anchored at the first knot, constant extrapolation outside
        kt = np.asarray(self.t)
        kv = np.asarray(self.v)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (kv[1:] + kv[:-1]) * np.diff(kt))])
        tc = np.clip(t, kt[0], kt[-1])
        idx = np.clip(np.searchsorted(kt, tc, side="right") - 1, 0, len(kt) - 2)
        dt = tc - kt[idx]
        slope = (kv[idx + 1] - kv[idx]) / (kt[idx + 1] - kt[idx])
        inside = cum[idx] + kv[idx] * dt + 0.5 * slope * dt * dt
        return inside + kv[0] * np.minimum(t - kt[0], 0.0) + kv[-1] * np.maximum(t - kt[-1], 0.0)

    def breakpoints(self) -> tuple[float, ...]:
        return self.t if self.kind == "grid" else ()

    def min_on(self, t0: float, t1: float) -> float:
        pts = [t0, t1] + [x for x in self.breakpoints() if t0 < x < t1]
        return float(np.min(self(np.array(pts))))


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


_FIELD_KEYS = (
    "sigma_s", "sigma_mu", "lambda", "mu_bar", "rho", "p", "horizon",
    "eta0", "theta0", "x0", "z0", "delta_fn", "alpha_fn",
)


@dataclass(frozen=True)
class ModelParams:
    """All constants of the partially observed habit-formation model.

    Parameters
    ----------
    sigma_s, sigma_mu : stock and drift volatilities
    lam : mean-reversion speed of the hidden drift (``lambda`` in configs)
    mu_bar : long-run drift level
    rho : correlation between the stock and drift Brownian motions
    p : power-utility exponent, ``p < 1`` and ``p != 0``
    horizon : terminal time T
    eta0, theta0 : prior mean and variance of the initial drift
    x0, z0 : initial wealth and habit
    delta_fn, alpha_fn : habit intensity and persistence rates
    """

    sigma_s: float = 0.2
    sigma_mu: float = 0.1
    lam: float = 0.5
    mu_bar: float = 0.05
    rho: float = -0.3
    p: float = -1.0
    horizon: float = 1.0
    eta0: float = 0.05
    theta0: float = 0.05
    x0: float = 2.0
    z0: float = 1.0
    delta_fn: RateFunction = field(default_factory=lambda: RateFunction.constant(0.1))
    alpha_fn: RateFunction = field(default_factory=lambda: RateFunction.constant(0.3))

    def __post_init__(self):
        for name in ("delta_fn", "alpha_fn"):
            val = getattr(self, name)
            if not isinstance(val, RateFunction):
                object.__setattr__(self, name, RateFunction.from_config(val))
        for f in dataclasses.fields(self):
            if f.name in ("delta_fn", "alpha_fn"):
                continue
            val = getattr(self, f.name)
            if not _is_number(val) or not math.isfinite(val):
                raise ConfigError(f"{f.name} must be a finite number, got {val!r}")
            object.__setattr__(self, f.name, float(val))
        if self.sigma_s <= 0:
            raise ConfigError("sigma_s must be > 0")
        if self.sigma_mu < 0:
            raise ConfigError("sigma_mu must be >= 0")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if not -1.0 <= self.rho <= 1.0:
            raise ConfigError("rho must lie in [-1, 1]")
        if not self.p < 1.0 or self.p == 0.0:
            raise ConfigError("p must satisfy p < 1 and p != 0")
        if self.horizon <= 0:
            raise ConfigError("horizon must be > 0")
        if self.theta0 < 0:
            raise ConfigError("theta0 must be >= 0")
        if self.x0 <= 0:
            raise ConfigError("x0 must be > 0")
        if self.z0 < 0:
            raise ConfigError("z0 must be >= 0")
        for name in ("delta_fn", "alpha_fn"):
            rate = getattr(self, name)
            if rate.kind == "grid" and (rate.t[0] > 0 or rate.t[-1] < self.horizon):
                raise ConfigError(f"{name} grid must cover [0, horizon]")
            if rate.min_on(0.0, self.horizon) < 0:
                raise ConfigError(f"{name} must be nonnegative on [0, horizon]")

    # derived constants used across modules
    @property
    def drift_gain_offset(self) -> float:
        """``sigma_S sigma_mu rho``, added to Omega in every filter gain."""
        return self.sigma_s * self.sigma_mu * self.rho

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for key in _FIELD_KEYS:
            attr = "lam" if key == "lambda" else key
            val = getattr(self, attr)
            out[key] = val.to_config() if isinstance(val, RateFunction) else val
        return out


def params_from_dict(cfg: Mapping[str, Any]) -> ModelParams:
    """Build :class:`ModelParams` from a config mapping (strict schema)."""
    if not isinstance(cfg, Mapping):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - set(_FIELD_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = set(_FIELD_KEYS) - set(cfg)
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")
    kwargs = {("lam" if k == "lambda" else k): v for k, v in cfg.items()}
    for k in ("delta_fn", "alpha_fn"):
        kwargs[k] = RateFunction.from_config(kwargs[k])
    return ModelParams(**kwargs)


def load_config(path) -> ModelParams:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    return params_from_dict(cfg)


def default_params() -> ModelParams:
    """The p = -1 reference tuple used by the verification harness."""
    return ModelParams()


class Regime(str, enum.Enum):
    NORMAL = "Normal"
    HYPERBOLIC = "Hyperbolic"
    POLYNOMIAL = "Polynomial"
    TANGENT = "Tangent"


@dataclass(frozen=True)
class RegimeClassification:
    """Closed-form family of the auxiliary Riccati system plus its constants.

    ``xi`` is ``sqrt(Delta)`` (zero when Delta is treated as zero, ``nan`` in
    the Tangent case), ``zeta`` and ``varpi`` are only set for Tangent.
    """

    case: Regime
    delta_disc: float
    gamma1: float
    gamma2: float
    gamma3: float
    xi: float
    xi1: float
    zeta: float | None = None
    varpi: float | None = None
    critical_horizon: float | None = None

    @property
    def is_zero_disc(self) -> bool:
        return self.case in (Regime.HYPERBOLIC, Regime.POLYNOMIAL)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["case"] = self.case.value
        return d


def regime_constants(params: ModelParams) -> tuple[float, float, float, float]:
    """Return ``(gamma1, gamma2, gamma3, Delta)`` with ``Delta = gamma2^2 - gamma1 gamma3``."""
    p, rho, s_s, s_m = params.p, params.rho, params.sigma_s, params.sigma_mu
    gamma1 = (1.0 - p + p * rho * rho) / (1.0 - p) * s_m * s_m
    gamma2 = -params.lam + p * rho * s_m / ((1.0 - p) * s_s)
    gamma3 = p / ((1.0 - p) * s_s * s_s)
    return gamma1, gamma2, gamma3, gamma2 * gamma2 - gamma1 * gamma3


@functools.lru_cache(maxsize=256)
def classify_regime(params: ModelParams) -> RegimeClassification:
    """Classify the auxiliary Riccati system into its closed-form family.

    Normal if ``Delta > 0``, Tangent if ``Delta < 0``; a zero discriminant is
    Hyperbolic when ``gamma2 != 0`` and Polynomial otherwise.  The blow-up
    horizon is the first positive zero of ``cosh(xi tau) - gamma2 sinh(xi tau)/xi``
    (and its Delta <= 0 analogues).
    """
    g1, g2, g3, disc = regime_constants(params)
    s_s = params.sigma_s
    q = params.lam * s_s + params.rho * params.sigma_mu
    xi1 = math.sqrt((1.0 - params.rho ** 2) * params.sigma_mu ** 2 + q * q) / s_s
    tol = DELTA_ZERO_RTOL * max(1.0, params.lam ** 2)
    if abs(disc) <= tol:
        if abs(g2) <= DELTA_ZERO_RTOL * max(1.0, params.lam):
            return RegimeClassification(Regime.POLYNOMIAL, disc, g1, g2, g3, 0.0, xi1)
        crit = 1.0 / g2 if g2 > 0 else None
        return RegimeClassification(Regime.HYPERBOLIC, disc, g1, g2, g3, 0.0, xi1,
                                    critical_horizon=crit)
    if disc > 0:
        xi = math.sqrt(disc)
        crit = None
        if g2 > xi:
            crit = math.log((g2 + xi) / (g2 - xi)) / (2.0 * xi)
        return RegimeClassification(Regime.NORMAL, disc, g1, g2, g3, xi, xi1,
                                    critical_horizon=crit)
    zeta = math.sqrt(-disc)
    varpi = math.atan(g2 / zeta)
    crit = math.pi / (2.0 * zeta) - varpi / zeta
    return RegimeClassification(Regime.TANGENT, disc, g1, g2, g3, math.nan, xi1,
                                zeta=zeta, varpi=varpi, critical_horizon=crit)


def require_no_explosion(params: ModelParams, regime: RegimeClassification | None = None):
    regime = regime or classify_regime(params)
    crit = regime.critical_horizon
    if crit is not None and params.horizon >= crit:
        raise ExplosionError(
            f"horizon {params.horizon!r} >= critical horizon {crit!r} ({regime.case.value} regime)",
            t=0.0, s=crit,
        )


@dataclass(frozen=True)
class ConditionResult:
    name: str
    passed: bool
    detail: str = ""
    lhs: float | None = None
    rhs: float | None = None


@dataclass(frozen=True)
class AdmissibilityReport:
    conditions: tuple[ConditionResult, ...]
    m0: float

    @property
    def nonempty(self) -> bool:
        """Admissible set is nonempty (weak budget ``x0 >= m(0) z0``)."""
        return self._get("budget_nonempty").passed

    @property
    def admissible(self) -> bool:
        """Every hypothesis of the verification theorem holds (strict budget)."""
        return all(c.passed for c in self.conditions)

    @property
    def violated(self) -> list[str]:
        return [c.name for c in self.conditions if not c.passed]

    def _get(self, name) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def __getitem__(self, name) -> ConditionResult:
        return self._get(name)

    def to_dict(self) -> dict:
        return {
            "admissible": self.admissible,
            "nonempty": self.nonempty,
            "m0": self.m0,
            "conditions": [dataclasses.asdict(c) for c in self.conditions],
        }


def check_admissibility(params: ModelParams, k1_bar: float | None = None,
                        scan=None, grid_n: int = 20) -> AdmissibilityReport:
    """Check the budget constraint and the verification-theorem hypotheses.

    Parameters
    ----------
    params : model constants
    k1_bar : supremum of ``A(t;s)`` over the triangular grid.  Computed from
        ``scan`` (or a fresh :func:`habitcontrol.closed_form.triangle_scan`)
        when omitted.
    scan : optional precomputed :class:`habitcontrol.closed_form.TriangleScan`
    grid_n : points per axis of the triangular ``(t, s)`` grid

    Raises
    ------
    ConfigError
        if ``m(0)`` is not a finite number.
    """
    from habitcontrol import closed_form, filtering

    try:
        m0 = float(closed_form.m_of_t(0.0, params))
    except (ValueError, FloatingPointError) as exc:
        raise ConfigError(f"cannot evaluate m(0): {exc}") from exc
    if not math.isfinite(m0):
        raise ConfigError("m(0) is not finite; check delta/alpha")

    conds = []
    budget = m0 * params.z0
    conds.append(ConditionResult("budget_nonempty", params.x0 >= budget,
                                 "x0 >= m(0) z0", params.x0, budget))
    conds.append(ConditionResult("budget_strict", params.x0 > budget,
                                 "x0 > m(0) z0", params.x0, budget))

    regime = classify_regime(params)
    crit = regime.critical_horizon
    explodes = crit is not None and params.horizon >= crit
    conds.append(ConditionResult("no_explosion", not explodes,
                                 f"{regime.case.value} regime, critical horizon {crit}",
                                 params.horizon, crit))

    if scan is None and not explodes:
        scan = closed_form.triangle_scan(params, grid_n)
    bounded = scan is not None and scan.finite
    conds.append(ConditionResult("aux_bounded", bounded,
                                 "a, b, c, f, g finite on the (t, s) grid"))

    if params.p > 0:
        pos = scan is not None and scan.min_one_minus_2a_omega > 0
        conds.append(ConditionResult(
            "one_minus_2a_omega_positive", pos,
            "1 - 2 a Omega != 0 (and > 0 for the real log) on the grid",
            None if scan is None else scan.min_one_minus_2a_omega, 0.0))
        theta_star = filtering.steady_state_theta(params)
        big_theta = max(params.theta0, theta_star)
        gain = big_theta + params.drift_gain_offset
        p = params.p
        lhs = p * (1 + p) / (1 - p) ** 2
        rhs = math.inf if gain == 0 else params.lam ** 2 * params.sigma_s ** 4 / (4 * gain ** 2)
        conds.append(ConditionResult("moment_bound", lhs < rhs,
                                     "p(1+p)/(1-p)^2 < lambda^2 sigma_S^4 / (4 (Theta + sigma_S sigma_mu rho)^2)",
                                     lhs, rhs))
        if k1_bar is None and scan is not None:
            k1_bar = scan.k1_bar
        rhs2 = math.inf if gain == 0 else params.lam * params.sigma_s ** 2 / gain ** 2
        ok2 = k1_bar is not None and 4 * k1_bar < rhs2
        conds.append(ConditionResult("a_upper_bound", ok2,
                                     "4 K1bar < lambda sigma_S^2 / (Theta + sigma_S sigma_mu rho)^2",
                                     None if k1_bar is None else 4 * k1_bar, rhs2))
    return AdmissibilityReport(tuple(conds), m0)
