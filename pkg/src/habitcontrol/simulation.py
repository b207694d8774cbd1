"""Monte-Carlo simulation of the partially observed market under feedback policies.

Every path carries the hidden drift ``mu`` (exact Ornstein-Uhlenbeck
transition), the stock ``S`` (arithmetic Euler step), the filter ``mu_hat``
driven only by observed returns, and wealth ``X`` and habit ``Z`` under a
feedback policy evaluated at ``(t, X, Z, mu_hat)``.  Several policies can be
run side by side on the same noise (common random numbers); since the filter
does not depend on the policy, they also share ``mu_hat`` and every
evaluation of ``N`` along the way.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from habitcontrol.closed_form import SubsistenceCost
from habitcontrol.errors import ConfigError, PolicyError
from habitcontrol.filtering import filter_update
from habitcontrol.params import ModelParams
from habitcontrol.policy import ValueModel, value_model

__all__ = [
    "SimConfig",
    "SimPath",
    "StepContext",
    "FeedbackPolicy",
    "OptimalPolicy",
    "SubsistencePolicy",
    "ScaledPiPolicy",
    "ScaledExcessPolicy",
    "ShiftedCostPolicy",
    "NoHedgePolicy",
    "BlendPolicy",
    "FunctionPolicy",
    "parse_policy",
    "default_perturbations",
    "EnsembleResult",
    "draw_noise",
    "coarsen_noise",
    "simulate_ensemble",
    "simulate_paths",
    "mc_value",
    "VerificationReport",
    "verification_suite",
    "fsum_mean",
]

SIM_PANELS = 64
HARD_VIOLATION_RTOL = 1e-10


@dataclass(frozen=True)
class SimConfig:
    """Monte-Carlo settings.

    Parameters
    ----------
    n_paths, n_steps : ensemble size and number of Euler steps on ``[0, T]``
    seed : root seed; path ``i`` draws from ``SeedSequence(seed, spawn_key=(i,))``
    antithetic : pair path ``2j + 1`` with the negated noise of path ``2j``
    chunk_size : paths simulated together (memory versus speed)
    store_paths : number of leading paths whose full trajectories are kept
    n_checkpoints : equally spaced checkpoints in ``(0, T]`` for the
        supermartingale test
    panels : Simpson panels used for ``N`` inside the simulation
    """

    n_paths: int = 10_000
    n_steps: int = 1000
    seed: int = 20240521
    antithetic: bool = False
    chunk_size: int = 2000
    store_paths: int = 0
    n_checkpoints: int = 5
    panels: int = SIM_PANELS

    def __post_init__(self):
        if self.n_paths < 1:
            raise ConfigError("n_paths must be >= 1")
        if self.n_steps < 2:
            raise ConfigError("n_steps must be >= 2")
        if self.antithetic and self.n_paths % 2:
            raise ConfigError("antithetic sampling needs an even number of paths")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.chunk_size < 1 or self.n_checkpoints < 1:
            raise ConfigError("chunk_size and n_checkpoints must be >= 1")

    def dt(self, horizon: float) -> float:
        return horizon / self.n_steps


@dataclass
class SimPath:
    """One stored trajectory on the time grid (arrays of length ``n_steps + 1``).

    ``c`` and ``pi`` hold the controls applied on each step (their last entry
    repeats the policy evaluated at ``T``); ``dw_hat`` are the innovation
    increments (length ``n_steps``).
    """

    t: np.ndarray
    S: np.ndarray
    mu: np.ndarray
    mu_hat: np.ndarray
    omega_hat: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    c: np.ndarray
    pi: np.ndarray
    dw_hat: np.ndarray
    utility: float

    def to_csv(self, path) -> None:
        cols = ["t", "S", "mu", "mu_hat", "omega_hat", "X", "Z", "c", "pi"]
        data = np.column_stack([getattr(self, k) for k in cols])
        np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------

class StepContext:
    """Quantities shared by every policy at one time step of one chunk."""

    def __init__(self, model: ValueModel, t: float, eta: np.ndarray):
        self.model = model
        self.t = t
        self.eta = eta
        self._n = None

    @property
    def n_and_eta(self):
        if self._n is None:
            self._n = self.model.n.evaluate(self.t, self.eta, 1)
        return self._n

    def optimal(self, x, z, m=None):
        """Optimal ``(pi, c)`` plus the split of ``pi`` into myopic and hedging parts."""
        model = self.model
        prm = model.params
        p, s2 = prm.p, prm.sigma_s ** 2
        m = model.m(self.t) if m is None else m
        y = np.maximum(x - m * z, 0.0)
        n, n_e = self.n_and_eta
        myopic = self.eta / ((1.0 - p) * s2) * y
        hedge = model.gain(self.t) / s2 * n_e / n * y
        scale = (1.0 + prm.delta_fn(self.t) * m) ** (1.0 / (1.0 - p))
        c = z + y / (scale * n)
        return myopic, hedge, c


class FeedbackPolicy:
    """Base class: a feedback rule ``(t, x, z, eta) -> (pi, c)`` on arrays."""

    name = "policy"
    degenerate = False  # consumes exactly the habit level, so c - Z = 0

    def evaluate(self, ctx: StepContext, x, z):
        return self(ctx.t, x, z, ctx.eta)

    def __call__(self, t, x, z, eta):
        raise NotImplementedError


class FunctionPolicy(FeedbackPolicy):
    """Wrap a plain function ``f(t, x, z, eta) -> (pi, c)``."""

    def __init__(self, func: Callable, name: str = "custom"):
        self.func = func
        self.name = name

    def __call__(self, t, x, z, eta):
        return self.func(t, x, z, eta)


class OptimalPolicy(FeedbackPolicy):
    name = "optimal"

    def __init__(self, model: ValueModel):
        self.model = model

    def evaluate(self, ctx, x, z):
        myopic, hedge, c = ctx.optimal(x, z)
        return myopic + hedge, c

    def __call__(self, t, x, z, eta):
        return self.model.feedback(t, x, z, eta)


class SubsistencePolicy(FeedbackPolicy):
    """No investment, consumption pinned to the habit level."""

    name = "subsistence"
    degenerate = True

    def __call__(self, t, x, z, eta):
        z = np.asarray(z, dtype=float)
        return np.zeros_like(z), z.copy()


class ScaledPiPolicy(OptimalPolicy):
    def __init__(self, model, factor: float):
        super().__init__(model)
        self.factor = factor
        self.name = f"scale_pi={factor:g}"

    def evaluate(self, ctx, x, z):
        pi, c = super().evaluate(ctx, x, z)
        return self.factor * pi, c


class ScaledExcessPolicy(OptimalPolicy):
    """Optimal investment, excess consumption ``c* - z`` multiplied by ``factor``."""

    def __init__(self, model, factor: float):
        super().__init__(model)
        self.factor = factor
        self.name = f"scale_excess={factor:g}"

    def evaluate(self, ctx, x, z):
        pi, c = super().evaluate(ctx, x, z)
        return pi, z + self.factor * (c - z)


class ShiftedCostPolicy(OptimalPolicy):
    """Optimal formulas with the subsistence cost of a longer horizon ``T + shift``."""

    def __init__(self, model, shift: float):
        super().__init__(model)
        self.shift = shift
        self.name = f"shift_m={shift:g}"
        self.m_long = SubsistenceCost(model.params, model.params.horizon + shift)

    def evaluate(self, ctx, x, z):
        myopic, hedge, c = ctx.optimal(x, z, m=self.m_long(ctx.t))
        return myopic + hedge, c


class NoHedgePolicy(OptimalPolicy):
    """Optimal consumption, investment without the ``N_eta`` hedging term."""

    name = "zero_neta"

    def evaluate(self, ctx, x, z):
        myopic, _, c = ctx.optimal(x, z)
        return myopic, c


class BlendPolicy(OptimalPolicy):
    """Convex blend of the optimal and the subsistence strategies."""

    def __init__(self, model, weight: float):
        super().__init__(model)
        self.weight = weight
        self.name = f"blend={weight:g}"

    def evaluate(self, ctx, x, z):
        pi, c = super().evaluate(ctx, x, z)
        w = self.weight
        return (1.0 - w) * pi, z + (1.0 - w) * (c - z)


_PERTURBATIONS = {
    "scale_pi": ScaledPiPolicy,
    "scale_excess": ScaledExcessPolicy,
    "shift_m": ShiftedCostPolicy,
    "blend": BlendPolicy,
}


def parse_policy(spec: str, model: ValueModel) -> FeedbackPolicy:
    """Build a policy from ``optimal``, ``subsistence`` or ``perturbation:<name>[=<value>]``.

    Perturbation names: ``scale_pi=k``, ``scale_excess=k``, ``shift_m=dt``,
    ``blend=w`` and ``zero_neta``.
    """
    if spec == "optimal":
        return OptimalPolicy(model)
    if spec == "subsistence":
        return SubsistencePolicy()
    if spec.startswith("perturbation:"):
        body = spec.split(":", 1)[1]
        if body == "zero_neta":
            return NoHedgePolicy(model)
        name, _, value = body.partition("=")
        if name in _PERTURBATIONS and value:
            try:
                num = float(value)
            except ValueError:
                raise PolicyError(f"bad perturbation value in {spec!r}") from None
            try:
                return _PERTURBATIONS[name](model, num)
            except (ConfigError, ValueError) as exc:
                raise PolicyError(f"invalid perturbation {spec!r}: {exc}") from None
    raise PolicyError(f"unknown policy specification {spec!r}")


def default_perturbations(model: ValueModel) -> list[FeedbackPolicy]:
    """The five perturbation families used by the verification suite."""
    return [
        ScaledPiPolicy(model, 1.5),
        ScaledExcessPolicy(model, 1.1),
        ShiftedCostPolicy(model, 0.5),
        NoHedgePolicy(model),
        BlendPolicy(model, 0.3),
    ]


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------

def _path_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def draw_noise(sim: SimConfig, start: int, stop: int):
    """Standard normals for paths ``start..stop-1``.

    Returns ``(z0, steps)`` with ``z0`` of shape ``(n,)`` (initial drift draw)
    and ``steps`` of shape ``(n, n_steps, 3)``: stock shock, the part of the
    drift's own noise explained by it, and the independent remainder.
    """
    n = stop - start
    z0 = np.empty(n)
    steps = np.empty((n, sim.n_steps, 3))
    for k, i in enumerate(range(start, stop)):
        if sim.antithetic:
            rng = _path_rng(sim.seed, i // 2)
            sign = -1.0 if i % 2 else 1.0
        else:
            rng = _path_rng(sim.seed, i)
            sign = 1.0
        z0[k] = sign * rng.standard_normal()
        steps[k] = sign * rng.standard_normal((sim.n_steps, 3))
    return z0, steps


def coarsen_noise(noise):
    """Combine pairs of consecutive steps into one step of twice the length."""
    z0, steps = noise
    if steps.shape[1] % 2:
        raise ValueError("need an even number of steps to coarsen")
    return z0, (steps[:, 0::2] + steps[:, 1::2]) / math.sqrt(2.0)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

@dataclass
class EnsembleResult:
    """Per-policy outcome of an ensemble run."""

    name: str
    utilities: np.ndarray
    checkpoint_times: np.ndarray
    checkpoint_values: np.ndarray  # (n_checkpoints + 1, n_paths), row 0 at t = 0
    clamp_events: int
    hard_violations: int
    max_deficit: float
    min_excess_consumption: float
    degenerate: bool
    paths: list = field(default_factory=list)

    def mean_se(self, antithetic: bool = False) -> tuple[float, float]:
        return _mean_se(self.utilities, antithetic)


def fsum_mean(values) -> float:
    """Mean with compensated summation."""
    values = np.asarray(values, dtype=float).ravel()
    return math.fsum(values) / values.size


def _mean_se(values, antithetic=False):
    v = np.asarray(values, dtype=float)
    if antithetic:
        v = 0.5 * (v[0::2] + v[1::2])
    mean = fsum_mean(v)
    if not math.isfinite(mean):
        return mean, math.nan
    if v.size < 2:
        return mean, math.nan
    dev = v - mean
    var = math.fsum(dev * dev) / (v.size - 1)
    return mean, math.sqrt(var / v.size)


def _utility(excess, p):
    with np.errstate(divide="ignore"):
        return np.where(excess > 0, excess ** p / p, 0.0 if p > 0 else -np.inf)


def simulate_ensemble(policies: Mapping[str, FeedbackPolicy] | list, params: ModelParams,
                      sim: SimConfig, model: ValueModel | None = None, noise=None,
                      checkpoints: bool = True, clamp: bool = True) -> dict[str, EnsembleResult]:
    """Simulate several policies on common random numbers.

    Parameters
    ----------
    policies : mapping name -> policy, or a list of policies (keyed by ``.name``)
    noise : optional ``(z0, steps)`` as returned by :func:`draw_noise`
        covering all paths; drawn from ``sim.seed`` when omitted
    checkpoints : record ``int_0^t u(c - Z) ds + V(t, X, Z, mu_hat)`` at the
        checkpoints (needs the value model)
    clamp : push wealth that dips below ``m(t) Z`` back onto the boundary

    Raises
    ------
    PolicyError
        if a policy returns non-finite controls or consumption below the habit.
    """
    if not isinstance(policies, Mapping):
        policies = {pol.name: pol for pol in policies}
    model = model or value_model(params, sim.panels)
    prm = params
    T, n_steps = prm.horizon, sim.n_steps
    dt = T / n_steps
    t_grid = np.linspace(0.0, T, n_steps + 1)
    m_grid = np.asarray(model.m(t_grid))
    delta_grid = np.asarray(prm.delta_fn(t_grid))
    alpha_grid = np.asarray(prm.alpha_fn(t_grid))
    ck_idx = np.unique(np.round(np.linspace(0, n_steps, sim.n_checkpoints + 1)).astype(int))
    p, s_s, s_m, lam, rho = prm.p, prm.sigma_s, prm.sigma_mu, prm.lam, prm.rho

    # exact OU transition over dt, jointly Gaussian with the stock shock
    decay = math.exp(-lam * dt)
    var_ou = dt if lam == 0 else -math.expm1(-2.0 * lam * dt) / (2.0 * lam)
    cov_w = dt if lam == 0 else -math.expm1(-lam * dt) / lam
    beta = cov_w / dt
    resid_sd = math.sqrt(max(var_ou - beta * beta * dt, 0.0))
    sq_dt = math.sqrt(dt)
    rho_perp = math.sqrt(max(1.0 - rho * rho, 0.0))

    names = list(policies)
    out = {k: {"u": [], "ck": [], "clamp": 0, "hard": 0, "deficit": 0.0,
               "min_exc": math.inf, "paths": []} for k in names}
    tol_abs = HARD_VIOLATION_RTOL * prm.x0

    for start in range(0, sim.n_paths, sim.chunk_size):
        stop = min(start + sim.chunk_size, sim.n_paths)
        n = stop - start
        if noise is None:
            z0, steps = draw_noise(sim, start, stop)
        else:
            z0, steps = noise[0][start:stop], noise[1][start:stop]
            if steps.shape[1] != n_steps:
                raise ConfigError("noise array does not match n_steps")
        mu = prm.eta0 + math.sqrt(prm.theta0) * z0
        mu_hat = np.full(n, prm.eta0)
        s_price = np.ones(n)
        state = {k: (np.full(n, prm.x0), np.full(n, prm.z0), np.zeros(n)) for k in names}
        ck_rows = {k: [] for k in names}
        n_store = max(0, min(sim.store_paths - start, n))
        rec = {k: _Recorder(n_store, n_steps) for k in names} if n_store else None
        shared_rec = _SharedRecorder(n_store, n_steps) if n_store else None

        for i in range(n_steps + 1):
            t = t_grid[i]
            ctx = StepContext(model, t, mu_hat)
            at_ck = checkpoints and i in ck_idx
            if i < n_steps:
                dw = sq_dt * steps[:, i, 0]
                ret = mu * dt + s_s * dw
            for k in names:
                x, z, u = state[k]
                if at_ck:
                    vals = _checkpoint_value(model, t, x, z, mu_hat, u, m_grid[i])
                    ck_rows[k].append(vals)
                pol = policies[k]
                pi, c = pol.evaluate(ctx, x, z)
                pi = np.broadcast_to(np.asarray(pi, dtype=float), x.shape)
                c = np.broadcast_to(np.asarray(c, dtype=float), x.shape)
                _validate(pi, c, z, k, t)
                exc = np.maximum(c - z, 0.0)
                if n_store:
                    rec[k].record(i, x[:n_store], z[:n_store], c[:n_store], pi[:n_store])
                if i == n_steps:
                    state[k] = (x, z, u + _utility(x, p))
                    continue
                out[k]["min_exc"] = min(out[k]["min_exc"], float(np.min(c - z)))
                u = u + _utility(exc, p) * dt
                x_new = x + pi * ret - c * dt
                z_new = z + (delta_grid[i] * c - alpha_grid[i] * z) * dt
                bound = m_grid[i + 1] * z_new
                deficit = bound - x_new
                below = deficit > 0
                if np.any(below):
                    out[k]["clamp"] += int(np.count_nonzero(below))
                    out[k]["hard"] += int(np.count_nonzero(deficit > tol_abs))
                    out[k]["deficit"] = max(out[k]["deficit"], float(np.max(deficit)))
                    if clamp:
                        x_new = np.where(below, bound, x_new)
                state[k] = (x_new, z_new, u)
            if i == n_steps:
                break
            if n_store:
                shared_rec.record(i, s_price[:n_store], mu[:n_store], mu_hat[:n_store],
                                  (ret[:n_store] - mu_hat[:n_store] * dt) / s_s)
            mu_hat = filter_update(mu_hat, ret, t, dt, prm)
            s_price = s_price * np.maximum(1.0 + ret, 1e-300)
            ou_noise = s_m * (rho * (beta * dw + resid_sd * steps[:, i, 1])
                              + rho_perp * math.sqrt(var_ou) * steps[:, i, 2])
            mu = prm.mu_bar + (mu - prm.mu_bar) * decay + ou_noise
        if n_store:
            shared_rec.record(n_steps, s_price[:n_store], mu[:n_store], mu_hat[:n_store], None)

        for k in names:
            out[k]["u"].append(state[k][2])
            if checkpoints:
                out[k]["ck"].append(np.array(ck_rows[k]))
            if n_store:
                out[k]["paths"].extend(rec[k].paths(shared_rec, t_grid, params, state[k][2]))

    results = {}
    for k in names:
        o = out[k]
        ck = np.concatenate(o["ck"], axis=1) if checkpoints else np.empty((0, sim.n_paths))
        results[k] = EnsembleResult(
            name=k,
            utilities=np.concatenate(o["u"]),
            checkpoint_times=t_grid[ck_idx] if checkpoints else np.empty(0),
            checkpoint_values=ck,
            clamp_events=o["clamp"],
            hard_violations=o["hard"],
            max_deficit=o["deficit"],
            min_excess_consumption=o["min_exc"],
            degenerate=policies[k].degenerate,
            paths=o["paths"],
        )
    return results


def _validate(pi, c, z, name, t):
    if not (np.all(np.isfinite(pi)) and np.all(np.isfinite(c))):
        raise PolicyError(f"policy {name!r} returned non-finite controls at t={t!r}")
    tol = 1e-12 * np.maximum(np.abs(z), 1.0)
    if np.any(c < z - tol):
        raise PolicyError(f"policy {name!r} consumes below the habit level at t={t!r}")


def _checkpoint_value(model, t, x, z, eta, u, m):
    p = model.params.p
    y = np.maximum(x - m * z, 0.0)
    n = model.n(t, eta)
    with np.errstate(divide="ignore"):
        v = n ** (1.0 - p) * y ** p / p
    return u + v


class _SharedRecorder:
    def __init__(self, n, n_steps):
        self.S = np.empty((n, n_steps + 1))
        self.mu = np.empty((n, n_steps + 1))
        self.mu_hat = np.empty((n, n_steps + 1))
        self.dw_hat = np.empty((n, n_steps))

    def record(self, i, s, mu, mu_hat, dw_hat):
        self.S[:, i], self.mu[:, i], self.mu_hat[:, i] = s, mu, mu_hat
        if dw_hat is not None:
            self.dw_hat[:, i] = dw_hat


class _Recorder:
    def __init__(self, n, n_steps):
        self.X = np.empty((n, n_steps + 1))
        self.Z = np.empty((n, n_steps + 1))
        self.c = np.empty((n, n_steps + 1))
        self.pi = np.empty((n, n_steps + 1))

    def record(self, i, x, z, c, pi):
        self.X[:, i], self.Z[:, i], self.c[:, i], self.pi[:, i] = x, z, c, pi

    def paths(self, shared, t_grid, params, utilities):
        from habitcontrol.filtering import omega_hat_closed

        omega = omega_hat_closed(t_grid, params)
        return [SimPath(t_grid.copy(), shared.S[j].copy(), shared.mu[j].copy(),
                        shared.mu_hat[j].copy(), omega.copy(), self.X[j].copy(),
                        self.Z[j].copy(), self.c[j].copy(), self.pi[j].copy(),
                        shared.dw_hat[j].copy(), float(utilities[j]))
                for j in range(self.X.shape[0])]


def simulate_paths(policy: FeedbackPolicy | Callable, params: ModelParams, sim: SimConfig,
                   model: ValueModel | None = None, noise=None,
                   checkpoints: bool = True) -> EnsembleResult:
    """Simulate one policy; plain functions ``f(t, x, z, eta) -> (pi, c)`` are accepted."""
    if not isinstance(policy, FeedbackPolicy):
        policy = FunctionPolicy(policy)
    model = model or value_model(params, sim.panels, gate=False)
    res = simulate_ensemble({policy.name: policy}, params, sim, model=model, noise=noise,
                            checkpoints=checkpoints)
    return res[policy.name]


def mc_value(policy, params: ModelParams, sim: SimConfig, model=None) -> tuple[float, float]:
    """Sample mean and standard error of the realised utility."""
    res = simulate_paths(policy, params, sim, model=model)
    return res.mean_se(sim.antithetic)


# ---------------------------------------------------------------------------
# verification suite
# ---------------------------------------------------------------------------

@dataclass
class VerificationReport:
    """Outcome of the Monte-Carlo verification of the closed-form solution."""

    value_closed_form: float
    mc_mean: float
    mc_se: float
    z_score: float
    value_match: bool
    perturbations: list
    constraints: dict
    supermartingale: dict
    sim: dict
    passed: bool

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(_json_safe(self.to_dict()), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "VerificationReport":
        return cls(**_json_restore(json.loads(text)))


def _json_safe(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def _json_restore(obj):
    if isinstance(obj, str) and obj in ("nan", "inf", "-inf"):
        return float(obj)
    if isinstance(obj, dict):
        return {k: _json_restore(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_restore(v) for v in obj]
    return obj


def _paired(a, b, antithetic):
    return _mean_se(np.asarray(a) - np.asarray(b), antithetic)


def verification_suite(params: ModelParams, sim: SimConfig,
                       perturbations: list[FeedbackPolicy] | None = None,
                       model: ValueModel | None = None) -> VerificationReport:
    """Monte-Carlo verification of the closed-form value function and policies.

    Runs the optimal policy and the perturbed policies on common random
    numbers and reports

    * the match between the Monte-Carlo mean utility and ``V(0, x0, z0, eta0)``
      (``|z| <= 3``);
    * for each perturbation, the paired utility gap (must exceed two
      standard errors);
    * constraint monitors (clamp events, hard violations, ``c >= Z``);
    * checkpoint means of ``int_0^t u ds + V(t, ...)``: flat within two
      standard errors for the optimal policy, and significantly decreasing
      for at least one perturbation.
    """
    model = model or value_model(params, sim.panels)
    perturbations = perturbations if perturbations is not None else default_perturbations(model)
    opt = OptimalPolicy(model)
    policies = {opt.name: opt}
    policies.update({pol.name: pol for pol in perturbations})
    res = simulate_ensemble(policies, params, sim, model=model)
    anti = sim.antithetic

    v0 = float(model.value(0.0, params.x0, params.z0, params.eta0))
    r_opt = res[opt.name]
    mean, se = r_opt.mean_se(anti)
    z = (mean - v0) / se if se and se > 0 else math.inf
    value_match = abs(z) <= 3.0

    table = []
    for pol in perturbations:
        r = res[pol.name]
        pm, pse = r.mean_se(anti)
        gap, gap_se = _paired(r_opt.utilities, r.utilities, anti)
        ok = math.isfinite(gap) and gap > 2.0 * gap_se if math.isfinite(gap_se) else gap == math.inf
        table.append({"policy": pol.name, "mean": pm, "se": pse, "gap": gap, "gap_se": gap_se,
                      "optimal_better": bool(ok)})

    constraints = {
        name: {"clamp_events": r.clamp_events, "hard_violations": r.hard_violations,
               "max_deficit": r.max_deficit, "min_excess_consumption": r.min_excess_consumption}
        for name, r in res.items()
    }
    constraints_ok = r_opt.hard_violations == 0 and r_opt.min_excess_consumption >= 0.0

    times = r_opt.checkpoint_times.tolist()

    def drift_table(r):
        rows = []
        base = r.checkpoint_values[0]
        for j in range(1, len(times)):
            d, dse = _mean_se(r.checkpoint_values[j] - base, anti)
            rows.append({"t": times[j], "drift": d, "se": dse})
        return rows

    opt_rows = drift_table(r_opt)
    opt_flat = all(math.isfinite(row["drift"]) and abs(row["drift"]) < 2.0 * row["se"]
                   for row in opt_rows)
    pert_rows = {}
    any_negative = False
    for pol in perturbations:
        rows = drift_table(res[pol.name])
        neg = any(row["drift"] < -2.0 * row["se"] for row in rows)
        increments = []
        cv = res[pol.name].checkpoint_values
        for j in range(1, len(times)):
            d, dse = _mean_se(cv[j] - cv[j - 1], anti)
            increments.append(d <= 2.0 * dse)
        pert_rows[pol.name] = {"drifts": rows, "significant_negative": bool(neg),
                               "nonincreasing": bool(all(increments))}
        any_negative = any_negative or neg
    supermart = {"times": times, "optimal": opt_rows, "optimal_flat": bool(opt_flat),
                 "perturbations": pert_rows, "some_negative_drift": bool(any_negative)}

    passed = (value_match and all(row["optimal_better"] for row in table) and constraints_ok
              and opt_flat and any_negative)
    sim_info = {"n_paths": sim.n_paths, "n_steps": sim.n_steps, "seed": sim.seed,
                "antithetic": sim.antithetic, "panels": sim.panels}
    return VerificationReport(v0, mean, se, z, bool(value_match), table, constraints,
                              supermart, sim_info, bool(passed))
