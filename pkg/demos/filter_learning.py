"""How fast the investor learns the hidden drift.

Prints the conditional variance Omega(t) against its steady state for a few
priors, then checks by simulation that the filter's terminal mean-square
error matches Omega(T).

    python3 demos/filter_learning.py
"""

import math

import numpy as np

from habitcontrol.filtering import filter_update, omega_hat_closed, steady_state_theta
from habitcontrol.params import ModelParams

base = ModelParams()
theta_star = steady_state_theta(base)
print(f"steady-state variance theta* = {theta_star:.6f}")
t = np.array([0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 20.0])
print("      t " + "".join(f"{v:>10.2f}" for v in t))
for theta0 in (0.0, 0.01, 0.05, 0.2):
    om = omega_hat_closed(t, base.replace(theta0=theta0))
    print(f"  {theta0:5.2f} " + "".join(f"{v:>10.6f}" for v in om))

# Monte-Carlo check: exact OU drift, observed returns, Euler filter update.
rng = np.random.default_rng(1)
n_paths, n_steps = 20_000, 500
dt = base.horizon / n_steps
mu = base.eta0 + math.sqrt(base.theta0) * rng.standard_normal(n_paths)
mu_hat = np.full(n_paths, base.eta0)
decay = math.exp(-base.lam * dt)
for k in range(n_steps):
    dw = math.sqrt(dt) * rng.standard_normal((2, n_paths))
    ret = mu * dt + base.sigma_s * dw[0]
    mu_hat = filter_update(mu_hat, ret, k * dt, dt, base)
    dw_mu = base.rho * dw[0] + math.sqrt(1 - base.rho ** 2) * dw[1]
    mu = base.mu_bar + (mu - base.mu_bar) * decay + base.sigma_mu * dw_mu
err2 = (mu - mu_hat) ** 2
print(f"\nE[(mu_T - mu_hat_T)^2] = {err2.mean():.6f} +- {err2.std() / math.sqrt(n_paths):.6f}"
      f"   Omega(T) = {float(omega_hat_closed(base.horizon, base)):.6f}")
