"""Closed-form families of the auxiliary Riccati system, checked against RK4.

Builds one parameter set per family, prints the classification constants and
the worst relative error of the closed forms against direct integration.

    python3 demos/regimes_and_oracles.py
"""

import math

import numpy as np

from habitcontrol import closed_form as cf
from habitcontrol import oracles
from habitcontrol.filtering import omega_hat_closed
from habitcontrol.params import ModelParams, classify_regime


def hyperbolic(p=0.5, sigma_s=0.2, sigma_mu=0.1, rho=-0.3):
    # a zero discriminant: pick lambda so that gamma2^2 = gamma1 gamma3
    g1 = (1 - p + p * rho ** 2) / (1 - p) * sigma_mu ** 2
    g3 = p / ((1 - p) * sigma_s ** 2)
    lam = p * rho * sigma_mu / ((1 - p) * sigma_s) + math.sqrt(g1 * g3)
    return ModelParams(p=p, sigma_s=sigma_s, sigma_mu=sigma_mu, rho=rho, lam=lam, theta0=0.002)


tuples = {
    "default (p = -1)": ModelParams(),
    "tangent": ModelParams(sigma_mu=0.05, lam=0.1, rho=0.0, p=0.5, theta0=0.002),
    "hyperbolic": hyperbolic(),
    "polynomial": ModelParams(p=0.5, sigma_s=1.0, sigma_mu=0.0, lam=0.0, rho=0.0, theta0=0.02),
}

print(f"{'tuple':<18}{'case':<12}{'Delta':>11}{'T_crit':>10}{'aux err':>11}{'A,B,C err':>11}")
for name, prm in tuples.items():
    reg = classify_regime(prm)
    t, s = cf.triangle_points(prm.horizon, 20)
    quint = cf.aux_quintuple(t, s, reg, prm)
    ref = oracles.rk4_aux(s - t, prm, 1e-5)
    keep = s > t
    aux_err = np.max(np.abs(quint.as_array() - ref)[:, keep] / np.maximum(np.abs(ref[:, keep]), 1e-300))
    abc = cf.abc_from_aux(t, s, quint, omega_hat_closed(t, prm), prm).as_array()
    abc_err = 0.0
    for sv in np.unique(s[keep]):
        sel = (s == sv) & keep
        r = oracles.rk4_abc(sv, t[sel], prm, 1e-5)
        nz = r != 0
        abc_err = max(abc_err, np.max(np.abs(abc[:, sel] - r)[nz] / np.abs(r[nz])))
    crit = "none" if reg.critical_horizon is None else f"{reg.critical_horizon:.3f}"
    print(f"{name:<18}{reg.case.value:<12}{reg.delta_disc:>11.4f}{crit:>10}{aux_err:>11.1e}{abc_err:>11.1e}")

# The explicit value function needs N(t, eta); here is a slice of it.
prm = ModelParams()
eta = np.linspace(-0.3, 0.4, 8)
print("\nN(t, eta) for the default tuple")
print("  t \\ eta " + "".join(f"{e:>9.2f}" for e in eta))
for t in (0.0, 0.5, 0.9, 1.0):
    print(f"  {t:7.2f}  " + "".join(f"{v:>9.5f}" for v in cf.n_function(t, eta, prm)))
