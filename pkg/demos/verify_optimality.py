"""Monte-Carlo verification of the closed-form strategy.

Simulates the optimal feedback and five perturbations on common random
numbers and prints the verification report.  A smaller ensemble than the
acceptance run keeps it to a few seconds.

    python3 demos/verify_optimality.py [n_paths] [n_steps]
"""

import sys

from habitcontrol.params import ModelParams
from habitcontrol.policy import value_model
from habitcontrol.simulation import SimConfig, verification_suite

n_paths = int(sys.argv[1]) if len(sys.argv) > 1 else 10_000
n_steps = int(sys.argv[2]) if len(sys.argv) > 2 else 200

prm = ModelParams()
model = value_model(prm)
v0 = model.value(0.0, prm.x0, prm.z0, prm.eta0)
pi0, c0 = model.feedback(0.0, prm.x0, prm.z0, prm.eta0)
print(f"V(0) = {v0:.6f}, pi*(0) = {pi0:.4f}, c*(0) = {c0:.4f}, m(0) = {model.m(0.0):.4f}")

rep = verification_suite(prm, SimConfig(n_paths=n_paths, n_steps=n_steps))
print(f"MC mean utility {rep.mc_mean:.6f} +- {rep.mc_se:.6f}  (z = {rep.z_score:+.2f})")
print("\nperturbation          mean       gap      gap SE   optimal better")
for row in rep.perturbations:
    print(f"{row['policy']:<18}{row['mean']:>10.5f}{row['gap']:>10.5f}{row['gap_se']:>11.5f}"
          f"   {row['optimal_better']}")
print("\ncheckpoint drift of int u ds + V under the optimal policy")
for row in rep.supermartingale["optimal"]:
    print(f"  t = {row['t']:.2f}: {row['drift']:+.5f} +- {row['se']:.5f}")
print(f"\nhard constraint violations: {rep.constraints['optimal']['hard_violations']}")
print("report passed" if rep.passed else "report FAILED")
