"""Command-line interface: ``habitcontrol {classify,solve,simulate,verify}``.

Exit codes: 0 success, 2 config/schema error, 3 inadmissible parameters,
4 explosion or singularity, 5 policy error, 6 failed verification check.
Every subcommand writes its outputs and a ``manifest_<cmd>.json`` into
``--out``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from habitcontrol import __version__
from habitcontrol.errors import (
    ConfigError,
    DomainError,
    ExplosionError,
    NumericError,
    PolicyError,
    SingularityError,
)
from habitcontrol.params import check_admissibility, classify_regime, load_config, ModelParams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INADMISSIBLE = 3
EXIT_EXPLOSION = 4
EXIT_POLICY = 5
EXIT_FAILED = 6


def fmt(x) -> str:
    """17 significant digits for finite floats."""
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serialisable: {type(obj)!r}")


def _clean(obj):
    """Replace non-finite floats by strings so the output stays strict JSON."""
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True, default=_json_default) + "\n")


def write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


class Run:
    """Collects artifacts and writes the run manifest."""

    def __init__(self, args, subcommand):
        self.args = args
        self.subcommand = subcommand
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts = []
        self.start = time.perf_counter()
        self.config_bytes = Path(args.config).read_bytes() if Path(args.config).is_file() else b""

    def path(self, name: str) -> Path:
        p = self.out / name
        self.artifacts.append(str(p))
        return p

    def finish(self, exit_code: int) -> int:
        manifest = {
            "subcommand": self.subcommand,
            "config": str(self.args.config),
            "config_sha256": hashlib.sha256(self.config_bytes).hexdigest(),
            "seed": getattr(self.args, "seed", None),
            "artifacts": sorted(self.artifacts),
            "wall_clock_seconds": time.perf_counter() - self.start,
            "version": __version__,
            "exit_code": exit_code,
        }
        write_json(self.out / f"manifest_{self.subcommand}.json", manifest)
        return exit_code


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_classify(args, run: Run, params: ModelParams) -> int:
    regime = classify_regime(params)
    report = check_admissibility(params)
    print(f"case: {regime.case.value}")
    for key in ("delta_disc", "gamma1", "gamma2", "gamma3", "xi", "xi1", "zeta", "varpi",
                "critical_horizon"):
        val = getattr(regime, key)
        print(f"{key}: {fmt(val) if val is not None else 'none'}")
    print(f"m0: {fmt(report.m0)}")
    print("admissibility:")
    for c in report.conditions:
        print(f"  {'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    data = {"regime": regime.to_dict(), "admissibility": report.to_dict()}
    write_json(run.path("classify.json"), data)
    if not report.admissible:
        print("violated: " + ", ".join(report.violated), file=sys.stderr)
        return EXIT_INADMISSIBLE
    return EXIT_OK


def _rel_err(cf, ref):
    cf = np.asarray(cf, dtype=float)
    ref = np.asarray(ref, dtype=float)
    diff = np.abs(cf - ref)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(ref != 0, diff / np.abs(ref), diff)


def cmd_solve(args, run: Run, params: ModelParams) -> int:
    from habitcontrol import closed_form as cf
    from habitcontrol.filtering import omega_hat_closed
    from habitcontrol.params import require_no_explosion

    require_no_explosion(params)
    T = params.horizon
    n_t = 6 if args.quick else args.n_t
    n_eta = 6 if args.quick else args.n_eta
    t_grid = np.linspace(0.0, T, n_t)
    eta_lo = params.eta0 - 0.5 if args.eta_min is None else args.eta_min
    eta_hi = params.eta0 + 0.5 if args.eta_max is None else args.eta_max
    eta_grid = np.linspace(eta_lo, eta_hi, n_eta)

    m_vals = np.asarray(cf.m_of_t(t_grid, params))
    om = omega_hat_closed(t_grid, params)
    write_csv(run.path("grid_t.csv"), ["t", "m", "omega_hat"], zip(t_grid, m_vals, om))

    ti, si = cf.triangle_points(T, n_t)
    quint = cf.aux_quintuple(ti, si, None, params)
    abc = cf.abc_from_aux(ti, si, quint, omega_hat_closed(ti, params), params)
    write_csv(run.path("abc.csv"), ["t", "s", "a", "b", "c", "f", "g", "A", "B", "C"],
              zip(ti, si, *quint.as_array(), *abc.as_array()))

    ev = cf.n_evaluator(params, args.panels)
    rows = []
    for t in t_grid:
        n, n_e = ev.evaluate(t, eta_grid, 1)
        rows.extend(zip(np.full(n_eta, t), eta_grid, n, n_e))
    write_csv(run.path("n_grid.csv"), ["t", "eta", "N", "N_eta"], rows)

    summary = {"n_t": n_t, "n_eta": n_eta, "regime": classify_regime(params).case.value,
               "m0": float(m_vals[0]), "N_terminal_row_is_one": bool(np.all(
                   np.asarray(ev.evaluate(T, eta_grid)) == 1.0))}
    if args.oracle:
        from habitcontrol import oracles

        step = 1e-4 if args.quick else 1e-5
        orows = []
        om_ref = oracles.rk4_omega(t_grid, params, step)
        for t, a, b in zip(t_grid, om, om_ref):
            orows.append((t, t, "omega_hat", a, b, float(_rel_err(a, b))))
        aux_ref = oracles.rk4_aux(si - ti, params, step)
        for name, vals, ref in zip("abcfg", quint.as_array(), aux_ref):
            for t, s, a, b, e in zip(ti, si, vals, ref, _rel_err(vals, ref)):
                orows.append((t, s, name, a, b, e))
        for s in np.unique(si):
            sel = si == s
            ref = oracles.rk4_abc(s, ti[sel], params, step)
            for name, vals, rr in zip("ABC", abc.as_array()[:, sel], ref):
                for t, a, b, e in zip(ti[sel], vals, rr, _rel_err(vals, rr)):
                    orows.append((t, s, name, a, b, e))
        write_csv(run.path("oracle.csv"),
                  ["t", "s", "quantity", "closed_form", "oracle", "rel_err"], orows)
        summary["oracle_max_rel_err"] = max(r[5] for r in orows)
    write_json(run.path("solve.json"), summary)
    print(f"regime: {summary['regime']}")
    print(f"m0: {fmt(summary['m0'])}")
    if args.oracle:
        print(f"oracle max rel_err: {fmt(summary['oracle_max_rel_err'])}")
    return EXIT_OK


def _sim_config(args):
    from habitcontrol.simulation import SimConfig

    paths = args.paths if args.paths is not None else 10_000
    steps = args.steps if args.steps is not None else (100 if args.quick else 1000)
    return SimConfig(n_paths=paths, n_steps=steps, seed=args.seed,
                     antithetic=args.antithetic, store_paths=args.store_paths)


def cmd_simulate(args, run: Run, params: ModelParams) -> int:
    from habitcontrol.policy import value_model
    from habitcontrol.simulation import parse_policy, simulate_paths

    sim = _sim_config(args)
    budget = [c for c in check_admissibility(params).conditions
              if c.name.startswith("budget") and not c.passed]
    if budget:
        print("inadmissible: " + ", ".join(c.name for c in budget), file=sys.stderr)
        return EXIT_INADMISSIBLE
    model = value_model(params, sim.panels)
    policy = parse_policy(args.policy, model)
    res = simulate_paths(policy, params, sim, model=model, checkpoints=False)
    mean, se = res.mean_se(sim.antithetic)
    v0 = float(model.value(0.0, params.x0, params.z0, params.eta0))
    summary = {
        "policy": policy.name,
        "n_paths": sim.n_paths,
        "n_steps": sim.n_steps,
        "seed": sim.seed,
        "antithetic": sim.antithetic,
        "value_closed_form": v0,
        "clamp_events": res.clamp_events,
        "hard_violations": res.hard_violations,
        "min_excess_consumption": res.min_excess_consumption,
    }
    if math.isfinite(mean):
        summary.update(mean_utility=mean, se=se, z_score=(mean - v0) / se if se > 0 else None)
    else:
        summary.update(mean_utility="-inf (degenerate)", se=None, z_score=None)
    write_json(run.path("simulate.json"), summary)
    for k, p in enumerate(res.paths):
        p.to_csv(run.path(f"path_{k:04d}.csv"))
    print(f"policy: {policy.name}")
    print(f"mean utility: {fmt(summary['mean_utility'])}")
    print(f"V(0): {fmt(v0)}")
    if summary["z_score"] is not None:
        print(f"z-score: {fmt(summary['z_score'])}")
    return EXIT_OK


def cmd_verify(args, run: Run, params: ModelParams) -> int:
    from habitcontrol import closed_form as cf
    from habitcontrol import policy as pol
    from habitcontrol.simulation import verification_suite

    report = check_admissibility(params)
    if not report.admissible:
        write_json(run.path("verify.json"), {"admissibility": report.to_dict(), "passed": False})
        print("inadmissible: " + ", ".join(report.violated), file=sys.stderr)
        return EXIT_INADMISSIBLE
    sim = _sim_config(args)
    ver = verification_suite(params, sim)

    T = params.horizon
    e0 = params.eta0
    n_pts = (np.linspace(0.0, T, 6 if args.quick else 11),
             np.linspace(e0 - 0.5, e0 + 0.5, 6 if args.quick else 11))
    h_n = 5e-3
    n_fine = cf.pde_residual_n(*n_pts, params, h_n, h_n)
    n_coarse = cf.pde_residual_n(*n_pts, params, 2 * h_n, 2 * h_n)
    n_ctrl = cf.pde_residual_n(*n_pts, params, h_n, h_n, offset=1.0)

    m0 = float(cf.m_of_t(0.0, params))
    y0 = params.x0 - m0 * params.z0
    k = 3 if args.quick else 5
    zs = np.linspace(0.6, 1.0, k) * params.z0 if params.z0 > 0 else np.linspace(0.1, 0.5, k)
    xs = m0 * zs.max() + y0 * np.linspace(0.6, 1.4, k)
    hjb_pts = (np.linspace(0.0, T, k + 1), xs, zs, np.linspace(e0 - 0.25, e0 + 0.25, k))
    h_v = 1e-3
    v_fine = pol.hjb_residual(*hjb_pts, params, steps=(h_v,) * 4)
    v_coarse = pol.hjb_residual(*hjb_pts, params, steps=(2 * h_v,) * 4)
    v_ctrl = pol.hjb_residual(*hjb_pts, params, steps=(h_v,) * 4, scale=1.01)

    def conv(fine, coarse, ctrl):
        ratio = coarse.max_abs / fine.max_abs if fine.max_abs > 0 else math.inf
        return {"max_abs": fine.max_abs, "l2": fine.l2, "coarse_max_abs": coarse.max_abs,
                "refinement_ratio": ratio, "negative_control_max_abs": ctrl.max_abs,
                "passed": bool(3.2 <= ratio <= 4.8 and fine.max_abs <= 1e-4
                               and ctrl.max_abs > 1e-2)}

    residuals = {"n_pde": conv(n_fine, n_coarse, n_ctrl), "hjb": conv(v_fine, v_coarse, v_ctrl)}
    passed = ver.passed and all(r["passed"] for r in residuals.values())
    data = {"verification": ver.to_dict(), "residuals": residuals,
            "admissibility": report.to_dict(), "quick": bool(args.quick), "passed": passed}
    write_json(run.path("verify.json"), data)
    print(f"MC mean {fmt(ver.mc_mean)} +- {fmt(ver.mc_se)} vs V(0) {fmt(ver.value_closed_form)}"
          f" (z = {fmt(ver.z_score)})")
    for row in ver.perturbations:
        print(f"  {row['policy']:<18} gap {fmt(row['gap'])} se {fmt(row['gap_se'])}"
              f" {'PASS' if row['optimal_better'] else 'FAIL'}")
    for name, r in residuals.items():
        print(f"  residual {name}: max {fmt(r['max_abs'])} ratio {fmt(r['refinement_ratio'])}"
              f" {'PASS' if r['passed'] else 'FAIL'}")
    print("PASSED" if passed else "FAILED")
    return EXIT_OK if passed else EXIT_FAILED


COMMANDS = {
    "classify": cmd_classify,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="habitcontrol", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON model configuration")
        sp.add_argument("--out", default="habitcontrol_out", help="output directory")
        sp.add_argument("--quick", action="store_true", help="reduced grids and ensembles")
        if name == "solve":
            sp.add_argument("--oracle", action="store_true", help="add RK4 oracle comparison")
            sp.add_argument("--n-t", type=int, default=21, dest="n_t")
            sp.add_argument("--n-eta", type=int, default=21, dest="n_eta")
            sp.add_argument("--eta-min", type=float, default=None)
            sp.add_argument("--eta-max", type=float, default=None)
            sp.add_argument("--panels", type=int, default=400)
        if name in ("simulate", "verify"):
            sp.add_argument("--seed", type=int, default=20240521)
            sp.add_argument("--paths", type=int, default=None)
            sp.add_argument("--steps", type=int, default=None)
            sp.add_argument("--antithetic", action="store_true")
            sp.add_argument("--store-paths", type=int, default=0, dest="store_paths")
        if name == "simulate":
            sp.add_argument("--policy", default="optimal",
                            help="optimal | subsistence | perturbation:<name>[=<value>]")
    return parser


def main(argv=None) -> int:
    from habitcontrol.policy import AdmissibilityError

    args = build_parser().parse_args(argv)
    try:
        params = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run = Run(args, args.command)
    try:
        code = COMMANDS[args.command](args, run, params)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    except AdmissibilityError as exc:
        print(f"inadmissible: {exc}", file=sys.stderr)
        code = EXIT_INADMISSIBLE
    except (ExplosionError, SingularityError) as exc:
        where = f" at (t, s) = ({exc.t}, {exc.s})" if (exc.t is not None or exc.s is not None) else ""
        print(f"{type(exc).__name__}: {exc}{where}", file=sys.stderr)
        code = EXIT_EXPLOSION
    except (NumericError, DomainError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        code = EXIT_EXPLOSION
    except PolicyError as exc:
        print(f"policy error: {exc}", file=sys.stderr)
        code = EXIT_POLICY
    return run.finish(code)


if __name__ == "__main__":
    sys.exit(main())
