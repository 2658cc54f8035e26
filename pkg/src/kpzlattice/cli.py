"""``kpzlattice`` command line: check | thermo | ensembles | simulate | sbe.

Exit codes: 0 pass, 1 check failure, 2 usage or config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig
from .ensembles import DensityMap, equivalence_expansion_report
from .gradient import (check_detailed_balance, classify, solve_gradient_condition,
                       verify_current_identity, verify_fd_relation)
from .kmc import SimulationPlan, simulate_replicas, structure_function
from .kmc._backend import BACKEND
from .kmc.io import write_observables, write_snapshots
from .kmc.simulator import check_continuity
from .lattice import bernoulli_phi
from . import sbe as sbe_mod
from .thermodynamics import characteristic_velocity, einstein_relation_check, thermo_curve

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _manifest(out: Path, cfg: ExperimentConfig, command: str, files: list[str], extra=None) -> None:
    data = {"tool": "kpzlattice", "version": __version__, "command": command,
            "kmc_backend": BACKEND, "config": cfg.resolved(), "files": sorted(files)}
    if extra:
        data.update(extra)
    _dump(out / "manifest.json", data)


def _gradient(cfg: ExperimentConfig):
    c = cfg.rate()
    return c, solve_gradient_condition(c, cfg.omega_radius())


def cmd_check(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    exact, numeric = cfg.tol("exact"), cfg.tol("numeric")
    c, sol = _gradient(cfg)
    spec = cfg.reference_spec()
    checks = []
    db = check_detailed_balance(c.asymmetrized(0.0), spec)
    checks.append({"name": "detailed_balance", "residual": db, "threshold": exact, "passed": db <= exact})
    checks.append({"name": "gradient_condition", "residual": sol.residual, "threshold": exact,
                   "passed": sol.residual <= exact, "status": sol.status})
    ci = verify_current_identity(c, sol.omega)
    # the identity holds up to half the gradient defect, pointwise
    ci_bound = 2.0 * sol.residual + exact
    checks.append({"name": "current_identity", "residual": ci, "threshold": ci_bound, "passed": ci <= ci_bound})
    if sol.residual <= exact:
        fd_tol = exact if spec.is_product else numeric
        rows = verify_fd_relation(c, sol.omega, spec, cfg.rho_grid())
        worst = max(r.residual for r in rows)
        checks.append({"name": "fd_relation", "residual": worst, "threshold": fd_tol,
                       "passed": worst <= fd_tol})
    else:
        checks.append({"name": "fd_relation", "residual": None, "passed": True,
                       "skipped": "rate is not gradient; D undefined"})
    failures = [ch["name"] for ch in checks if not ch["passed"]]
    report = {"model": cfg.model, "omega": sol.omega.to_json(), "checks": checks, "failures": failures,
              "passed": not failures}
    _dump(out / "check.json", report)
    _manifest(out, cfg, "check", ["check.json"])
    print(json.dumps({"passed": not failures, "failures": failures}))
    return EXIT_OK if not failures else EXIT_FAIL


def cmd_thermo(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    c, sol = _gradient(cfg)
    spec = cfg.reference_spec()
    a = float(cfg.thermo.get("a", 1.0))
    grid = cfg.rho_grid()
    curve = thermo_curve(c, sol.omega, spec, grid, a)
    (out / "thermo.csv").write_text(curve.to_csv())
    a_grid = cfg.thermo.get("a_grid", [0.0, a if a != 0 else 1.0])
    rows = einstein_relation_check(c, sol.omega, spec, grid, a_grid)
    worst = max(r.residual for r in rows)
    tol = cfg.tol("exact") if spec.is_product else cfg.tol("numeric")
    _manifest(out, cfg, "thermo", ["thermo.csv"], {
        "gradient_residual": sol.residual, "gradient_status": sol.status,
        "einstein_max_residual": worst, "einstein_threshold": tol,
        "method": "exact-polynomial" if spec.is_product else "finite-difference"})
    passed = worst <= tol
    print(json.dumps({"passed": passed, "einstein_max_residual": worst}))
    return EXIT_OK if passed else EXIT_FAIL


def cmd_ensembles(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    spec = cfg.reference_spec()
    f = cfg.observable()
    rho = float(cfg.ensemble.get("rho", 0.5))
    ells = [int(v) for v in cfg.ensemble.get("ell", [10, 14, 18, 22])]
    report = equivalence_expansion_report(f, spec, rho, ells)
    (out / "expansion.csv").write_text(report.to_csv())
    phis = cfg.ensemble.get("phis")
    if phis is None:
        phis = [bernoulli_phi(r) for r in np.linspace(0.05, 0.95, 19)]
    dm = DensityMap.build(spec, phis)
    (out / "density_map.csv").write_text(dm.to_csv())
    _manifest(out, cfg, "ensembles", ["expansion.csv", "density_map.csv"], {
        "expansion_exponent": report.exponent,
        "max_residual": {str(k): v for k, v in report.max_residual.items()}})
    return EXIT_OK


def _plan(cfg: ExperimentConfig) -> SimulationPlan:
    s, m = cfg.simulation, cfg.model
    horizon = float(s.get("horizon", 100.0))
    samples = int(s.get("samples", 11))
    times = tuple(np.linspace(0.0, horizon, samples))
    return SimulationPlan(cfg.rate(), L=int(s.get("L", 256)), horizon=horizon,
                          rho=m.get("rho", 0.5) if "phi" not in m else None, phi=m.get("phi"),
                          gamma=cfg.gamma, times=times, seed=int(cfg.seed),
                          replicas=int(s.get("replicas", 8)), spec=cfg.reference_spec())


def cmd_simulate(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    plan = _plan(cfg)
    threads = int(cfg.simulation.get("threads", threads))
    records = simulate_replicas(plan, threads=threads)
    rho = plan.rho if plan.rho is not None else float(np.mean([r.initial.mean() for r in records]))
    rows = []
    n = len(records)
    for i, t in enumerate(plan.times):
        dens = np.array([r.snapshots[i].mean() for r in records])
        cur = np.array([r.currents[i].sum() / plan.L for r in records])
        viol = sum(not check_continuity(r.initial, r.snapshots[i], r.currents[i]) for r in records)
        se = lambda v: float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")  # noqa: E731
        rows.append(("density", t, "all", dens.mean(), se(dens), "mc"))
        rows.append(("integrated_current_per_bond", t, "all", cur.mean(), se(cur), "mc"))
        rows.append(("continuity_violations", t, "all", viol, 0.0, "exact"))
        rows.append(("particle_count_drift", t, "all",
                     sum(int(r.snapshots[i].sum()) - int(r.initial.sum()) for r in records), 0.0, "exact"))
    lags = cfg.simulation.get("lags")
    files = ["observables.csv"]
    if lags:
        v = 0.0
        if cfg.simulation.get("frame_shift", False) and plan.rho is not None:
            v = plan.gamma * characteristic_velocity(plan.rate, plan.spec, plan.rho)
        sf = structure_function(records, rho, lags, origin_stride=cfg.simulation.get("origin_stride"),
                                frame_velocity=v)
        for j, t in enumerate(sf.times):
            for xi, x in enumerate(sf.x):
                rows.append(("S", t, int(x), sf.S[j, xi], sf.stderr[j, xi], "mc"))
        tot, tot_se = sf.total()
        growth = sf.moment_growth() if sf.C is not None else None
        for j, t in enumerate(sf.times):
            rows.append(("S_total", t, "all", tot[j], tot_se[j], "mc"))
            if growth is not None:
                rows.append(("second_moment_growth", t, "all", growth[j], float("nan"), "mc"))
    write_observables(out / "observables.csv", rows)
    if cfg.simulation.get("write_snapshots", False):
        for k, r in enumerate(records):
            name = f"snapshots_{k:04d}.bin"
            write_snapshots(out / name, r.snapshots)
            files.append(name)
    _manifest(out, cfg, "simulate", files, {
        "plan": plan.to_json(),
        "replica_seeds": {"entropy": int(cfg.seed), "spawn": list(range(plan.replicas))},
        "proposals": [int(r.proposals) for r in records],
        "accepted": [int(r.accepted) for r in records]})
    return EXIT_OK


def cmd_sbe(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    s = cfg.sbe
    rho = float(s.get("rho", 0.5))
    a = float(s.get("a", 0.0))
    c, sol = _gradient(cfg)
    curve = thermo_curve(c, sol.omega, cfg.reference_spec(), [rho], a)
    coeffs = sbe_mod.match_microscopic(curve, rho, a)
    M = int(s.get("M", 128))
    dx = float(s.get("dx", 1.0 / M))
    dt = float(s.get("dt", 0.5 * sbe_mod.max_stable_dt(dx, coeffs.D)))
    steps = int(s.get("steps", 2000))
    burn = int(s.get("burn_in", steps // 4))
    every = int(s.get("observe_every", 10))
    delta = float(s.get("delta", 4 * dx))
    rng = np.random.default_rng(int(cfg.seed))
    state = sbe_mod.initial_state(M, dx, coeffs, delta)
    rows = []
    variances = []
    for i in range(1, steps + 1):
        state = sbe_mod.step(state, dt, rng)
        if i % every == 0:
            rows.append(("mass", state.t, "all", state.mass, 0.0, "exact"))
            if i > burn:
                variances.append(float(np.mean(state.Y ** 2) - np.mean(state.Y) ** 2))
    v = np.array(variances)
    if v.size:
        rows.append(("cell_variance", state.t, "all", v.mean(), v.std(ddof=1) / math.sqrt(v.size)
                     if v.size > 1 else float("nan"), "mc"))
    rows.append(("cell_variance_prediction_lambda0", state.t, "all",
                 sbe_mod.stationary_variance(M, dx, dt, coeffs.D, coeffs.chi), 0.0, "exact"))
    write_observables(out / "observables.csv", rows)
    _manifest(out, cfg, "sbe", ["observables.csv"], {
        "coefficients": {"D": coeffs.D, "chi": coeffs.chi, "lambda": coeffs.lam,
                         "noise_amplitude": coeffs.noise_amplitude, "scale": coeffs.scale},
        "grid": {"M": M, "dx": dx, "dt": dt, "delta": delta, "steps": steps}})
    return EXIT_OK


COMMANDS = {"check": cmd_check, "thermo": cmd_thermo, "ensembles": cmd_ensembles,
            "simulate": cmd_simulate, "sbe": cmd_sbe}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kpzlattice", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"kpzlattice {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="TOML experiment config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="output directory (overrides config 'output')")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--tolerance-profile", choices=["strict", "default"])
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = ExperimentConfig.load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.tolerance_profile:
            cfg.tolerance_profile = args.tolerance_profile
        out = Path(args.out or cfg.output or f"kpz-{cfg.experiment}")
        out.mkdir(parents=True, exist_ok=True)
    except (ConfigError, OSError) as exc:
        print(f"kpzlattice: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](cfg, out, args.threads)
    except (ConfigError, KeyError) as exc:
        print(f"kpzlattice: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"kpzlattice: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
