"""Command-line entry point: ``msbridge <subcommand> --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bridge import (BridgeProblem, benamou_objective, girsanov_interval_kl, kl_vs_wiener,
                     midpoint_nodes, reference_benamou_objective, solve_bridge)
from .fokker_planck import ensembles_to_csv, histogram_tv, marginal_path, simulate_particles
from .ratelab import (ExperimentConfig, benchmark_config, emit_report, run_bound_check,
                      run_eps_sweep, run_m_sweep)

log = logging.getLogger("msbridge")

SWEEPS = {
    "rate-sweep": ("m_sweep", run_m_sweep),
    "eps-sweep": ("eps_sweep", run_eps_sweep),
    "bound-check": ("bound_check", run_bound_check),
}


def _load(args, kind):
    if args.config:
        config = ExperimentConfig.from_file(args.config)
        if kind is not None and config.sweep.kind != kind:
            config.sweep.kind = kind
    else:
        config = benchmark_config(kind or "m_sweep")
    return config


def _setup_logging(out: Path, verbose: bool):
    out.mkdir(parents=True, exist_ok=True)
    root = logging.getLogger("msbridge")
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    fmt = logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
    fh = logging.FileHandler(out / "run.log", mode="w")
    fh.setFormatter(fmt)
    sh = logging.StreamHandler(sys.stderr)
    sh.setFormatter(fmt)
    sh.setLevel(logging.DEBUG if verbose else logging.WARNING)
    root.handlers[:] = [fh, sh]


def _run_sweep(args, kind, runner):
    config = _load(args, kind)
    report = runner(config)
    csv_path, json_path = emit_report(report, args.out)
    for name, status in report.checks.items():
        log.info("check %s: %s", name, status)
    print(f"{report.kind}: slope={report.slope:.4f} r2={report.r_squared:.4f} -> {csv_path}, {json_path}")
    for name, status in report.checks.items():
        print(f"  {name}: {status}")
    return 0 if report.passed else 1


def _run_simulate(args):
    config = _load(args, None)
    out = Path(args.out)
    sim = config.simulate
    rho0 = config.initial_density()
    times = sorted(float(t) for t in sim.get("times", [0.0, config.T]))
    path = marginal_path(rho0, config.spec, config.tau, times, max_dt=config.fp_max_dt)
    path.to_csv(out / "marginal_path.csv")
    summary = {"times": times}
    n_particles = int(sim.get("particles", 0))
    if n_particles > 0:
        ens = simulate_particles(rho0, config.spec, config.tau, times, n_particles,
                                 float(sim.get("dt", 1e-4)), config.seed)
        ensembles_to_csv(ens, out / "particles.csv")
        summary["total_variation"] = [histogram_tv(e.positions, path.at(e.time)) for e in ens]
    with open(out / "simulate.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {out / 'marginal_path.csv'}")
    return 0


def _run_bridge(args):
    config = _load(args, None)
    out = Path(args.out)
    t_a, t_b = float(config.bridge["t_a"]), float(config.bridge["t_b"])
    rho0 = config.initial_density()
    times = np.concatenate([[0.0, t_a, t_b], midpoint_nodes(t_a, t_b, config.n_t)])
    path = marginal_path(rho0, config.spec, config.tau, times, max_dt=config.fp_max_dt)
    sol = solve_bridge(BridgeProblem(path.at(t_a), path.at(t_b), t_a, t_b, config.tau),
                       config.tol, config.max_iter)
    sol.dump_text(out / "bridge.txt")
    if config.grid.size <= 64:
        sol.coupling_to_csv(out / "coupling.csv")
    summary = {
        "t_a": t_a, "t_b": t_b, "iterations": sol.iterations,
        "marginal_residual": sol.marginal_residual,
        "girsanov_kl": girsanov_interval_kl(sol, config.spec, path, config.n_t),
        "kl_vs_wiener": kl_vs_wiener(config.spec, path, t_a, t_b, config.tau, config.n_t),
        "benamou_bridge": benamou_objective(sol, config.n_t),
        "benamou_reference": reference_benamou_objective(config.spec, path, t_a, t_b, config.tau,
                                                         config.n_t),
    }
    with open(out / "bridge.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0 if summary["benamou_bridge"] <= summary["benamou_reference"] + 1e-6 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msbridge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in list(SWEEPS) + ["simulate", "bridge"]:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML experiment configuration (default: built-in benchmark)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    _setup_logging(out, args.verbose)
    if args.command in SWEEPS:
        kind, runner = SWEEPS[args.command]
        return _run_sweep(args, kind, runner)
    if args.command == "simulate":
        return _run_simulate(args)
    return _run_bridge(args)


if __name__ == "__main__":
    sys.exit(main())
