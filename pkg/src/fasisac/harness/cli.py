"""
Command line interface.

Exit codes: 0 on success, 1 on configuration errors, 2 on runtime failures.
"""
import argparse
import sys
from dataclasses import replace
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..ao import solve
from ..baselines import run_fpa
from ..exceptions import ConfigError, FasIsacError
from ..model import to_db
from .checks import run_checks
from .config import ExperimentConfig, load_config
from .scenario import generate_scenario
from .sweep import resolve_threads, run_sweep, summarize, write_records

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="fasisac", description=(
        "SCNR maximization for MIMO ISAC with movable receive antennas."))
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="experiment config file (INI)")
        sp.add_argument("--seed", type=int, help="base random seed (unsigned 64-bit)")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker processes (THREADS in the environment overrides)")

    run = sub.add_parser("run", help="run a sweep and write CSV records")
    common(run)
    run.add_argument("--out", default="results.csv", help="output CSV path")
    run.add_argument("--trials", type=int, help="override the number of trials")

    demo = sub.add_parser("demo", help="solve one full-size scenario and print the trace")
    common(demo)

    check = sub.add_parser("check", help="run invariant checks on small instances")
    check.add_argument("--trials", type=int, default=5, help="number of random instances")
    return p


def _config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        changes["trials"] = args.trials
    if changes:
        cfg = replace(cfg, **changes)
    return cfg


def _cmd_run(args):
    cfg = _config(args)
    threads = resolve_threads(args.threads)
    records = run_sweep(cfg, threads)
    write_records(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    for row in summarize(records):
        print(f"{row['scheme']:5s} {cfg.sweep}={row['sweep_value']:<8g} "
              f"mean SCNR {row['mean_scnr_db']:8.3f} dB  trials {row['trials']}"
              f"  excluded {row['excluded']}")
    return EXIT_OK


def _demo_scheme(args):
    scheme, scenario, geom, solver = args
    if scheme == "FAS":
        W, pos, tr = solve(scenario, geom, solver)
        return tr, pos
    res = run_fpa(scenario, geom, solver)
    return res, res.positions


def _cmd_demo(args):
    cfg = _config(args)
    if cfg.sweep_key == "region_wl":
        cfg = cfg.point(2.0 if 2.0 in cfg.region_wl else cfg.region_wl[0])
    else:
        cfg = cfg.point(cfg.sweep_values[0])
    geom = cfg.geometry()
    scenario = generate_scenario(cfg, 0)
    threads = resolve_threads(args.threads)
    jobs = [("FAS", scenario, geom, cfg.solver), ("FPA", scenario, geom, cfg.solver)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
            (tr, pos), (fpa, _) = pool.map(_demo_scheme, jobs)
    else:
        (tr, pos), (fpa, _) = map(_demo_scheme, jobs)

    print(f"seed {cfg.seed}: M={geom.m} N={geom.n_rx} K={cfg.users} I={cfg.clutter} "
          f"A={cfg.region_wl[0]:g} lambda P0={cfg.power_budget[0]:g} W "
          f"gamma={cfg.sinr_target[0]:g}")
    print(f"status {tr.status}")
    if tr.message:
        print(tr.message)
    print("iter  SCNR [dB]        min SINR     power [W]    min dist [m]")
    for i in range(len(tr.scnr)):
        sinr = np.min(tr.sinr[i]) if np.size(tr.sinr[i]) else float("nan")
        print(f"{i:4d}  {to_db(tr.scnr[i]):15.10f}  {sinr:.6e}  {tr.power[i]:.6e}  "
              f"{tr.min_distance[i]:.6e}")
    print("positions [m]:")
    for x, y in pos:
        print(f"  {x:.9f} {y:.9f}")
    print(f"FPA SCNR {to_db(fpa.scnr):.10f} dB")
    return EXIT_OK


def _cmd_check(args):
    results = run_checks(seeds=range(args.trials))
    ok = True
    for name, passed, detail in results:
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
    return EXIT_OK if ok else EXIT_RUNTIME


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return {"run": _cmd_run, "demo": _cmd_demo, "check": _cmd_check}[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FasIsacError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
