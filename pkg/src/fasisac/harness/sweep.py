"""
Monte-Carlo sweeps and their CSV records.
"""
import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..ao import INFEASIBLE, CONVERGED, check_constraints, solve
from ..baselines import run_aps, run_fpa, run_rula
from ..exceptions import FasIsacError
from .config import SCHEMES
from .scenario import generate_scenario, trial_seed

__all__ = ["SweepRecord", "run_sweep", "run_cell", "write_records", "read_records",
           "summarize", "resolve_threads", "CSV_HEADER"]

CSV_HEADER = ["scheme", "sweep_var", "sweep_value", "trial", "seed", "scnr_db",
              "scnr_linear", "converged", "iterations", "ms"]


@dataclass
class SweepRecord:
    scheme: str
    sweep_var: str
    sweep_value: float
    trial: int
    seed: int
    scnr_db: float
    scnr_linear: float
    converged: bool
    iterations: int
    ms: float
    status: str = CONVERGED
    # largest constraint violation relative to its bound (<= 0 when feasible)
    residual: float = math.nan

    @property
    def feasible(self):
        return self.status != INFEASIBLE and math.isfinite(self.scnr_linear)


def _residual(W, pos, scenario, geom):
    rep = check_constraints(W, pos, scenario, geom)
    parts = [rep.power / rep.power_budget, rep.region / geom.min_distance]
    if rep.sinr.size:
        parts.append(np.max(rep.sinr / rep.sinr_targets))
    if rep.distance.size:
        parts.append(np.max(rep.distance) / rep.min_distance)
    return float(max(parts))


def _run_scheme(scheme, scenario, geom, solver):
    """(scnr, converged, iterations, ms, status, W, positions) of one scheme."""
    if scheme == "FAS":
        W, pos, tr = solve(scenario, geom, solver)
        if tr.status == INFEASIBLE:
            return math.nan, False, tr.iterations, sum(tr.ms), INFEASIBLE, None, pos
        return (tr.scnr[-1], tr.status == CONVERGED, tr.iterations, sum(tr.ms), tr.status,
                W, pos)
    fn = {"FPA": run_fpa, "RULA": run_rula, "APS": run_aps}[scheme]
    res = fn(scenario, geom, solver)
    return (res.scnr, res.converged, res.iterations, res.ms,
            CONVERGED if res.converged else "MaxIterations", res.W, res.positions)


def run_cell(config, point_index, trial):
    """All schemes on one shared scenario; returns records in scheme order."""
    value = config.sweep_values[point_index]
    cfg = config.point(value)
    geom = cfg.geometry()
    seed = trial_seed(config.seed, trial)
    scenario = generate_scenario(cfg, trial)
    out = []
    for scheme in config.schemes:
        try:
            scnr, conv, iters, ms, status, W, pos = _run_scheme(scheme, scenario, geom,
                                                                config.solver)
        except (FasIsacError, np.linalg.LinAlgError, ValueError) as exc:
            scnr, conv, iters, ms, W, pos = math.nan, False, 0, 0.0, None, None
            status = INFEASIBLE if "Infeasible" in type(exc).__name__ else f"Error: {exc}"
        resid = _residual(W, pos, scenario, geom) if W is not None else math.nan
        db = 10 * math.log10(scnr) if scnr > 0 else (-math.inf if scnr == 0 else math.nan)
        out.append(SweepRecord(scheme, config.sweep, float(value), int(trial), seed, db,
                               float(scnr), bool(conv), int(iters), float(ms), status, resid))
    return out


def _cell(args):
    return run_cell(*args)


def resolve_threads(threads=None):
    """Worker count: ``THREADS`` in the environment overrides the argument."""
    env = os.environ.get("THREADS")
    if env:
        try:
            threads = int(env)
        except ValueError:
            raise FasIsacError(f"THREADS: expected an integer, got {env!r}") from None
    threads = 1 if threads is None else int(threads)
    if threads < 1:
        raise FasIsacError("thread count must be at least 1")
    return threads


def run_sweep(config, threads=None):
    """Every scheme on every (sweep point, trial) cell.

    Cells run on a process pool of ``threads`` workers. Records come back
    sorted by scheme (in :data:`SCHEMES` order), sweep point and trial, so the
    output does not depend on the worker count or completion order.
    """
    threads = resolve_threads(threads)
    tasks = [(config, p, t) for p in range(len(config.sweep_values))
             for t in range(config.trials)]
    if threads == 1 or len(tasks) == 1:
        cells = [run_cell(*t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            cells = list(pool.map(_cell, tasks))
    order = {s: i for i, s in enumerate(SCHEMES)}
    index = {v: i for i, v in enumerate(config.sweep_values)}
    records = [r for cell in cells for r in cell]
    records.sort(key=lambda r: (order[r.scheme], index[r.sweep_value], r.trial))
    return records


def write_records(records, path):
    """Write records as CSV (UTF-8, LF line endings, round-trip float precision)."""
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in records:
                w.writerow([r.scheme, r.sweep_var, repr(float(r.sweep_value)), r.trial, r.seed,
                            repr(float(r.scnr_db)), repr(float(r.scnr_linear)),
                            "true" if r.converged else "false", r.iterations,
                            repr(float(r.ms))])
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write records to {path}: {exc.strerror}") from None


def read_records(path):
    out = []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {rd.fieldnames}")
        for row in rd:
            scnr = float(row["scnr_linear"])
            out.append(SweepRecord(
                row["scheme"], row["sweep_var"], float(row["sweep_value"]), int(row["trial"]),
                int(row["seed"]), float(row["scnr_db"]), scnr, row["converged"] == "true",
                int(row["iterations"]), float(row["ms"]),
                CONVERGED if math.isfinite(scnr) else INFEASIBLE))
    return out


def summarize(records):
    """Mean SCNR per (scheme, sweep value) over feasible trials.

    Returns a list of dicts with keys ``scheme``, ``sweep_value``,
    ``mean_scnr``, ``mean_scnr_db`` (dB of the mean), ``trials`` and
    ``excluded`` (trials without a feasible solution).
    """
    groups = {}
    for r in records:
        groups.setdefault((r.scheme, r.sweep_value), []).append(r)
    order = {s: i for i, s in enumerate(SCHEMES)}
    rows = []
    for (scheme, value), rs in sorted(groups.items(), key=lambda kv: (order[kv[0][0]], kv[0][1])):
        vals = [r.scnr_linear for r in rs if r.feasible]
        mean = float(np.mean(vals)) if vals else math.nan
        rows.append({"scheme": scheme, "sweep_value": value, "mean_scnr": mean,
                     "mean_scnr_db": 10 * math.log10(mean) if mean > 0 else math.nan,
                     "trials": len(vals), "excluded": len(rs) - len(vals)})
    return rows
