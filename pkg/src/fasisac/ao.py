"""
Alternating optimization of the precoder and the receive antenna positions.
"""
import time
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, InfeasibleError
from .model import Channels, grid_positions, min_pairwise_distance
from .positions import optimize_positions
from .precoder import increase_below, initial_precoder, optimize_precoder

__all__ = ["SolverConfig", "SolveTrace", "FeasibilityReport", "solve", "check_constraints",
           "CONVERGED", "MAX_ITERATIONS", "INFEASIBLE"]

CONVERGED = "Converged"
MAX_ITERATIONS = "MaxIterations"
INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class SolverConfig:
    """Stopping rules of the alternating solver.

    ``relative`` measures every SCNR or surrogate gain relative to the
    current SCNR. Absolute gains are in linear SCNR units.
    """
    eps_outer: float = 1e-4
    eps_w: float = 1e-4
    eps_r_outer: float = 1e-4
    eps_r_inner: float = 1e-4
    max_outer: int = 100
    max_inner: int = 200
    qcqp_tol: float = 1e-10
    rng_seed: int = 0
    relative: bool = True

    def __post_init__(self):
        for name in ("eps_outer", "eps_w", "eps_r_outer", "eps_r_inner", "qcqp_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ConfigError("iteration caps must be at least 1")


@dataclass
class SolveTrace:
    """Per outer iteration records; entry 0 describes the starting point."""
    scnr: list = field(default_factory=list)
    sinr: list = field(default_factory=list)
    power: list = field(default_factory=list)
    min_distance: list = field(default_factory=list)
    ms: list = field(default_factory=list)
    # every SCNR value visited, in order, across both blocks
    path: list = field(default_factory=list)
    # inner single-antenna surrogate sequences
    q: list = field(default_factory=list)
    status: str = MAX_ITERATIONS
    message: str = ""

    @property
    def iterations(self):
        return max(len(self.scnr) - 1, 0)

    def record(self, ch, W, pos, ms):
        self.scnr.append(ch.scnr(W, pos))
        self.sinr.append(ch.sinr(W))
        self.power.append(float(np.sum(np.abs(W) ** 2)))
        self.min_distance.append(min_pairwise_distance(pos))
        self.ms.append(ms)


def solve(scenario, geom, config=None, W_init=None, pos_init=None):
    """Maximize the SCNR over precoder and positions, precoder block first.

    Returns ``(W, positions, trace)``. When no feasible starting precoder
    exists the status is ``Infeasible`` and ``W`` is None.
    """
    config = config or SolverConfig()
    ch = Channels.build(scenario, geom)
    trace = SolveTrace()
    pos = grid_positions(geom) if pos_init is None else np.array(pos_init, dtype=float)
    t0 = time.perf_counter()
    try:
        W = initial_precoder(ch) if W_init is None else np.array(W_init, dtype=complex)
    except InfeasibleError as exc:
        trace.status, trace.message = INFEASIBLE, str(exc)
        return None, pos, trace
    trace.record(ch, W, pos, 0.0)
    trace.path.append(trace.scnr[-1])
    for _ in range(config.max_outer):
        start = time.perf_counter()
        old = trace.scnr[-1]
        try:
            W, wt = optimize_precoder(W, pos, ch, eps=config.eps_w, max_iter=config.max_inner,
                                      tol=config.qcqp_tol, relative=config.relative)
        except InfeasibleError as exc:
            trace.status, trace.message = INFEASIBLE, str(exc)
            return W, pos, trace
        trace.path.extend(wt.scnr[1:])
        pos, pt = optimize_positions(W, pos, ch, eps=config.eps_r_outer,
                                     eps_inner=config.eps_r_inner, max_outer=config.max_inner,
                                     max_inner=config.max_inner, relative=config.relative)
        trace.path.extend(pt.scnr[1:])
        trace.q.extend(pt.q)
        trace.record(ch, W, pos, (time.perf_counter() - start) * 1e3)
        if increase_below(old, trace.scnr[-1], config.eps_outer, config.relative):
            trace.status = CONVERGED
            break
    trace.ms[0] = (time.perf_counter() - t0) * 1e3 - sum(trace.ms[1:])
    return W, pos, trace


@dataclass
class FeasibilityReport:
    """Constraint residuals; a residual is violated when positive."""
    power: float                 # tr(W W^H) - P0
    sinr: np.ndarray             # gamma_k - SINR_k
    distance: np.ndarray         # D - ||r_n - r_l||, pairs n < l
    region: float                # largest distance outside the square region
    power_budget: float
    sinr_targets: np.ndarray
    min_distance: float

    def ok(self, power_rtol=1e-6, sinr_rtol=1e-6, distance_rtol=1e-9, region_atol=1e-12):
        return bool(
            self.power <= self.power_budget * power_rtol
            and np.all(self.sinr <= self.sinr_targets * sinr_rtol)
            and np.all(self.distance <= self.min_distance * distance_rtol)
            and self.region <= region_atol)


def check_constraints(W, pos, scenario, geom):
    ch = Channels.build(scenario, geom)
    W = np.asarray(W, dtype=complex)
    pos = np.asarray(pos, dtype=float)
    n = pos.shape[0]
    iu = np.triu_indices(n, 1)
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)[iu]
    A = geom.region_size
    region = float(max(0.0, -pos.min(), pos.max() - A))
    return FeasibilityReport(
        power=float(np.sum(np.abs(W) ** 2) - scenario.power_budget),
        sinr=np.asarray(scenario.sinr_targets, dtype=float) - ch.sinr(W),
        distance=geom.min_distance - dist,
        region=region,
        power_budget=scenario.power_budget,
        sinr_targets=np.asarray(scenario.sinr_targets, dtype=float),
        min_distance=geom.min_distance,
    )
