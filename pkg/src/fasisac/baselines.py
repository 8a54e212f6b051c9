"""
Comparison schemes with restricted receive geometries.

* FPA: fixed planar array at spacing ``D`` in the middle of the region.
* RULA: a uniform linear array through the region center that may rotate to
  one of 50 angles in ``[0, pi)``.
* APS: antennas restricted to a square lattice of pitch ``D``, placed by
  per-antenna exhaustive search alternated with precoder optimization.

Every scheme reuses the same precoder optimizer as the main solver, so
comparisons isolate the effect of the geometry.
"""
import time
from dataclasses import dataclass, field

import numpy as np

from .ao import SolverConfig
from .exceptions import NoFeasibleAngleError
from .model import Channels, grid_positions
from .precoder import increase_below, initial_precoder, optimize_precoder

__all__ = ["BaselineResult", "run_fpa", "run_rula", "run_aps",
           "rula_positions", "lattice_nodes", "RULA_ANGLES"]

RULA_ANGLES = 50


@dataclass
class BaselineResult:
    scheme: str
    positions: np.ndarray
    W: np.ndarray
    scnr: float
    ms: float
    converged: bool = True
    iterations: int = 0
    info: dict = field(default_factory=dict)


def _precoder(ch, pos, cfg, W0=None):
    W0 = initial_precoder(ch) if W0 is None else W0
    W, tr = optimize_precoder(W0, pos, ch, eps=cfg.eps_w, max_iter=cfg.max_inner,
                              tol=cfg.qcqp_tol, relative=cfg.relative)
    return W, tr


def run_fpa(scenario, geom, config=None):
    """Fixed grid of spacing ``D`` centered in the region."""
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    ch = Channels.build(scenario, geom)
    pos = grid_positions(geom)
    W, tr = _precoder(ch, pos, cfg)
    return BaselineResult("FPA", pos, W, tr.scnr[-1], (time.perf_counter() - t0) * 1e3,
                          not tr.hit_cap, tr.iterations)


def rula_positions(geom, angle, center=None):
    """Linear array of spacing ``D`` through ``center`` at the given angle."""
    c = np.full(2, geom.region_size / 2) if center is None else np.asarray(center, float)
    offs = (np.arange(geom.n_rx) - (geom.n_rx - 1) / 2) * geom.min_distance
    return c + offs[:, None] * np.array([np.cos(angle), np.sin(angle)])


def run_rula(scenario, geom, config=None, n_angles=RULA_ANGLES):
    """Rotating linear array; the precoder is re-optimized at every angle.

    Raises
    ------
    NoFeasibleAngleError
        If the array leaves the region at every candidate angle.
    """
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    ch = Channels.build(scenario, geom)
    W0 = initial_precoder(ch)
    A = geom.region_size
    best = None
    evaluated = 0
    iters = 0
    converged = True
    for m in range(n_angles):
        angle = m * np.pi / n_angles
        pos = rula_positions(geom, angle)
        if pos.min() < -1e-12 or pos.max() > A + 1e-12:
            continue
        pos = np.clip(pos, 0.0, A)
        W, tr = _precoder(ch, pos, cfg, W0)
        evaluated += 1
        iters += tr.iterations
        converged &= not tr.hit_cap
        if best is None or tr.scnr[-1] > best[0]:
            best = (tr.scnr[-1], m, pos, W)
    if best is None:
        raise NoFeasibleAngleError("the linear array leaves the region at every angle")
    val, m, pos, W = best
    return BaselineResult("RULA", pos, W, val, (time.perf_counter() - t0) * 1e3, converged,
                          iters, {"angle_index": m, "angle": m * np.pi / n_angles,
                                  "evaluated": evaluated})


def lattice_nodes(geom):
    """Candidate positions: multiples of ``D`` inside the region, x-major."""
    D = geom.min_distance
    g = int(np.floor(geom.region_size / D * (1 + 1e-12))) + 1
    ticks = np.arange(g) * D
    xx, yy = np.meshgrid(ticks, ticks, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel()], axis=1)


def _central_block(geom, nodes):
    """Grid-shaped set of lattice nodes closest to the region center."""
    cols, rows = geom.grid_shape
    D = geom.min_distance
    g = int(round(np.sqrt(len(nodes))))
    # lower-left node index per axis, rounded toward the origin when the
    # block cannot sit exactly in the middle
    ix, iy = (g - cols) // 2, (g - rows) // 2
    idx = np.arange(geom.n_rx)
    return np.stack([(ix + idx % cols) * D, (iy + idx // cols) * D], axis=1).astype(float)


def run_aps(scenario, geom, config=None, pos_init=None):
    """Alternating lattice position selection and precoder optimization.

    Each pass moves every antenna in turn to the lattice node with the
    highest SCNR among nodes at least ``D`` from the other antennas (moving
    only on strict improvement), then re-optimizes the precoder. Passes stop
    once the SCNR gain of a pass falls below ``config.eps_outer``.
    """
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    ch = Channels.build(scenario, geom)
    nodes = lattice_nodes(geom)
    if len(nodes) < geom.n_rx:
        raise ValueError("lattice has fewer nodes than antennas")
    pos = _central_block(geom, nodes) if pos_init is None else np.array(pos_init, dtype=float)
    W, tr = _precoder(ch, pos, cfg)
    cur = tr.scnr[-1]
    history = [cur]
    iters = tr.iterations
    converged = False
    D = geom.min_distance
    for _ in range(cfg.max_outer):
        old = cur
        for n in range(geom.n_rx):
            others = np.delete(pos, n, axis=0)
            dist = np.linalg.norm(nodes[:, None, :] - others[None, :, :], axis=-1)
            ok = np.all(dist >= D * (1 - 1e-9), axis=1)
            best_val, best_node = cur, None
            for j in np.flatnonzero(ok):
                trial = pos.copy()
                trial[n] = nodes[j]
                val = ch.scnr(W, trial)
                if val > best_val:
                    best_val, best_node = val, j
            if best_node is not None:
                pos[n] = nodes[best_node]
                cur = best_val
        W, tr = _precoder(ch, pos, cfg, W)
        iters += tr.iterations
        cur = tr.scnr[-1]
        history.append(cur)
        if increase_below(old, cur, cfg.eps_outer, cfg.relative):
            converged = True
            break
    return BaselineResult("APS", pos, W, cur, (time.perf_counter() - t0) * 1e3, converged,
                          iters, {"history": history})
