"""
Quick self-checks of the solver invariants on small random instances.

Used by the ``check`` command; the test suite covers the same properties in
more depth.
"""
import numpy as np

from ..ao import CONVERGED, SolverConfig, check_constraints, solve
from ..model import Channels
from ..positions import (lipschitz_delta, position_surrogate, q_coefficients, q_gradient,
                         q_hessian, q_single)
from ..precoder import expand_precoder, initial_precoder, surrogate_precoder_objective
from .config import ExperimentConfig
from .scenario import generate_scenario

__all__ = ["run_checks"]


def _instance(seed):
    cfg = ExperimentConfig(mx=4, my=2, n_rx=3, users=2, clutter=3, paths=5, seed=seed,
                           region_wl=(2.0,))
    geom = cfg.geometry()
    sc = generate_scenario(cfg, 0)
    return sc, geom


def _random_pos(rng, geom):
    while True:
        pos = rng.uniform(0, geom.region_size, (geom.n_rx, 2))
        d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)[np.triu_indices(geom.n_rx, 1)]
        if d.min() >= geom.min_distance:
            return pos


def run_checks(seeds=range(5), draws=200):
    """Return a list of ``(name, passed, detail)``."""
    out = []
    worst = {"tangency": 0.0, "majorization": -np.inf, "gradient": 0.0, "delta": -np.inf}
    mono_ok, feas_ok = True, True
    for seed in seeds:
        rng = np.random.default_rng(seed)
        sc, geom = _instance(seed)
        ch = Channels.build(sc, geom)
        W = initial_precoder(ch)
        pos = _random_pos(rng, geom)
        scale = max(1.0, ch.scnr(W, pos))

        exp = expand_precoder(W, pos, ch)
        worst["tangency"] = max(worst["tangency"],
                                abs(surrogate_precoder_objective(W, exp) - ch.scnr(W, pos)) / scale)
        c = q_coefficients(W, pos, ch)
        worst["tangency"] = max(worst["tangency"],
                                abs(position_surrogate(pos, c) - ch.scnr(W, pos)) / scale)
        for _ in range(draws):
            Z = (rng.standard_normal(W.shape) + 1j * rng.standard_normal(W.shape))
            Z *= np.sqrt(sc.power_budget) / np.linalg.norm(Z)
            gap = exp.value(Z) - ch.scnr(Z, pos)
            worst["majorization"] = max(worst["majorization"], gap / scale)

        lam = geom.wavelength
        for n in range(geom.n_rx):
            r = rng.uniform(0, geom.region_size, 2)
            g = q_gradient(r, n, c, pos)
            h = 1e-6 * lam
            fd = np.array([(q_single(r + h * e, n, c, pos, shifted=True)
                            - q_single(r - h * e, n, c, pos, shifted=True)) / (2 * h)
                           for e in np.eye(2)])
            worst["gradient"] = max(worst["gradient"],
                                    np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-300))
            ev = np.linalg.eigvalsh(q_hessian(r, n, c, pos)).max()
            worst["delta"] = max(worst["delta"], ev / lipschitz_delta(n, c) - 1)

        W2, pos2, tr = solve(sc, geom, SolverConfig(max_outer=20))
        mono_ok &= bool(np.all(np.diff(tr.path) >= -1e-9 * max(tr.path)))
        mono_ok &= tr.status == CONVERGED
        feas_ok &= check_constraints(W2, pos2, sc, geom).ok()

    out.append(("precoder and position surrogates touch the SCNR",
                worst["tangency"] <= 1e-8, f"max rel. error {worst['tangency']:.2e}"))
    out.append(("precoder surrogate stays below the SCNR",
                worst["majorization"] <= 1e-8, f"max excess {worst['majorization']:.2e}"))
    out.append(("position gradient matches finite differences",
                worst["gradient"] <= 1e-5, f"max rel. error {worst['gradient']:.2e}"))
    out.append(("curvature bound dominates the Hessian",
                worst["delta"] <= 1e-6, f"max eig/delta - 1 = {worst['delta']:.2e}"))
    out.append(("alternating solver is monotone and converges", mono_ok, ""))
    out.append(("solver output satisfies every constraint", feas_ok, ""))
    return out
