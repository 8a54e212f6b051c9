"""Random scenario generation."""
import numpy as np

from ..model import Scenario, dbm_to_watt

__all__ = ["trial_seed", "generate_scenario"]


def trial_seed(seed, trial_index):
    """Seed of one trial: the base seed XOR the trial index."""
    return (int(seed) ^ int(trial_index)) & (2 ** 64 - 1)


def _gains(rng, n, kind):
    if kind == "real":
        return rng.standard_normal(n).astype(complex)
    # circularly symmetric, unit variance
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)


def generate_scenario(config, trial_index, rng=None):
    """Draw one realization of users, target and clutter.

    Angles are uniform on ``[0, angle_max]``; path gains and reflection
    coefficients are standard Gaussian (complex by default). The power budget
    and SINR target are the first entries of the configuration lists, so a
    sweep point is selected with :meth:`ExperimentConfig.point`. The random
    draws depend only on ``(config.seed, trial_index)`` and the population
    sizes, so every sweep point of a trial sees the same geometry of paths.
    """
    seed = trial_seed(config.seed, trial_index)
    rng = np.random.default_rng(seed) if rng is None else rng
    hi = np.deg2rad(config.angle_max_deg)
    K, L, I = config.users, config.paths, config.clutter
    gains, elev, azim = [], [], []
    for _ in range(K):
        gains.append(_gains(rng, L, config.gain))
        elev.append(rng.uniform(0.0, hi, L))
        azim.append(rng.uniform(0.0, hi, L))
    a0 = complex(_gains(rng, 1, config.gain)[0])
    th0, ph0 = rng.uniform(0.0, hi, 2)
    ac = _gains(rng, I, config.gain)
    thc = rng.uniform(0.0, hi, I)
    phc = rng.uniform(0.0, hi, I)
    return Scenario(
        path_gains=tuple(gains), path_elevations=tuple(elev), path_azimuths=tuple(azim),
        target_gain=a0, target_elevation=float(th0), target_azimuth=float(ph0),
        clutter_gains=ac, clutter_elevations=thc, clutter_azimuths=phc,
        user_noise=np.full(K, float(dbm_to_watt(config.user_noise_dbm))),
        radar_noise=float(dbm_to_watt(config.radar_noise_dbm)),
        sinr_targets=np.full(K, float(config.sinr_target[0])),
        power_budget=float(config.power_budget[0]),
        meta={"seed": seed, "trial": int(trial_index)},
    )
