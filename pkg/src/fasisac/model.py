"""
Physical-layer model of a MIMO ISAC base station with movable receive antennas.

The transmitter is a fixed uniform planar array (UPA) of ``mx * my`` elements.
The receiver has ``n_rx`` antennas that may sit anywhere in the square region
``[0, A]^2`` as long as they stay ``min_distance`` apart.

Conventions
-----------
* All angles are radians. Transmit steering vectors take (elevation, azimuth)
  and the same pair is used for target and clutter directions.
* Transmit steering vectors are ordered x-major: ``kron(ramp_x, ramp_y)``.
* Positions are ``(N, 2)`` real arrays of ``(x, y)`` coordinates in meters.
* The precoder ``W`` is an ``(M, S)`` complex array. Column ``k < K`` carries
  the data stream of user ``k``; when there are no users a single
  sensing-only column is used (see :func:`n_streams`).
* The echo model multiplies by the plain transpose of the transmit steering
  vector, not its conjugate.
"""
from dataclasses import dataclass, field, replace
from math import ceil, sqrt

import numpy as np

__all__ = [
    "ArrayGeometry", "Scenario", "Channels",
    "transmit_steering", "path_difference", "receive_steering",
    "user_channel", "effective_matrix", "clutter_plus_noise", "scnr", "sinr",
    "n_streams", "grid_positions", "min_pairwise_distance", "positions_feasible",
    "dbm_to_watt", "to_db",
]


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def to_db(x):
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class ArrayGeometry:
    """Transmit UPA and receive movable-antenna region.

    Parameters
    ----------
    mx, my : int
        UPA dimensions; ``M = mx * my``.
    n_rx : int
        Number of movable receive antennas.
    region_size : float
        Side ``A`` of the square region, meters.
    min_distance : float
        Minimum spacing ``D`` between receive antennas, meters.
    wavelength : float
        Carrier wavelength, meters.
    tx_spacing : float, optional
        UPA inter-element spacing. Defaults to half a wavelength.

    Raises
    ------
    ValueError
        On non-positive sizes, or when the initial ``ceil(sqrt(N))``-column grid
        with spacing ``min_distance`` does not fit in the region.
    """
    mx: int
    my: int
    n_rx: int
    region_size: float
    min_distance: float
    wavelength: float
    tx_spacing: float = None

    def __post_init__(self):
        if self.tx_spacing is None:
            object.__setattr__(self, "tx_spacing", self.wavelength / 2)
        if self.mx < 1 or self.my < 1 or self.n_rx < 1:
            raise ValueError("mx, my and n_rx must be positive integers")
        if self.wavelength <= 0 or self.min_distance <= 0:
            raise ValueError("wavelength and min_distance must be positive")
        if self.region_size < 0 or self.tx_spacing <= 0:
            raise ValueError("region_size must be >= 0 and tx_spacing > 0")
        cols, rows = self.grid_shape
        extent = (max(cols, rows) - 1) * self.min_distance
        if extent > self.region_size * (1 + 1e-12):
            raise ValueError(
                f"{self.n_rx} antennas at spacing {self.min_distance:g} m need a "
                f"{extent:g} m square, region is {self.region_size:g} m")

    @property
    def m(self):
        return self.mx * self.my

    @property
    def grid_shape(self):
        """(columns, rows) of the default planar arrangement."""
        cols = ceil(sqrt(self.n_rx))
        return cols, ceil(self.n_rx / cols)

    def with_region(self, region_size):
        return replace(self, region_size=region_size)


@dataclass(frozen=True)
class Scenario:
    """One random realization of users, target, clutter and budgets.

    Per-user path data are tuples of 1-D arrays so that users may have
    different path counts. ``sinr_targets`` and ``user_noise`` have one entry
    per user.
    """
    path_gains: tuple
    path_elevations: tuple
    path_azimuths: tuple
    target_gain: complex
    target_elevation: float
    target_azimuth: float
    clutter_gains: np.ndarray
    clutter_elevations: np.ndarray
    clutter_azimuths: np.ndarray
    user_noise: np.ndarray
    radar_noise: float
    sinr_targets: np.ndarray
    power_budget: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        k = len(self.path_gains)
        if not (len(self.path_elevations) == len(self.path_azimuths) == k):
            raise ValueError("per-user path tuples differ in length")
        for g, e, a in zip(self.path_gains, self.path_elevations, self.path_azimuths):
            if len(g) < 1 or not (len(g) == len(e) == len(a)):
                raise ValueError("each user needs at least one path and matching angle arrays")
        if np.size(self.user_noise) != k or np.size(self.sinr_targets) != k:
            raise ValueError("user_noise and sinr_targets need one entry per user")
        if not (np.size(self.clutter_gains) == np.size(self.clutter_elevations)
                == np.size(self.clutter_azimuths)):
            raise ValueError("clutter arrays differ in length")
        if self.radar_noise <= 0 or self.power_budget <= 0:
            raise ValueError("radar_noise and power_budget must be positive")
        if np.any(np.asarray(self.user_noise) <= 0) or np.any(np.asarray(self.sinr_targets) <= 0):
            raise ValueError("user noise powers and SINR targets must be positive")
        angles = np.concatenate([np.ravel(x) for x in (
            *self.path_elevations, *self.path_azimuths, self.clutter_elevations,
            self.clutter_azimuths, [self.target_elevation, self.target_azimuth])])
        if not np.all(np.isfinite(angles)):
            raise ValueError("angles must be finite")

    @property
    def n_users(self):
        return len(self.path_gains)

    @property
    def n_clutter(self):
        return int(np.size(self.clutter_gains))

    def replace(self, **changes):
        return replace(self, **changes)


def n_streams(scenario):
    """Number of precoder columns: one per user, at least one."""
    return max(scenario.n_users, 1)


def transmit_steering(psi, vartheta, geom):
    """UPA response ``kron(ramp_x(sin psi cos vartheta), ramp_y(cos psi))``.

    ``psi`` and ``vartheta`` may be arrays of equal shape; the element axis is
    then appended last.
    """
    k = 2 * np.pi / geom.wavelength * geom.tx_spacing
    psi = np.asarray(psi, dtype=float)
    vartheta = np.asarray(vartheta, dtype=float)
    ux = np.sin(psi) * np.cos(vartheta)
    uy = np.cos(psi)
    ramp_x = np.exp(1j * k * ux[..., None] * np.arange(geom.mx))
    ramp_y = np.exp(1j * k * uy[..., None] * np.arange(geom.my))
    return (ramp_x[..., :, None] * ramp_y[..., None, :]).reshape(*psi.shape, geom.m)


def path_difference(r, theta, phi):
    """Extra propagation distance of position(s) ``r`` w.r.t. the origin."""
    r = np.asarray(r, dtype=float)
    return r[..., 0] * np.sin(theta) * np.cos(phi) + r[..., 1] * np.cos(theta)


def direction_gradient(theta, phi):
    """Gradient of :func:`path_difference` with respect to the position."""
    return np.array([np.sin(theta) * np.cos(phi), np.cos(theta)])


def receive_steering(theta, phi, pos, geom):
    """Far-field response of the receive antennas at ``pos``."""
    return np.exp(2j * np.pi / geom.wavelength * path_difference(pos, theta, phi))


def receive_matrix(thetas, phis, pos, geom):
    """Receive responses for several directions, shape ``(N, len(thetas))``."""
    pos = np.asarray(pos, dtype=float)
    rho = pos[:, 0, None] * (np.sin(thetas) * np.cos(phis)) + pos[:, 1, None] * np.cos(thetas)
    return np.exp(2j * np.pi / geom.wavelength * rho)


def user_channel(k, scenario, geom):
    """Multipath channel of user ``k`` (0-based) as an ``M``-vector."""
    gains = np.asarray(scenario.path_gains[k], dtype=complex)
    at = transmit_steering(scenario.path_elevations[k], scenario.path_azimuths[k], geom)
    return gains @ at / np.sqrt(len(gains))


def effective_matrix(theta, phi, pos, geom):
    """Rank-one two-way response ``a_r a_t^T`` of shape ``(N, M)``."""
    return np.outer(receive_steering(theta, phi, pos, geom),
                    transmit_steering(theta, phi, geom))


@dataclass(frozen=True)
class Channels:
    """Transmit-side responses of a scenario on a given array.

    Everything that depends on the scenario and the transmit UPA but not on the
    receive positions or the precoder; built once per solve.
    """
    scenario: Scenario
    geom: ArrayGeometry
    H: np.ndarray            # (M, K) user channels
    a_target: np.ndarray     # (M,)
    a_clutter: np.ndarray    # (M, I)

    @classmethod
    def build(cls, scenario, geom):
        m, k = geom.m, scenario.n_users
        H = np.zeros((m, k), dtype=complex)
        for j in range(k):
            H[:, j] = user_channel(j, scenario, geom)
        a0 = transmit_steering(scenario.target_elevation, scenario.target_azimuth, geom)
        ac = transmit_steering(np.asarray(scenario.clutter_elevations, dtype=float),
                               np.asarray(scenario.clutter_azimuths, dtype=float), geom).T
        return cls(scenario, geom, H, a0, ac.reshape(m, scenario.n_clutter))

    def target_rx(self, pos):
        s = self.scenario
        return receive_steering(s.target_elevation, s.target_azimuth, pos, self.geom)

    def clutter_rx(self, pos):
        s = self.scenario
        return receive_matrix(np.asarray(s.clutter_elevations, dtype=float),
                              np.asarray(s.clutter_azimuths, dtype=float), pos, self.geom)

    def clutter_tx_power(self, W):
        """``p_i = a_t_i^T W W^H a_t_i^*`` for every clutter ``i``."""
        return np.sum(np.abs(self.a_clutter.T @ W) ** 2, axis=1)

    def clutter_factor(self, W, pos):
        """``B`` with ``B B^H`` equal to the clutter covariance, shape ``(N, I)``."""
        amp = np.abs(np.asarray(self.scenario.clutter_gains)) * np.sqrt(self.clutter_tx_power(W))
        return self.clutter_rx(pos) * amp

    def inverse_j(self, W, pos):
        """Inverse of clutter-plus-noise covariance.

        Built from the SVD of the clutter square root so that directions
        holding only noise keep full relative accuracy even when the clutter
        power exceeds the noise floor by many orders of magnitude.
        """
        B = self.clutter_factor(W, pos)
        n = B.shape[0]
        sigma2 = self.scenario.radar_noise
        if B.shape[1] == 0:
            return np.eye(n) / sigma2
        U, s, _ = np.linalg.svd(B, full_matrices=True)
        ev = np.zeros(n)
        ev[:s.size] = s ** 2
        return (U / (ev + sigma2)) @ U.conj().T

    def scnr(self, W, pos):
        ar = self.target_rx(pos)
        Jinv = self.inverse_j(W, pos)
        c = np.real(ar.conj() @ Jinv @ ar)
        u = W.T @ self.a_target
        return abs(self.scenario.target_gain) ** 2 * c * np.real(np.vdot(u, u))

    def sinr(self, W):
        """SINR of every user, length ``K``."""
        G = np.abs(self.H.conj().T @ W) ** 2
        k = self.scenario.n_users
        sig = np.diag(G[:, :k])
        interference = G.sum(axis=1) - sig
        return sig / (interference + np.asarray(self.scenario.user_noise))


def clutter_plus_noise(W, pos, scenario, geom):
    """Covariance of clutter plus receiver noise, ``(N, N)`` Hermitian."""
    W = np.asarray(W, dtype=complex)
    pos = np.asarray(pos, dtype=float)
    n = pos.shape[0]
    J = scenario.radar_noise * np.eye(n, dtype=complex)
    for i in range(scenario.n_clutter):
        th = scenario.clutter_elevations[i]
        ph = scenario.clutter_azimuths[i]
        AW = effective_matrix(th, ph, pos, geom) @ W
        J += abs(scenario.clutter_gains[i]) ** 2 * AW @ AW.conj().T
    return J


def scnr(W, pos, scenario, geom):
    """Radar output SCNR for precoder ``W`` and receive positions ``pos``."""
    return Channels.build(scenario, geom).scnr(np.asarray(W, dtype=complex),
                                               np.asarray(pos, dtype=float))


def sinr(k, W, scenario, geom):
    """SINR of user ``k`` (0-based)."""
    W = np.asarray(W, dtype=complex)
    h = user_channel(k, scenario, geom)
    g = np.abs(h.conj() @ W) ** 2
    return g[k] / (g.sum() - g[k] + scenario.user_noise[k])


def grid_positions(geom, center=None):
    """Planar arrangement with spacing ``D``, centered in the region.

    Rows hold ``ceil(sqrt(N))`` antennas; the last row may be partial.
    """
    cols, rows = geom.grid_shape
    D = geom.min_distance
    idx = np.arange(geom.n_rx)
    xy = np.stack([idx % cols, idx // cols], axis=1).astype(float) * D
    xy -= np.array([(cols - 1) * D, (rows - 1) * D]) / 2
    if center is None:
        center = (geom.region_size / 2, geom.region_size / 2)
    return xy + np.asarray(center, dtype=float)


def min_pairwise_distance(pos):
    pos = np.asarray(pos, dtype=float)
    if pos.shape[0] < 2:
        return np.inf
    d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    return d[np.triu_indices(pos.shape[0], 1)].min()


def positions_feasible(pos, geom, rtol=1e-9, atol=1e-12):
    """Region membership and minimum spacing, with a small tolerance."""
    pos = np.asarray(pos, dtype=float)
    A = geom.region_size
    inside = np.all(pos >= -atol) and np.all(pos <= A + atol)
    return bool(inside and min_pairwise_distance(pos) >= geom.min_distance * (1 - rtol))
