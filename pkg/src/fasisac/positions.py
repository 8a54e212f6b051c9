"""
Receive antenna position optimization for a fixed precoder.

The SCNR is bounded below around the current positions ``r_v`` by

    2 Re(b a_r(r)) - sum_i w_i a_r_i(r)^H E a_r_i(r) - sigma_0^2 tr(E)

with ``g = J_v^-1 a_r(r_v)``, ``b = ||W^T a_t||^2 g^H``, ``E = ||W^T a_t||^2 g g^H``
and clutter weights ``w_i = |alpha_i|^2 ||W^T a_t_i||^2``. The bound is
maximized one antenna at a time. Each single-antenna objective ``q`` is a sum
of cosines in the antenna position; it is maximized by minorizing it with a
quadratic whose curvature ``delta`` bounds the Hessian of ``q``, and
projecting the resulting step onto the region intersected with half-planes
that keep the antenna at least ``D`` away from every other antenna.
"""
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .exceptions import DegenerateDeltaError, InfeasibleError
from .model import direction_gradient, positions_feasible

__all__ = [
    "QCoefficients", "PositionTrace",
    "q_coefficients", "q_single", "q_gradient", "q_hessian", "lipschitz_delta",
    "position_surrogate", "unconstrained_update", "constrained_update",
    "project_polygon", "distance_halfplanes", "optimize_positions",
]

TINY_DELTA = 1e-300


@dataclass(frozen=True)
class QCoefficients:
    """Expansion of the SCNR lower bound in the receive positions.

    ``b``, ``E`` and the clutter weights are frozen at ``pos_v``; the
    single-antenna objectives are evaluated against whatever the other
    antennas' current positions are.
    """
    b: np.ndarray           # (N,) complex
    p: np.ndarray           # (I,) transmit power toward each clutter
    E: np.ndarray           # (N, N) Hermitian PSD
    alpha_sq: np.ndarray    # (I,) |alpha_i|^2
    pos_v: np.ndarray       # (N, 2) expansion positions
    target_dir: np.ndarray  # (2,) gradient of the target path difference
    clutter_dirs: np.ndarray  # (I, 2)
    wavenumber: float       # 2 pi / lambda
    target_gain_sq: float   # |alpha_0|^2, used only to report SCNR units
    noise: float            # sigma_0^2
    g: np.ndarray           # (N,) J_v^-1 a_r(pos_v); E = u2 g g^H
    u2: float               # ||W^T a_t||^2

    @property
    def weights(self):
        """``|alpha_i|^2 p_i``."""
        return self.alpha_sq * self.p


def q_coefficients(W, pos_v, ch):
    """Expansion coefficients at positions ``pos_v`` for precoder ``W``."""
    s = ch.scenario
    W = np.asarray(W, dtype=complex)
    pos_v = np.asarray(pos_v, dtype=float)
    u = W.T @ ch.a_target
    u2 = float(np.real(np.vdot(u, u)))
    g = ch.inverse_j(W, pos_v) @ ch.target_rx(pos_v)
    E = u2 * np.outer(g, g.conj())
    E = (E + E.conj().T) / 2
    th = np.asarray(s.clutter_elevations, dtype=float)
    ph = np.asarray(s.clutter_azimuths, dtype=float)
    return QCoefficients(
        b=u2 * g.conj(),
        p=ch.clutter_tx_power(W),
        E=E,
        alpha_sq=np.abs(np.asarray(s.clutter_gains, dtype=complex)) ** 2,
        pos_v=pos_v.copy(),
        target_dir=direction_gradient(s.target_elevation, s.target_azimuth),
        clutter_dirs=direction_gradient(th, ph).T.reshape(-1, 2),
        wavenumber=2 * np.pi / ch.geom.wavelength,
        target_gain_sq=abs(s.target_gain) ** 2,
        noise=s.radar_noise,
        g=g,
        u2=u2,
    )


def position_surrogate(pos, coeffs):
    """Lower bound on the SCNR at positions ``pos`` (SCNR units)."""
    k = coeffs.wavenumber
    pos = np.asarray(pos, dtype=float)
    ar = np.exp(1j * k * pos @ coeffs.target_dir)
    val = 2 * np.real(coeffs.b @ ar)
    # a_i^H E a_i = u2 |g^H a_i|^2 without forming the huge entries of E
    y = coeffs.g.conj() @ np.exp(1j * k * pos @ coeffs.clutter_dirs.T)
    val -= coeffs.u2 * (coeffs.weights @ np.abs(y) ** 2
                        + coeffs.noise * np.real(np.vdot(coeffs.g, coeffs.g)))
    return coeffs.target_gain_sq * val


def _others(n, pos):
    return np.delete(np.asarray(pos, dtype=float), n, axis=0)


def _terms(r, n, coeffs, pos):
    """Target phase and clutter responses of antenna ``n`` at ``r``.

    With ``x_i = conj(g_n) exp(j k rho_i(r))`` and ``s_i`` the same sum over
    the other antennas, the clutter part of ``q`` is
    ``-u2 sum_i w_i (|s_i + x_i|^2 - |s_i|^2)``. Working with ``y = s + x``
    instead of the entries of ``E`` avoids cancelling terms that can be
    many orders of magnitude above the result.
    """
    k = coeffs.wavenumber
    r = np.asarray(r, dtype=float)
    t0 = np.angle(coeffs.b[n]) + k * (r @ coeffs.target_dir)
    gl = np.delete(coeffs.g, n)
    rl = _others(n, pos)
    s = gl.conj() @ np.exp(1j * k * rl @ coeffs.clutter_dirs.T)          # (I,)
    x = np.conj(coeffs.g[n]) * np.exp(1j * k * r @ coeffs.clutter_dirs.T)  # (..., I)
    return t0, s, x, s + x


def q_single(r, n, coeffs, pos, shifted=False):
    """Single-antenna objective of antenna ``n`` (0-based) at ``r``.

    ``2|b_n| cos(arg b_n + k rho_0(r)) - sum_i w_i (E_nn
    + 2 sum_{l != n} |E_ln| cos(arg E_ln + k (rho_i(r) - rho_i(r_l))))``

    ``pos`` supplies the positions of the other antennas; row ``n`` is
    ignored. ``r`` may be a batch of points with shape ``(..., 2)``.
    With ``shifted`` the constant ``u2 sum_i w_i |s_i|^2`` is dropped; the
    shifted value is exact to working precision, while the full value
    carries that constant, which may dwarf changes in ``q``.
    """
    t0, s, x, y = _terms(r, n, coeffs, pos)
    val = 2 * abs(coeffs.b[n]) * np.cos(t0) - coeffs.u2 * (np.abs(y) ** 2 @ coeffs.weights)
    if not shifted:
        val = val + coeffs.u2 * (np.abs(s) ** 2 @ coeffs.weights)
    return val


def q_gradient(r, n, coeffs, pos):
    """Gradient of :func:`q_single` with respect to ``r``."""
    k = coeffs.wavenumber
    t0, s, x, y = _terms(r, n, coeffs, pos)
    g = -2 * k * abs(coeffs.b[n]) * np.sin(t0)[..., None] * coeffs.target_dir
    c = 2 * k * coeffs.u2 * coeffs.weights * np.imag(y.conj() * x)      # (..., I)
    return g + c @ coeffs.clutter_dirs


def q_hessian(r, n, coeffs, pos):
    """Hessian of :func:`q_single`, shape ``(..., 2, 2)``."""
    k = coeffs.wavenumber
    t0, s, x, y = _terms(r, n, coeffs, pos)
    d0 = coeffs.target_dir
    H = (-2 * k * k * abs(coeffs.b[n]) * np.cos(t0))[..., None, None] * np.outer(d0, d0)
    c = 2 * k * k * coeffs.u2 * coeffs.weights * np.real(s.conj() * x)
    D = coeffs.clutter_dirs
    return H + np.einsum("...i,ia,ib->...ab", c, D, D)


def lipschitz_delta(n, coeffs):
    """Curvature bound ``delta_n`` with ``delta_n I >= |Hessian of q|``."""
    col = np.delete(np.abs(coeffs.E[:, n]), n)
    k = coeffs.wavenumber
    return 4 * k * k * (abs(coeffs.b[n]) + coeffs.weights.sum() * col.sum())


def unconstrained_update(r_c, grad, delta):
    """Maximizer of the quadratic minorant ``grad^T (r - r_c) - delta/2 ||r - r_c||^2``.

    Raises
    ------
    DegenerateDeltaError
        If ``delta`` is not positive, i.e. the objective does not depend on
        this antenna's position.
    """
    if not delta > TINY_DELTA:
        raise DegenerateDeltaError(f"curvature bound {delta!r} is not positive")
    return np.asarray(r_c, dtype=float) + np.asarray(grad, dtype=float) / delta


def distance_halfplanes(r_c, others, D):
    """Linearized spacing constraints ``a^T r >= beta`` around ``r_c``.

    Each row of ``a`` is the unit vector from another antenna toward
    ``r_c``; since ``||r - r_l|| >= a^T (r - r_l)``, the half-planes are inner
    approximations of the true spacing constraints.
    """
    r_c = np.asarray(r_c, dtype=float)
    others = np.asarray(others, dtype=float).reshape(-1, 2)
    diff = r_c - others
    dist = np.linalg.norm(diff, axis=1)
    if np.any(dist <= 0):
        raise InfeasibleError("antenna coincides with another antenna")
    a = diff / dist[:, None]
    return a, D + np.einsum("ij,ij->i", a, others)


def project_polygon(z, a, beta, tol=1e-12):
    """Euclidean projection of ``z`` onto ``{r : a r >= beta}`` in the plane.

    Exact active-set enumeration: the projection is either ``z`` itself, its
    projection onto one edge line, or a vertex formed by two constraints.
    Every candidate is checked for feasibility and the closest one is kept.

    Raises
    ------
    InfeasibleError
        If no candidate is feasible, i.e. the polygon is empty.
    """
    z = np.asarray(z, dtype=float)
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    beta = np.asarray(beta, dtype=float)
    scale = tol * (1.0 + np.abs(beta).max(initial=0.0) + np.abs(z).max())
    cands = [z]
    nrm2 = np.einsum("ij,ij->i", a, a)
    for j in range(len(a)):
        cands.append(z + (beta[j] - a[j] @ z) / nrm2[j] * a[j])
    for i, j in combinations(range(len(a)), 2):
        M = np.stack([a[i], a[j]])
        det = np.linalg.det(M)
        if abs(det) <= 1e-12 * np.sqrt(nrm2[i] * nrm2[j]):
            continue
        cands.append(np.linalg.solve(M, beta[[i, j]]))
    best, best_d = None, np.inf
    for c in cands:
        if np.all(a @ c >= beta - scale):
            d = np.sum((c - z) ** 2)
            if d < best_d:
                best, best_d = c, d
    if best is None:
        raise InfeasibleError("linearized feasible set is empty")
    return best


def _box(A):
    a = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    return a, np.array([0.0, -A, 0.0, -A])


def constrained_update(r_c, grad, delta, others, geom):
    """Maximize the quadratic minorant over the region and linearized spacing.

    The maximizer is the projection of the unconstrained step onto the
    polygon formed by the region and the half-planes of
    :func:`distance_halfplanes`.
    """
    z = unconstrained_update(r_c, grad, delta)
    ab, bb = _box(geom.region_size)
    others = np.asarray(others, dtype=float).reshape(-1, 2)
    if len(others):
        ad, bd = distance_halfplanes(r_c, others, geom.min_distance)
        ab, bb = np.vstack([ab, ad]), np.concatenate([bb, bd])
    r = project_polygon(z, ab, bb)
    return np.clip(r, 0.0, geom.region_size)


def _step_feasible(r, n, pos, geom):
    trial = np.array(pos, dtype=float)
    trial[n] = r
    return positions_feasible(trial, geom, rtol=0.0, atol=0.0)


@dataclass
class PositionTrace:
    scnr: list = field(default_factory=list)     # per outer pass, starts at the input
    q: list = field(default_factory=list)        # per (pass, antenna): q values of the inner loop
    inner_iterations: int = 0
    outer_iterations: int = 0
    hit_cap: bool = False


def _improve_antenna(n, pos, coeffs, geom, eps_inner, max_inner, ref):
    """Inner minorize-maximize loop for antenna ``n``; updates ``pos`` in place."""
    delta = lipschitz_delta(n, coeffs)
    r = pos[n].copy()
    qv = float(q_single(r, n, coeffs, pos, shifted=True))
    hist = [qv]
    steps = 0
    if not delta > TINY_DELTA:
        return hist, steps, False
    capped = True
    for _ in range(max_inner):
        steps += 1
        grad = q_gradient(r, n, coeffs, pos)
        cand = unconstrained_update(r, grad, delta)
        if not _step_feasible(cand, n, pos, geom):
            cand = constrained_update(r, grad, delta, _others(n, pos), geom)
        qn = float(q_single(cand, n, coeffs, pos, shifted=True))
        if qn < qv:
            # only round-off can make the minorant step lose ground
            capped = False
            break
        gain = qn - qv
        r, qv = cand, qn
        pos[n] = r
        hist.append(qv)
        if gain < eps_inner * ref:
            capped = False
            break
    return hist, steps, capped


def optimize_positions(W, pos_init, ch, eps=1e-4, eps_inner=None, max_outer=200,
                       max_inner=200, relative=True):
    """Improve the receive positions for a fixed precoder.

    Each outer pass re-expands the SCNR lower bound at the current positions,
    then sweeps the antennas in index order, running the single-antenna
    minorize-maximize loop until its gain drops below ``eps_inner``. The outer
    loop stops when the SCNR gain of a pass drops below ``eps``. Gains are
    relative to the current SCNR when ``relative`` is set.

    Returns the final positions and a :class:`PositionTrace`.
    """
    geom = ch.geom
    W = np.asarray(W, dtype=complex)
    pos = np.array(pos_init, dtype=float)
    eps_inner = eps if eps_inner is None else eps_inner
    cur = ch.scnr(W, pos)
    trace = PositionTrace(scnr=[cur])
    a2 = abs(ch.scenario.target_gain) ** 2
    if a2 == 0:
        return pos, trace
    for _ in range(max_outer):
        coeffs = q_coefficients(W, pos, ch)
        # q differences are in SCNR / |alpha_0|^2 units
        ref = cur / a2 if relative else 1.0 / a2
        new_pos = pos.copy()
        for n in range(geom.n_rx):
            hist, steps, capped = _improve_antenna(n, new_pos, coeffs, geom, eps_inner,
                                                   max_inner, ref)
            trace.q.append(hist)
            trace.inner_iterations += steps
            trace.hit_cap |= capped
        trace.outer_iterations += 1
        new = ch.scnr(W, new_pos)
        if new < cur:
            break
        done = new - cur < eps * (abs(cur) if relative else 1.0)
        pos, cur = new_pos, new
        trace.scnr.append(cur)
        if done:
            break
    else:
        trace.hit_cap = True
    return pos, trace
