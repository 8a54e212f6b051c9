"""
Minorize-maximize optimization of the transmit precoder for fixed receive
antenna positions.

Each iteration replaces the SCNR by a concave lower bound that touches it at
the current precoder and replaces every SINR constraint by a convex inner
approximation. The resulting convex QCQP is solved with :mod:`fasisac.qcqp`.

Real lifting convention: a precoder ``W`` of shape ``(M, S)`` maps to the real
vector ``x = vec(W) / sqrt(P0)`` with columns stacked in order and the real
and imaginary parts of each entry interleaved (``Re w_11, Im w_11, Re w_21,
...``). In numpy this is ``W.T.reshape(-1).view(float)``.
"""
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InfeasibleError
from .model import Channels, effective_matrix
from .qcqp import SubspaceBall, solve_qcqp, solve_qcqp_dual

__all__ = [
    "PrecoderExpansion", "QcqpSolution", "PrecoderTrace",
    "expand_precoder", "surrogate_precoder_objective", "linearized_sinr_lhs",
    "solve_precoder_subproblem", "optimize_precoder", "initial_precoder",
]


def lift(W):
    return np.ascontiguousarray(np.asarray(W, dtype=complex).T).reshape(-1).view(np.float64)


def unlift(x, m):
    return np.ascontiguousarray(x).view(np.complex128).reshape(-1, m).T


def lift_hermitian(Q):
    """Real ``2n x 2n`` matrix with ``z^H Q z == lift(z)^T R lift(z)``."""
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    return np.kron(Q.real, np.eye(2)) + np.kron(Q.imag, rot)


def _row_lift(h):
    """Real ``(2M, 2)`` factor with ``lift(z) @ F == (Re, Im)(h^H z)``."""
    h = np.ascontiguousarray(h, dtype=complex)
    return np.stack([h.view(np.float64), (1j * h).view(np.float64)], axis=1)


@dataclass
class PrecoderExpansion:
    """Quantities of the SCNR lower bound expanded at ``W_p``.

    With ``A = a_r a_t^T`` the bound reduces to::

        |alpha_0|^2 [ 2 c Re(u_p^H u) - ||u_p||^2 (sum_i beta_i ||W^T a_t_i||^2
                                                   + sigma_0^2 ||g||^2) ]

    where ``u = W^T a_t``, ``g = J_p^{-1} a_r``, ``c = a_r^H g`` and
    ``beta_i = |alpha_i|^2 |g^H a_r_i|^2``.
    """
    W_p: np.ndarray
    pos: np.ndarray
    ch: Channels
    J_inv: np.ndarray
    g: np.ndarray
    c: float
    u_p: np.ndarray
    beta: np.ndarray

    @property
    def G(self):
        """``A^H J_p^{-1} A`` (M x M)."""
        at = self.ch.a_target
        return self.c * np.outer(at.conj(), at)

    def value(self, W):
        """Surrogate in SCNR units, computed from the reduced form."""
        s = self.ch.scenario
        u = W.T @ self.ch.a_target
        up2 = np.real(np.vdot(self.u_p, self.u_p))
        pc = np.sum(np.abs(self.ch.a_clutter.T @ W) ** 2, axis=1)
        quad = up2 * (self.beta @ pc + s.radar_noise * np.real(np.vdot(self.g, self.g)))
        return abs(s.target_gain) ** 2 * (2 * self.c * np.real(np.vdot(self.u_p, u)) - quad)

    def scnr_p(self):
        return abs(self.ch.scenario.target_gain) ** 2 * self.c * np.real(np.vdot(self.u_p, self.u_p))


def expand_precoder(W_p, pos, ch):
    W_p = np.asarray(W_p, dtype=complex)
    pos = np.asarray(pos, dtype=float)
    J_inv = ch.inverse_j(W_p, pos)
    ar = ch.target_rx(pos)
    g = J_inv @ ar
    c = float(np.real(np.vdot(ar, g)))
    beta = np.abs(np.asarray(ch.scenario.clutter_gains)) ** 2 * np.abs(g.conj() @ ch.clutter_rx(pos)) ** 2
    return PrecoderExpansion(W_p, pos, ch, J_inv, g, c, W_p.T @ ch.a_target, beta)


def surrogate_precoder_objective(W, exp):
    """Lower bound of the SCNR around ``exp.W_p``, evaluated in trace form.

    ``|alpha_0|^2 (2 Re tr(W_p^H A^H J_p^-1 A W)
                   - tr(J_p^-1 A W_p W_p^H A^H J_p^-1 J(W)))``
    """
    s, geom = exp.ch.scenario, exp.ch.geom
    W = np.asarray(W, dtype=complex)
    A = effective_matrix(s.target_elevation, s.target_azimuth, exp.pos, geom)
    lin = np.trace(exp.W_p.conj().T @ A.conj().T @ exp.J_inv @ A @ W)
    X = exp.J_inv @ A @ exp.W_p
    # tr(X X^H J) with J = sigma^2 I + B B^H, expanded so nothing cancels
    B = exp.ch.clutter_factor(W, exp.pos)
    quad = s.radar_noise * np.sum(np.abs(X) ** 2) + np.sum(np.abs(B.conj().T @ X) ** 2)
    return abs(s.target_gain) ** 2 * float(np.real(2 * lin - quad))


def linearized_sinr_lhs(k, W, W_p, h, gamma):
    """Affine minorant of ``(1 + 1/gamma) |h^H w_k|^2`` around ``w_k = W_p[:, k]``."""
    a = np.vdot(h, W_p[:, k])
    b = np.vdot(h, W[:, k])
    return (1 + 1 / gamma) * (2 * np.real(a * np.conj(b)) - abs(a) ** 2)


@dataclass
class QcqpSolution:
    W: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    converged: bool


def _subproblem(exp):
    """Normalized real QCQP ``(P, q, constraints, x_p, objective scale)``."""
    ch, s = exp.ch, exp.ch.scenario
    m, S, K = ch.geom.m, exp.W_p.shape[1], s.n_users
    P0 = s.power_budget
    a2 = abs(s.target_gain) ** 2
    scale = max(exp.scnr_p(), 1e-300)
    up2 = np.real(np.vdot(exp.u_p, exp.u_p))

    # objective: maximize 2 Re sum_k f_k^H w_k - sum_k w_k^H Q w_k
    # clutter penalty up2 sum_i beta_i |a_i^T w_k|^2 as 1/2 ||L^T x||^2
    w8 = np.sqrt(2 * P0 * a2 / scale * up2 * exp.beta)
    Lc = np.zeros((2 * m, 0))
    if s.n_clutter:
        Lc = np.hstack([_row_lift(a.conj()) * wi for a, wi in zip(ch.a_clutter.T, w8)])
    L = np.kron(np.eye(S), Lc)
    F = np.outer(ch.a_target.conj(), exp.c * exp.u_p)       # column k is f_k
    q = -2 * np.sqrt(P0) * a2 / scale * lift(F)

    # SINR of user k with y_j = h^H x_j, completing the square in y_k:
    # sum_{j != k} |y_j|^2 + |y_k - gam s_p|^2 <= gam (gam - 1) |s_p|^2 - noise
    cons = []
    x_p = lift(exp.W_p) / np.sqrt(P0)
    for k in range(K):
        h = ch.H[:, k]
        hn = np.linalg.norm(h)
        ht = h / hn
        gam = 1 + 1 / s.sinr_targets[k]
        sp = np.vdot(ht, exp.W_p[:, k]) / np.sqrt(P0)
        d = np.zeros(2 * S)
        d[2 * k], d[2 * k + 1] = -gam * sp.real, -gam * sp.imag
        rho = gam * (gam - 1) * abs(sp) ** 2 - s.user_noise[k] / (P0 * hn ** 2)
        cons.append(SubspaceBall(np.kron(np.eye(S), _row_lift(ht)), d, rho))
    return L, q, cons, x_p, scale


def solve_precoder_subproblem(exp, tol=1e-10):
    """Maximize the concave lower bound over the convexified feasible set.

    Raises
    ------
    InfeasibleError
        If ``exp.W_p`` uses more than the power budget (relative tolerance
        1e-9) or misses an SINR target (relative tolerance 1e-6).
    """
    L, q, cons, x_p, scale = _subproblem(exp)
    s = exp.ch.scenario
    over = x_p @ x_p - 1.0
    short = 1.0 - exp.ch.sinr(exp.W_p) / np.asarray(s.sinr_targets, dtype=float)
    if over > 1e-9 or (short.size and short.max() > 1e-6):
        raise InfeasibleError(f"expansion point is infeasible: power excess {over:.3e}, "
                              f"worst SINR shortfall {max(short, default=0.0):.3e}")
    if scale <= 1e-300:
        # zero sensing gain: bound is identically zero, nothing to improve
        return QcqpSolution(exp.W_p.copy(), 0.0, 0.0, 0, True)
    try:
        res = solve_qcqp(L, q, 1.0, cons, x_p, tol=tol)
    except InfeasibleError:
        # the point sits on the boundary of the convexified set within round-off
        res = None
    if res is None or not res.converged:
        # the barrier loses resolution when a constraint set is tiny next to
        # the power ball; the dual iteration does not
        alt = solve_qcqp_dual(L, q, 1.0, cons, x_p, tol=tol)
        if res is None or alt.objective < res.objective:
            res = alt
    W = unlift(res.x, exp.ch.geom.m) * np.sqrt(exp.ch.scenario.power_budget)
    return QcqpSolution(W, exp.value(W), res.kkt_residual, res.iterations, res.converged)


@dataclass
class PrecoderTrace:
    scnr: list = field(default_factory=list)
    kkt: list = field(default_factory=list)
    iterations: int = 0
    hit_cap: bool = False


def increase_below(old, new, eps, relative):
    ref = abs(old) if relative else 1.0
    return (new - old) < eps * ref


def optimize_precoder(W_init, pos, ch, eps=1e-4, max_iter=200, tol=1e-10, relative=True):
    """Repeat the MM step on ``W`` until the SCNR gain falls below ``eps``.

    Returns the final precoder and a :class:`PrecoderTrace` whose ``scnr``
    list starts with the SCNR of ``W_init``. A step that would lower the SCNR
    (possible only through round-off) is rejected and ends the loop.
    """
    W = np.asarray(W_init, dtype=complex)
    pos = np.asarray(pos, dtype=float)
    cur = ch.scnr(W, pos)
    trace = PrecoderTrace(scnr=[cur])
    for _ in range(max_iter):
        sol = solve_precoder_subproblem(expand_precoder(W, pos, ch), tol=tol)
        new = ch.scnr(sol.W, pos)
        trace.iterations += 1
        trace.kkt.append(sol.kkt_residual)
        if new < cur:
            break
        W, done = sol.W, increase_below(cur, new, eps, relative)
        cur = new
        trace.scnr.append(cur)
        if done:
            break
    else:
        trace.hit_cap = True
    return W, trace


def _zero_forcing(H):
    """``H (H^H H)^-1`` or None when the Gram matrix is badly conditioned."""
    m, k = H.shape
    if k > m:
        return None
    gram = H.conj().T @ H
    if np.linalg.cond(gram) > 1e10:
        return None
    return H @ np.linalg.inv(gram)


def _min_power_beams(H, gamma, noise, max_iter=2000, tol=1e-12):
    """Least-power precoder meeting every SINR target with equality.

    Uses the uplink-downlink duality fixed point on noise-normalized channels.
    Returns None if the iteration diverges (targets not jointly achievable).
    """
    m, k = H.shape
    Hn = H / np.sqrt(noise)
    lam = np.zeros(k)
    for _ in range(max_iter):
        C = np.eye(m) + (Hn * lam) @ Hn.conj().T
        Ci = np.linalg.inv(C)
        new = np.empty(k)
        for j in range(k):
            h = Hn[:, j]
            x = np.real(h.conj() @ Ci @ h)
            # h^H (C - lam_j h h^H)^-1 h by Sherman-Morrison
            new[j] = gamma[j] * (1 - lam[j] * x) / x
        if not np.all(np.isfinite(new)) or new.sum() > 1e30:
            return None
        done = np.abs(new - lam).max() <= tol * max(new.max(), 1e-300)
        lam = new
        if done:
            break
    else:
        return None
    C = np.eye(m) + (Hn * lam) @ Hn.conj().T
    U = np.linalg.solve(C, Hn)
    U /= np.linalg.norm(U, axis=0)
    G = np.abs(Hn.conj().T @ U) ** 2              # G[i, j] = |h_i^H u_j|^2
    Mx = -G.copy()
    Mx[np.diag_indices(k)] = np.diag(G) / gamma
    p = np.linalg.solve(Mx, np.ones(k))
    if np.any(p <= 0):
        return None
    return U * np.sqrt(p)


def initial_precoder(ch, sinr_margin=1e-2, power_margin=1e-3):
    """Strictly feasible starting precoder.

    Users get zero-forcing beams with just enough power to exceed their SINR
    target by ``sinr_margin``; the remaining power goes to the target
    direction projected away from every user channel and is spread evenly
    over the columns. When zero forcing is unavailable, matched filtering
    with uniform power is tried, then the least-power beamformer.

    Raises
    ------
    InfeasibleError
        If none of the constructions meets all SINR targets within the budget.
    """
    s = ch.scenario
    m, K = ch.geom.m, s.n_users
    P0 = s.power_budget * (1 - power_margin)
    at = ch.a_target.conj()
    if K == 0:
        return np.sqrt(P0 / m) * at[:, None]
    H = ch.H
    gamma = np.asarray(s.sinr_targets, dtype=float) * (1 + sinr_margin)
    noise = np.asarray(s.user_noise, dtype=float)

    V = _zero_forcing(H)
    if V is not None:
        amp = np.sqrt(gamma * noise)
        W = V * amp
        used = np.sum(np.abs(W) ** 2)
        if used < P0:
            v0 = at - V @ (H.conj().T @ at)
            n0 = np.linalg.norm(v0)
            if n0 > 1e-9 * np.linalg.norm(at):
                W = W + np.sqrt((P0 - used) / K) / n0 * v0[:, None]
            return W

    Wmf = H / np.linalg.norm(H, axis=0) * np.sqrt(P0 / K)
    if np.all(ch.sinr(Wmf) >= gamma):
        return Wmf

    Wmp = _min_power_beams(H, gamma, noise)
    if Wmp is not None and np.sum(np.abs(Wmp) ** 2) <= P0:
        return Wmp
    raise InfeasibleError("no precoder meets every SINR target within the power budget")
