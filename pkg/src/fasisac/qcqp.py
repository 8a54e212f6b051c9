"""
Dense log-barrier interior-point solver for a ball-constrained concave QP
with extra "subspace ball" constraints.

Problem form (real variables)::

    minimize    1/2 ||L^T x||^2 + q^T x
    subject to  ||x||^2 <= R^2
                ||F_j^T x + d_j||^2 <= rho_j,   j = 1..K

The objective Hessian is passed as its factor ``L`` and every ``F_j`` has
orthonormal columns.
This is exactly the shape of the convexified precoder problem: one total
power ball plus one SINR constraint per user, each acting on the few
directions spanned by that user's channel.

Near the optimum the SINR constraints are tight at the scale of the receiver
noise and the objective is steep along the clutter directions, which puts
curvature many orders of magnitude above the rest of the Hessian into
low-rank subspaces. Newton steps are therefore solved in
augmented form::

    [ B    V ] [dx]   [-grad]
    [ V^T -E ] [ w] = [  0  ]

where all low-rank curvature is ``V E^-1 V^T`` and ``B`` is diagonal. The
augmented matrix stays well conditioned as ``E -> 0``; without a slack
variable it is reduced to the small capacitance system in ``w``.

When an SINR set is tiny next to the power ball the barrier runs out of
resolution; :func:`solve_qcqp_dual` runs Newton's method on the Lagrange
dual instead. Both solvers work in the span of ``L``, ``q``, the start point
and the ``F_j`` whenever that span is smaller than the full space.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import nnls

from .exceptions import InfeasibleError

__all__ = ["SubspaceBall", "QcqpResult", "solve_qcqp", "solve_qcqp_dual"]


@dataclass(frozen=True)
class SubspaceBall:
    """``||F^T x + d||^2 <= rho``; ``F`` is ``(n, k)`` with orthonormal columns."""
    F: np.ndarray
    d: np.ndarray
    rho: float

    def value(self, x):
        z = self.F.T @ x + self.d
        return z @ z - self.rho


@dataclass
class QcqpResult:
    x: np.ndarray
    objective: float        # 1/2 ||L^T x||^2 + q^T x
    kkt_residual: float
    duality_gap: float
    iterations: int         # Newton steps, phase I included
    converged: bool
    multipliers: np.ndarray  # ball first, then one per subspace constraint


class _Barrier:
    """``t f0(y) - sum log(-c_j(y))``; with ``slack`` every constraint is ``c_j(x) - s``."""

    def __init__(self, L, q, radius2, cons, n, slack=False):
        self.q, self.R2, self.cons = q, radius2, cons
        self.n, self.slack = n, slack
        self.L = L
        # orthonormal range of L so the objective block never has dependent columns
        U, sv, _ = np.linalg.svd(L, full_matrices=False)
        keep = sv > 1e-13 * sv.max() if sv.size else np.zeros(0, bool)
        self.U, self.sv2 = U[:, keep], sv[keep] ** 2

    def f0_grad(self, y):
        return self.L @ (self.L.T @ y) + self.q

    def _pad(self, v, s_entry):
        return np.append(v, s_entry) if self.slack else v

    def constraints(self, y):
        """Values, gradients and subspace coordinates of every constraint."""
        n = self.n
        x = y[:n]
        s = y[n] if self.slack else 0.0
        c = [x @ x - self.R2 - s]
        G = [self._pad(2 * x, -1.0)]
        Z = []
        for con in self.cons:
            z = con.F.T @ x + con.d
            c.append(z @ z - con.rho - s)
            G.append(self._pad(2 * con.F @ z, -1.0))
            Z.append(z)
        return np.array(c), np.array(G), Z

    def direction(self, t, y):
        n, N = self.n, y.size
        c, G, Z = self.constraints(y)
        g0 = self.f0_grad(y)
        grad = t * g0 + (-1.0 / c) @ G
        Bd = np.zeros(N)
        Bd[:n] = 2.0 / -c[0]
        Uy = np.vstack([self.U, np.zeros((N - self.U.shape[0], self.U.shape[1]))])
        Vs = [Uy, G[0][:, None]]
        Es = [np.diag(1.0 / (t * self.sv2)), np.array([[c[0] ** 2]])]
        for j, (con, z) in enumerate(zip(self.cons, Z), start=1):
            cj = c[j]
            if self.slack:
                Fy = np.vstack([con.F, np.zeros((1, con.F.shape[1]))])
                Vs.append(np.column_stack([Fy, G[j]]))
                Es.append(np.diag(np.append(np.full(con.F.shape[1], -cj / 2), cj * cj)))
            else:
                # F (2/(-c) I + 4 z z^T / c^2) F^T, inverted by Sherman-Morrison
                Vs.append(con.F)
                Es.append((-cj / 2) * (np.eye(z.size) - np.outer(z, z) * (2 / (2 * (z @ z) - cj))))
        V = np.hstack(Vs)
        r = V.shape[1]
        E = np.zeros((r, r))
        k = 0
        for Eb in Es:
            E[k:k + Eb.shape[0], k:k + Eb.shape[0]] = Eb
            k += Eb.shape[0]
        if not self.slack:
            # capacitance system: (V^T B^-1 V + E) w = -V^T B^-1 grad
            Binv = 1.0 / Bd
            C = (V.T * Binv) @ V + E
            w = np.linalg.solve(C, -(V.T @ (Binv * grad)))
            dy = Binv * (-grad - V @ w)
        else:
            K = np.zeros((N + r, N + r))
            K[np.arange(N), np.arange(N)] = Bd
            K[:N, N:] = V
            K[N:, :N] = V.T
            K[N:, N:] = -E
            dy = np.linalg.solve(K, np.concatenate([-grad, np.zeros(r)]))[:N]
        return dy, grad, g0, c, G

    def curvature(self, dy):
        """Second-order coefficients of every constraint along ``dy``."""
        dx = dy[:self.n]
        out = [dx @ dx]
        for con in self.cons:
            w = con.F.T @ dx
            out.append(w @ w)
        return np.array(out)

    def center(self, t, y, max_newton, newton_tol, stop=None, obj_tol=0.0):
        """Newton's method at fixed ``t``.

        Returns ``(y, steps, flag)`` where ``flag`` is "stop" when ``stop(y)``
        fired, "stall" when no step could be taken at working precision and
        None otherwise.
        """
        steps = 0
        for _ in range(max_newton):
            dy, grad, g0, c, G = self.direction(t, y)
            lam2 = -grad @ dy
            steps += 1
            if not np.isfinite(lam2):
                return y, steps, "stall"
            # newton_tol is in barrier units; the second bound in objective units
            if lam2 / 2 <= max(newton_tol, obj_tol * t):
                break
            dc = G @ dy
            d2c = self.curvature(dy)
            df0 = g0 @ dy
            Ld = self.L.T @ dy
            d2f0 = Ld @ Ld
            s = min(1.0, 0.99 * _max_step(c, dc, d2c))

            def phi_delta(s):
                cs = c + s * dc + s * s * d2c
                if np.any(cs >= 0):
                    return np.inf
                return t * (s * df0 + 0.5 * s * s * d2f0) - np.sum(np.log(cs / c))

            slope = grad @ dy
            while s > 1e-14:
                if phi_delta(s) <= 0.25 * s * slope:
                    # the expansion is exact up to round-off; confirm strict feasibility
                    if np.all(self.constraints(y + s * dy)[0] < 0):
                        break
                s *= 0.5
            if s <= 1e-14:
                return y, steps, "stall"
            y = y + s * dy
            if stop is not None and stop(y):
                return y, steps, "stop"
        return y, steps, None


def _objective(L, q, x):
    Lx = L.T @ x
    return 0.5 * Lx @ Lx + q @ x


def _max_step(c, dc, d2c):
    """Largest s in (0, 1] keeping every ``c + s dc + s^2 d2c`` negative."""
    s = 1.0
    for cj, bj, aj in zip(c, dc, d2c):
        if aj > 0:
            disc = np.sqrt(bj * bj - 4 * aj * cj)
            root = (-2 * cj) / (bj + disc) if bj >= 0 else (disc - bj) / (2 * aj)
        elif bj > 0:
            root = -cj / bj
        else:
            continue
        s = min(s, root)
    return s


def _phase_one(radius2, cons, x0, tol, max_newton):
    """Find a strictly feasible point by minimizing the largest violation."""
    n = x0.size
    m = len(cons) + 1
    vals = [x0 @ x0 - radius2] + [c.value(x0) for c in cons]
    top = max(vals)
    # constraint values live on the scale of their radii, which can be tiny
    scale = min([radius2] + [c.rho for c in cons if c.rho > 0])
    y = np.append(x0, top + max(scale, abs(top)))
    q = np.zeros(n + 1)
    q[-1] = 1.0
    bar = _Barrier(np.zeros((n + 1, 0)), q, radius2, cons, n, slack=True)

    def done(y):
        x = y[:n]
        return y[-1] < 0 and x @ x < radius2 and all(c.value(x) < 0 for c in cons)

    t, steps = 1.0, 0
    while True:
        y, k, flag = bar.center(t, y, max_newton, 1e-12, stop=done)
        steps += k
        if flag == "stop" or done(y):
            return y[:n], steps
        if m / t < tol * scale or flag == "stall":
            raise InfeasibleError(f"no strictly feasible point; least violation {y[-1]:.3e}")
        t *= 20.0


def _subspace(L, q, cons, x0):
    """Orthonormal basis holding every direction of the problem, or None.

    The objective, the ball and every constraint only see ``x`` through
    ``L``, ``q`` and the ``F_j``, so iterates started at ``x0`` never leave
    the span of these and ``x0``. Returns None when that span is the whole
    space.
    """
    n = q.size
    cols = [L, q[:, None], x0[:, None]] + [c.F for c in cons]
    if sum(c.shape[1] for c in cols) >= n:
        return None
    Q, _ = np.linalg.qr(np.hstack(cols))
    return Q


def _in_subspace(solver, L, q, radius2, cons, x0, **kw):
    x0 = np.asarray(x0, dtype=float)
    q = np.asarray(q, dtype=float)
    L = np.asarray(L, dtype=float).reshape(q.size, -1)
    cons = list(cons)
    Q = _subspace(L, q, cons, x0)
    if Q is None:
        return solver(L, q, radius2, cons, x0, **kw)
    sub = [SubspaceBall(Q.T @ c.F, c.d, c.rho) for c in cons]
    res = solver(Q.T @ L, Q.T @ q, radius2, sub, Q.T @ x0, **kw)
    # mapping back rounds; keep the result feasible in the full space
    res.x = _pull_back(x0, Q @ res.x, radius2, cons)
    res.objective = _objective(L, q, res.x)
    return res


def solve_qcqp(L, q, radius2, constraints, x0, tol=1e-10, mu=50.0, max_newton=50,
               max_outer=60, newton_tol=1e-9, kkt_tol=1e-6):
    """Solve the problem from ``x0`` by the barrier method.

    ``x0`` should be strictly feasible; if it is not, a phase-I problem is
    solved first and :class:`InfeasibleError` is raised when no strictly
    feasible point exists. The barrier weight ``t`` grows by ``mu`` until the
    duality gap ``m / t`` drops below ``tol``, or until Newton steps stall at
    the limit of floating-point resolution. ``converged`` requires the KKT
    residual to be at most ``kkt_tol`` as well.
    """
    return _in_subspace(_barrier_solve, L, q, radius2, constraints, x0, tol=tol, mu=mu,
                        max_newton=max_newton, max_outer=max_outer, newton_tol=newton_tol,
                        kkt_tol=kkt_tol)


def _barrier_solve(L, q, radius2, constraints, x0, tol, mu, max_newton, max_outer,
                   newton_tol, kkt_tol):
    x = np.asarray(x0, dtype=float).copy()
    cons = list(constraints)
    n = x.size
    m = len(cons) + 1
    steps = 0
    if x @ x >= radius2 or any(c.value(x) >= 0 for c in cons):
        x, steps = _phase_one(radius2, cons, x, tol, max_newton)

    L = np.asarray(L, dtype=float).reshape(n, -1)
    q = np.asarray(q, dtype=float)
    bar = _Barrier(L, q, radius2, cons, n)
    g0 = bar.f0_grad(x)
    scale = max(abs(_objective(L, q, x)), np.abs(g0).max() * np.sqrt(radius2), 1e-300)
    t = m / scale
    stalled = False
    for _ in range(max_outer):
        x, k, flag = bar.center(t, x, max_newton, newton_tol, obj_tol=1e-3 * tol)
        steps += k
        if flag == "stall":
            # barrier centers are no longer resolvable in floating point
            stalled = True
            break
        if m / t <= tol:
            break
        t *= mu

    c, G, _ = bar.constraints(x)
    g0 = bar.f0_grad(x)
    lam, kkt = _kkt(g0, c, G)
    gap = m / t
    converged = kkt <= kkt_tol and (gap <= tol or stalled)
    return QcqpResult(x, _objective(L, q, x), kkt, gap, steps, converged, lam)


def _dual_point(LLt, q, radius2, cons, blocks, theta):
    """Lagrangian minimizer, dual value, constraint values and gradients at ``theta``.

    ``blocks`` holds ``(F F^T, F d)`` per constraint. Returns None when the
    Lagrangian Hessian is not positive definite.
    """
    n = q.size
    M = LLt + 2 * theta[0] * np.eye(n)
    b = q.copy()
    for lam, (FFt, Fd) in zip(theta[1:], blocks):
        if lam:
            M += 2 * lam * FFt
            b += 2 * lam * Fd
    try:
        cf = cho_factor(M)
    except np.linalg.LinAlgError:
        return None
    x = -cho_solve(cf, b)
    c = [x @ x - radius2]
    G = [2 * x]
    for con in cons:
        z = con.F.T @ x + con.d
        c.append(z @ z - con.rho)
        G.append(2 * con.F @ z)
    c, G = np.array(c), np.array(G)
    f = 0.5 * x @ LLt @ x + q @ x
    return x, f + theta @ c, c, G, cf


def _pull_back(x0, x, radius2, cons):
    """Largest step from the feasible ``x0`` towards ``x`` that stays feasible."""
    def values(y):
        return np.array([y @ y - radius2] + [c.value(y) for c in cons])

    if np.all(values(x) <= 0):
        return x
    dx = x - x0
    tau = 1.0
    quads = [(dx @ dx, 2 * x0 @ dx, x0 @ x0 - radius2)]
    for con in cons:
        z0, dz = con.F.T @ x0 + con.d, con.F.T @ dx
        quads.append((dz @ dz, 2 * z0 @ dz, z0 @ z0 - con.rho))
    for (a, b, c0), c1 in zip(quads, values(x)):
        if c1 <= 0 or a <= 0:
            continue
        c0 = min(c0, 0.0)
        # larger root of a t^2 + b t + c0 = 0, in the cancellation-free form
        disc = np.sqrt(max(b * b - 4 * a * c0, 0.0))
        root = (-2 * c0) / (b + disc) if b > 0 else (disc - b) / (2 * a)
        tau = min(tau, max(root, 0.0))
    # the root itself may land a rounding error outside
    shrink = 4 * np.finfo(float).eps
    y = x0 + tau * dx
    while np.any(values(y) > 0) and shrink < 1.0:
        y = x0 + tau * (1 - shrink) * dx
        shrink *= 4
    return y


def solve_qcqp_dual(L, q, radius2, constraints, x0, tol=1e-10, max_iter=200, kkt_tol=1e-6,
                    theta0=None):
    """Solve the problem by projected Newton ascent on its Lagrange dual.

    The dual has one multiplier per constraint, the ball first. For fixed
    multipliers the Lagrangian minimizer solves ``M x = -b`` with
    ``M = L L^T + 2 mu I + 2 sum lam_j F_j F_j^T``; the dual gradient is the
    vector of constraint values there and the dual Hessian is ``-G M^-1 G^T``.
    Unlike a barrier, the curvature seen here is that of the multipliers, so
    constraints whose feasible set is tiny compared with ``||x||`` stay
    resolvable.

    ``x0`` must be feasible. The iteration stops once every constraint value
    is within ``tol`` of its own scale (or a step no longer changes the dual
    value); if round-off leaves the minimizer slightly outside the feasible
    set it is pulled back along the segment from ``x0``.
    """
    return _in_subspace(_dual_solve, L, q, radius2, constraints, x0, tol=tol,
                        max_iter=max_iter, kkt_tol=kkt_tol, theta0=theta0)


def _dual_solve(L, q, radius2, constraints, x0, tol, max_iter, kkt_tol, theta0):
    x0 = np.asarray(x0, dtype=float)
    q = np.asarray(q, dtype=float)
    cons = list(constraints)
    n = q.size
    L = np.asarray(L, dtype=float).reshape(n, -1)
    LLt = L @ L.T
    blocks = [(c.F @ c.F.T, c.F @ c.d) for c in cons]
    scale = np.array([radius2] + [c.rho if c.rho > 0 else max(c.d @ c.d, 1e-300)
                                  for c in cons])
    if theta0 is None:
        theta = np.zeros(len(cons) + 1)
        theta[0] = max(np.linalg.norm(q) / (2 * np.sqrt(radius2)), 1e-12)
    else:
        theta = np.maximum(np.asarray(theta0, dtype=float), 0.0)
    pt = _dual_point(LLt, q, radius2, cons, blocks, theta)
    while pt is None:
        theta[0] = max(2 * theta[0], 1e-12)
        pt = _dual_point(LLt, q, radius2, cons, blocks, theta)

    eps = np.finfo(float).eps
    dnorm = np.array([0.0] + [np.linalg.norm(c.d) for c in cons])

    def residual(theta, c):
        r = c / scale
        # at a zero multiplier only a violation counts
        return np.max(np.where(theta > 0, np.abs(r), np.maximum(r, 0.0)))

    def resolved(theta, x, c):
        # constraint values carry round-off of about eps (|x| + |d|) |z|
        xn = np.linalg.norm(x)
        zn = np.sqrt(np.maximum(c + np.append(radius2, [k.rho for k in cons]), 0.0))
        floor = 10 * eps * (xn + dnorm) * (zn + xn * (dnorm == 0)) / scale
        r = np.where(theta > 0, np.abs(c), np.maximum(c, 0.0)) / scale
        return np.all(r <= tol + floor)

    steps = 0
    best = []
    for steps in range(1, max_iter + 1):
        x, g, c, G, cf = pt
        if resolved(theta, x, c):
            break
        best.append(residual(theta, c))
        if len(best) > 10 and min(best[-10:]) > 0.5 * min(best[:-10]):
            break       # stagnating at the round-off floor
        free = (theta > 0) | (c > 0)
        H = G[free] @ cho_solve(cf, G[free].T)
        d = np.zeros_like(theta)
        try:
            d[free] = np.linalg.solve(H, c[free])
        except np.linalg.LinAlgError:
            d[free] = np.linalg.lstsq(H, c[free], rcond=None)[0]
        # far from the optimum the dual value decides; close to it the value
        # is flat to working precision and the constraint residual decides
        r0 = residual(theta, c)
        s, moved = 1.0, False
        while s > 1e-12:
            th = np.maximum(theta + s * d, 0.0)
            new = _dual_point(LLt, q, radius2, cons, blocks, th)
            if new is not None and (new[1] - g >= 1e-4 * (c @ (th - theta))
                                    or residual(th, new[2]) <= (1 - 1e-4 * s) * r0):
                theta, pt, moved = th, new, True
                break
            s *= 0.5
        if not moved:
            break

    x, g, c, G, _ = pt
    x = _pull_back(x0, x, radius2, cons)
    f = _objective(L, q, x)
    bar = _Barrier(L, q, radius2, cons, n)
    c, G, _ = bar.constraints(x)
    g0 = bar.f0_grad(x)
    ref = 1.0 + np.abs(g0).max()
    stat = np.abs(g0 + theta @ G).max()
    comp = np.abs(theta * c).max()
    kkt = max(stat, comp, np.maximum(c, 0).max()) / ref
    return QcqpResult(x, f, kkt, max(f - g, 0.0), steps, kkt <= kkt_tol, theta)


def _kkt(g0, c, G):
    """Multipliers and scaled KKT residual at a feasible point.

    Multipliers are fitted by nonnegative least squares on the stationarity
    condition; near-active constraints have values at round-off level, so
    recovering them from the barrier would divide noise by noise.
    """
    norms = np.linalg.norm(G, axis=1)
    norms[norms == 0] = 1.0
    mu, _ = nnls((G / norms[:, None]).T, -g0)
    lam = mu / norms
    ref = 1.0 + np.abs(g0).max()
    stat = np.abs(g0 + lam @ G).max()
    comp = np.abs(lam * c).max()
    return lam, max(stat, comp, np.maximum(c, 0).max()) / ref
