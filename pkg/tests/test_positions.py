import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from fasisac.exceptions import DegenerateDeltaError, InfeasibleError
from fasisac.model import (ArrayGeometry, Channels, Scenario, effective_matrix, grid_positions,
                           min_pairwise_distance, positions_feasible)
from fasisac.positions import (constrained_update, distance_halfplanes, lipschitz_delta,
                               optimize_positions, position_surrogate, project_polygon,
                               q_coefficients, q_gradient, q_hessian, q_single,
                               unconstrained_update)
from fasisac.precoder import initial_precoder

from conftest import LAM, cn, geometry, random_positions, random_precoder, random_scenario


def _setup(rng, n=4, K=2, I=3, radar_noise=None, region_wl=2.0):
    g = geometry(n=n, region_wl=region_wl)
    sc = random_scenario(rng, K=K, I=I, radar_noise=radar_noise)
    ch = Channels.build(sc, g)
    W = random_precoder(rng, g.m, max(K, 1), sc.power_budget)
    return sc, g, ch, W, random_positions(rng, g)


def _trace_surrogate(pos, W, pos_v, sc, g):
    """Lower bound around ``pos_v`` in trace form, with an explicit inverse."""
    A_v = effective_matrix(sc.target_elevation, sc.target_azimuth, pos_v, g)
    A = effective_matrix(sc.target_elevation, sc.target_azimuth, pos, g)
    ch = Channels.build(sc, g)
    B_v = ch.clutter_factor(W, pos_v)
    Ji = np.linalg.inv(sc.radar_noise * np.eye(len(pos)) + B_v @ B_v.conj().T)
    R = W @ W.conj().T
    lin = np.trace(R @ A_v.conj().T @ Ji @ A)
    E = Ji @ A_v @ R @ A_v.conj().T @ Ji
    B = ch.clutter_factor(W, pos)
    J = sc.radar_noise * np.eye(len(pos)) + B @ B.conj().T
    return abs(sc.target_gain) ** 2 * np.real(2 * lin - np.trace(E @ J))


# ---- coefficients --------------------------------------------------------------

def test_coefficients_zero_precoder(rng):
    sc, g, ch, W, pos = _setup(rng)
    c = q_coefficients(np.zeros_like(W), pos, ch)
    assert np.all(c.b == 0) and np.all(c.p == 0) and np.all(c.E == 0)


def test_coefficients_clutter_free(rng):
    sc, g, ch, W, pos = _setup(rng, I=0, radar_noise=0.3)
    c = q_coefficients(W, pos, ch)
    assert c.p.size == 0
    A = effective_matrix(sc.target_elevation, sc.target_azimuth, pos, g)
    np.testing.assert_allclose(c.E, A @ W @ W.conj().T @ A.conj().T / 0.3 ** 2, rtol=1e-12)


def test_coefficients_scalar_by_hand():
    g = ArrayGeometry(1, 1, 1, 0.0, LAM / 2, LAM)
    w, s2, ac = 0.6 - 0.3j, 0.2, 0.5
    sc = Scenario((), (), (), 1.0, 0.4, 0.9, np.array([ac + 0j]), np.array([0.1]),
                  np.array([0.2]), np.zeros(0), s2, np.zeros(0), 1.0)
    ch = Channels.build(sc, g)
    c = q_coefficients(np.array([[w]]), np.zeros((1, 2)), ch)
    J = s2 + ac ** 2 * abs(w) ** 2
    assert c.b[0] == pytest.approx(abs(w) ** 2 / J)
    assert c.E[0, 0].real == pytest.approx(abs(w) ** 2 / J ** 2)
    assert c.p[0] == pytest.approx(abs(w) ** 2)


def test_coefficients_invariants(rng):
    for _ in range(10):
        sc, g, ch, W, pos = _setup(rng)
        c = q_coefficients(W, pos, ch)
        assert np.all(c.p >= 0)
        np.testing.assert_allclose(c.E, c.E.conj().T, rtol=0, atol=1e-12 * np.abs(c.E).max())
        assert np.all(np.diag(c.E).real >= 0)
        assert np.all(np.isfinite(c.E)) and np.all(np.isfinite(c.b))


# ---- surrogate -------------------------------------------------------------------

def test_surrogate_tangent(rng):
    for radar_noise in (None, 1e-2):
        for _ in range(10):
            sc, g, ch, W, pos = _setup(rng, radar_noise=radar_noise)
            c = q_coefficients(W, pos, ch)
            assert position_surrogate(pos, c) == pytest.approx(ch.scnr(W, pos), rel=1e-8)


def test_surrogate_matches_trace_form(rng):
    for _ in range(100):
        sc, g, ch, W, pos_v = _setup(rng, radar_noise=10 ** rng.uniform(-3, 0))
        pos = random_positions(rng, g)
        c = q_coefficients(W, pos_v, ch)
        ref = _trace_surrogate(pos, W, pos_v, sc, g)
        assert position_surrogate(pos, c) == pytest.approx(ref, rel=1e-9, abs=1e-9 * abs(
            ch.scnr(W, pos_v)))


def test_surrogate_minorizes(rng):
    for radar_noise in (None, 1e-2):
        for _ in range(5):
            sc, g, ch, W, pos_v = _setup(rng, radar_noise=radar_noise)
            c = q_coefficients(W, pos_v, ch)
            scale = max(1.0, ch.scnr(W, pos_v))
            for _ in range(100):
                pos = random_positions(rng, g)
                assert position_surrogate(pos, c) <= ch.scnr(W, pos) + 1e-8 * scale


# ---- single-antenna objective ---------------------------------------------------

def test_q_zero_when_nothing_depends_on_position(rng):
    sc, g, ch, W, pos = _setup(rng, I=0)
    c = q_coefficients(np.zeros_like(W), pos, ch)
    assert q_single(pos[0] + 0.01, 0, c, pos) == 0.0
    np.testing.assert_array_equal(q_gradient(pos[0], 0, c, pos), [0, 0])
    assert lipschitz_delta(0, c) == 0.0


def test_q_single_cosine(rng):
    """One antenna, no clutter, real b_n = 1: q(r) = 2 cos(k rho_0(r))."""
    sc, g, ch, W, pos = _setup(rng, n=1, I=0)
    c = q_coefficients(W, pos, ch)
    c = type(c)(**{**c.__dict__, "b": np.ones(1, complex)})
    k = 2 * np.pi / LAM
    for r in rng.uniform(0, 0.03, (20, 2)):
        assert q_single(r, 0, c, pos) == pytest.approx(2 * np.cos(k * r @ c.target_dir))
    assert q_single(np.zeros(2), 0, c, pos) == pytest.approx(2.0)


def test_q_matches_surrogate_difference(rng):
    """Moving one antenna changes the surrogate by |alpha_0|^2 times the change in q."""
    for _ in range(50):
        sc, g, ch, W, pos = _setup(rng, radar_noise=10 ** rng.uniform(-3, 0))
        c = q_coefficients(W, pos, ch)
        n = rng.integers(g.n_rx)
        moved = pos.copy()
        moved[n] = rng.uniform(0, g.region_size, 2)
        d_sur = position_surrogate(moved, c) - position_surrogate(pos, c)
        d_q = q_single(moved[n], n, c, pos) - q_single(pos[n], n, c, pos)
        scale = max(1.0, ch.scnr(W, pos))
        assert c.target_gain_sq * d_q == pytest.approx(d_sur, abs=1e-9 * scale)


def test_q_bounded(rng):
    for _ in range(10):
        sc, g, ch, W, pos = _setup(rng, radar_noise=1e-2)
        c = q_coefficients(W, pos, ch)
        for n in range(g.n_rx):
            col = np.delete(np.abs(c.E[:, n]), n)
            bound = 2 * abs(c.b[n]) + c.weights.sum() * (c.E[n, n].real + 2 * col.sum())
            vals = q_single(rng.uniform(0, g.region_size, (50, 2)), n, c, pos)
            assert np.all(np.abs(vals) <= bound * (1 + 1e-9))


def test_q_shifted_differs_by_constant(rng):
    sc, g, ch, W, pos = _setup(rng, radar_noise=1e-2)
    c = q_coefficients(W, pos, ch)
    r = rng.uniform(0, g.region_size, (10, 2))
    d = q_single(r, 1, c, pos) - q_single(r, 1, c, pos, shifted=True)
    np.testing.assert_allclose(d, d[0], rtol=1e-10)


def test_gradient_finite_difference(rng):
    for radar_noise in (None, 1e-2):
        sc, g, ch, W, pos = _setup(rng, radar_noise=radar_noise)
        c = q_coefficients(W, pos, ch)
        h = 1e-6 * LAM
        for _ in range(40):
            n = rng.integers(g.n_rx)
            r = rng.uniform(0, g.region_size, 2)
            fd = np.array([(q_single(r + h * e, n, c, pos, shifted=True)
                            - q_single(r - h * e, n, c, pos, shifted=True)) / (2 * h)
                           for e in np.eye(2)])
            grad = q_gradient(r, n, c, pos)
            assert np.linalg.norm(grad - fd) <= 1e-5 * np.linalg.norm(fd)


def test_gradient_zero_at_maximizer(rng):
    sc, g, ch, W, pos = _setup(rng, n=2, radar_noise=1e-2, region_wl=10)
    c = q_coefficients(W, pos, ch)
    f = lambda r: -q_single(r, 0, c, pos, shifted=True)
    res = minimize(f, pos[0], jac=lambda r: -q_gradient(r, 0, c, pos), method="BFGS",
                   options={"gtol": 1e-12})
    k = 2 * np.pi / LAM
    scale = k * (abs(c.b[0]) + c.u2 * c.weights.sum() * np.abs(c.g).max() ** 2 * 4)
    assert np.linalg.norm(q_gradient(res.x, 0, c, pos)) <= 1e-6 * scale


def test_hessian_finite_difference(rng):
    sc, g, ch, W, pos = _setup(rng, radar_noise=1e-2)
    c = q_coefficients(W, pos, ch)
    h = 1e-6 * LAM
    r = rng.uniform(0, g.region_size, 2)
    fd = np.array([(q_gradient(r + h * e, 2, c, pos) - q_gradient(r - h * e, 2, c, pos))
                   / (2 * h) for e in np.eye(2)])
    H = q_hessian(r, 2, c, pos)
    assert np.abs(H - fd).max() <= 1e-5 * np.abs(fd).max()


def test_delta_formula_example():
    k2 = (2 * np.pi / 0.015) ** 2
    c = type("C", (), {})()
    c.E, c.b, c.wavenumber = np.zeros((1, 1)), np.array([1.0 + 0j]), 2 * np.pi / 0.015
    c.weights = np.zeros(0)
    assert lipschitz_delta(0, c) == pytest.approx(16 * np.pi ** 2 / 0.015 ** 2)
    assert lipschitz_delta(0, c) == pytest.approx(7.0184e5, rel=1e-4)
    assert lipschitz_delta(0, c) == pytest.approx(4 * k2)


def test_delta_bounds_hessian(rng):
    for radar_noise in (None, 1e-2):
        for _ in range(5):
            sc, g, ch, W, pos = _setup(rng, radar_noise=radar_noise)
            c = q_coefficients(W, pos, ch)
            for n in range(g.n_rx):
                d = lipschitz_delta(n, c)
                H = q_hessian(rng.uniform(0, g.region_size, (50, 2)), n, c, pos)
                ev = np.linalg.eigvalsh(H)
                assert np.all(np.abs(ev) <= d * (1 + 1e-6))


def test_quadratic_minorant(rng):
    """q(r) >= q(r_c) + grad^T (r - r_c) - delta/2 ||r - r_c||^2."""
    for radar_noise in (None, 1e-2):
        sc, g, ch, W, pos = _setup(rng, radar_noise=radar_noise)
        c = q_coefficients(W, pos, ch)
        for n in range(g.n_rx):
            d = lipschitz_delta(n, c)
            r_c = pos[n]
            q_c = q_single(r_c, n, c, pos, shifted=True)
            gr = q_gradient(r_c, n, c, pos)
            r = r_c + rng.uniform(-LAM, LAM, (250, 2))
            lhs = q_single(r, n, c, pos, shifted=True)
            rhs = q_c + (r - r_c) @ gr - d / 2 * np.sum((r - r_c) ** 2, axis=1)
            scale = max(1.0, abs(ch.scnr(W, pos)) / c.target_gain_sq)
            assert np.all(lhs >= rhs - 1e-8 * scale)


# ---- updates ------------------------------------------------------------------------

def test_unconstrained_update_examples(rng):
    r = np.array([0.3, 0.2])
    np.testing.assert_array_equal(unconstrained_update(r, np.zeros(2), 2.0), r)
    np.testing.assert_allclose(unconstrained_update(r, np.array([2.0, 0.0]), 2.0), r + [1, 0])
    for _ in range(20):
        gr, d = rng.standard_normal(2), rng.uniform(0.1, 10)
        z = unconstrained_update(r, gr, d)
        np.testing.assert_allclose(gr - d * (z - r), 0, atol=1e-12)


def test_unconstrained_update_degenerate():
    with pytest.raises(DegenerateDeltaError):
        unconstrained_update(np.zeros(2), np.ones(2), 0.0)


def test_halfplanes_are_inner_approximations(rng):
    D = 0.5
    for _ in range(100):
        others = rng.uniform(-2, 2, (3, 2))
        r_c = rng.uniform(-2, 2, 2)
        if np.linalg.norm(r_c - others, axis=1).min() < D:
            continue
        a, beta = distance_halfplanes(r_c, others, D)
        np.testing.assert_allclose(a @ r_c - beta, np.linalg.norm(r_c - others, axis=1) - D,
                                   atol=1e-12)
        r = rng.uniform(-3, 3, (200, 2))
        inside = np.all(r @ a.T >= beta, axis=1)
        dist = np.linalg.norm(r[:, None] - others[None], axis=-1).min(axis=1)
        assert np.all(dist[inside] >= D - 1e-12)


def test_project_polygon_one_active_halfplane():
    # box [0, 1]^2 and x + y >= 1.5; the point (0.2, 0.3) projects onto the line
    a = np.array([[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1]]) / np.array(
        [1, 1, 1, 1, np.sqrt(2)])[:, None]
    beta = np.array([0, -1, 0, -1, 1.5 / np.sqrt(2)])
    np.testing.assert_allclose(project_polygon([0.2, 0.3], a, beta), [0.7, 0.8], atol=1e-12)
    np.testing.assert_allclose(project_polygon([0.9, 0.9], a, beta), [0.9, 0.9])
    # a vertex: (2, 0) goes to the corner where x <= 1 meets x + y >= 1.5
    np.testing.assert_allclose(project_polygon([2, 0], a, beta), [1, 0.5], atol=1e-12)


def test_project_polygon_empty():
    a = np.array([[1.0, 0.0], [-1.0, 0.0]])
    with pytest.raises(InfeasibleError):
        project_polygon([0, 0], a, np.array([1.0, 0.0]))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2),
       st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 0.5)),
                min_size=1, max_size=4))
def test_project_polygon_matches_scipy(z, planes):
    a = np.array([p[:2] for p in planes], dtype=float)
    if np.any(np.linalg.norm(a, axis=1) < 0.1):
        return
    a = np.vstack([a, np.eye(2), -np.eye(2)])
    beta = np.concatenate([[p[2] for p in planes], [-2, -2, -2, -2]])
    feasible = minimize(lambda x: 0.0, np.zeros(2), method="SLSQP", constraints=[
        {"type": "ineq", "fun": lambda x: a @ x - beta}])
    if not (feasible.success and np.all(a @ feasible.x >= beta - 1e-9)):
        return
    z = np.array(z)
    try:
        p = project_polygon(z, a, beta)
    except InfeasibleError:
        return  # degenerate (zero-area) sets may be rejected at the tolerance
    ref = minimize(lambda x: np.sum((x - z) ** 2), feasible.x, jac=lambda x: 2 * (x - z),
                   method="SLSQP", constraints=[{"type": "ineq", "fun": lambda x: a @ x - beta,
                                                 "jac": lambda x: a}],
                   options={"ftol": 1e-15, "maxiter": 500})
    if not ref.success:
        return  # the reference gave up; nothing to compare against
    assert np.sum((p - z) ** 2) <= np.sum((ref.x - z) ** 2) + 1e-8
    assert np.all(a @ p >= beta - 1e-9)


def test_constrained_update_examples():
    g = ArrayGeometry(1, 1, 2, 0.1, 0.02, LAM)
    others = np.array([[0.05, 0.05]])
    r_c = np.array([0.08, 0.05])
    # unconstrained optimum already feasible
    out = constrained_update(r_c, np.array([0.0, 0.01]), 1.0, others, g)
    np.testing.assert_allclose(out, unconstrained_update(r_c, [0.0, 0.01], 1.0))
    np.testing.assert_allclose(constrained_update(r_c, np.zeros(2), 1.0, others, g), r_c)
    # pushing toward the other antenna stops at the linearized spacing line x = 0.07
    out = constrained_update(r_c, np.array([-0.03, 0.004]), 1.0, others, g)
    np.testing.assert_allclose(out, [0.07, 0.054], atol=1e-12)
    # pushing out of the region clips to the box edge
    out = constrained_update(r_c, np.array([0.05, 0.0]), 1.0, others, g)
    np.testing.assert_allclose(out, [0.1, 0.05], atol=1e-12)


def test_constrained_update_keeps_true_spacing(rng):
    g = geometry(n=5, region_wl=3)
    for _ in range(100):
        pos = random_positions(rng, g)
        n = rng.integers(5)
        others = np.delete(pos, n, axis=0)
        out = constrained_update(pos[n], rng.standard_normal(2), rng.uniform(1, 100), others, g)
        new = pos.copy()
        new[n] = out
        assert positions_feasible(new, g, rtol=1e-9, atol=1e-12)


# ---- outer loop -----------------------------------------------------------------------

def test_optimize_positions_single_cosine(rng):
    """One antenna, no clutter, moderate noise: q is a single cosine and the
    loop ends where the target phase of the bound is aligned."""
    g = geometry(n=1, region_wl=2.0)
    sc = random_scenario(rng, K=1, I=0, radar_noise=1.0)
    ch = Channels.build(sc, g)
    W = initial_precoder(ch)
    start = np.array([[0.01, 0.012]])
    pos, tr = optimize_positions(W, start, ch)
    c = q_coefficients(W, start, ch)
    # with one antenna and no clutter the SCNR does not depend on position
    assert tr.scnr[-1] == pytest.approx(tr.scnr[0], rel=1e-12)
    assert q_single(pos[0], 0, c, pos) == pytest.approx(2 * abs(c.b[0]) - c.E[0, 0].real * 0,
                                                        rel=1e-9)


def test_optimize_positions_monotone_and_feasible(rng):
    for radar_noise in (None, 1e-2):
        for _ in range(3):
            sc, g, ch, W, pos = _setup(rng, radar_noise=radar_noise)
            out, tr = optimize_positions(W, pos, ch)
            s = np.array(tr.scnr)
            assert np.all(np.diff(s) >= -1e-9 * s.max())
            assert positions_feasible(out, g, rtol=1e-9, atol=1e-12)
            for hist in tr.q:
                h = np.array(hist)
                assert np.all(np.diff(h) >= -1e-9 * max(1.0, np.abs(h).max()))


def test_optimize_positions_moves_in_moderate_noise(rng):
    sc, g, ch, W, pos = _setup(rng, radar_noise=1e-1)
    out, tr = optimize_positions(W, pos, ch, max_outer=20)
    assert tr.scnr[-1] > tr.scnr[0]
    assert not np.allclose(out, pos)


def test_optimize_positions_eps_inf(rng):
    sc, g, ch, W, pos = _setup(rng, radar_noise=1e-1)
    _, tr = optimize_positions(W, pos, ch, eps=np.inf, eps_inner=1e-4)
    assert tr.outer_iterations == 1


def test_optimize_positions_at_local_optimum(rng):
    # one antenna without clutter: every position is optimal
    g = geometry(n=1)
    sc = random_scenario(rng, K=1, I=0, radar_noise=1e-1)
    ch = Channels.build(sc, g)
    W = initial_precoder(ch)
    start = np.array([[0.011, 0.004]])
    out, tr = optimize_positions(W, start, ch)
    assert tr.scnr[-1] == pytest.approx(tr.scnr[0], rel=1e-12)
    # after many passes a further pass gains less than the threshold
    sc, g, ch, W, pos = _setup(rng, radar_noise=1e-1)
    opt, _ = optimize_positions(W, pos, ch, max_outer=100)
    _, tr2 = optimize_positions(W, opt, ch, max_outer=1)
    assert tr2.scnr[-1] <= tr2.scnr[0] * (1 + 1e-3)


def test_optimize_positions_grid_start(rng):
    g = geometry()
    sc = random_scenario(rng)
    ch = Channels.build(sc, g)
    W = initial_precoder(ch)
    pos, tr = optimize_positions(W, grid_positions(g), ch)
    assert min_pairwise_distance(pos) >= g.min_distance * (1 - 1e-9)
