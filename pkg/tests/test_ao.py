import numpy as np
import pytest

from fasisac.ao import (CONVERGED, INFEASIBLE, MAX_ITERATIONS, SolverConfig, check_constraints,
                        solve)
from fasisac.exceptions import ConfigError
from fasisac.model import grid_positions

from conftest import geometry, random_positions, random_scenario


def test_clutter_free_closed_form(rng):
    for _ in range(3):
        g = geometry()
        sc = random_scenario(rng, K=0, I=0, P0=rng.uniform(0.5, 2))
        W, pos, tr = solve(sc, g)
        bound = sc.power_budget * g.m * g.n_rx * abs(sc.target_gain) ** 2 / sc.radar_noise
        assert tr.status == CONVERGED
        assert tr.scnr[-1] == pytest.approx(bound, rel=1e-3)
        assert tr.scnr[-1] <= bound * (1 + 1e-9)


def test_single_outer_pass(rng):
    g = geometry()
    sc = random_scenario(rng)
    W, pos, tr = solve(sc, g, SolverConfig(max_outer=1))
    assert tr.iterations == 1
    assert len(tr.scnr) == 2
    assert tr.status in (CONVERGED, MAX_ITERATIONS)


def test_deterministic(rng):
    g = geometry()
    sc = random_scenario(rng)
    W1, p1, t1 = solve(sc, g)
    W2, p2, t2 = solve(sc, g)
    np.testing.assert_array_equal(W1, W2)
    np.testing.assert_array_equal(p1, p2)
    assert t1.scnr == t2.scnr and t1.path == t2.path and t1.status == t2.status


def test_trace_monotone_and_feasible(rng):
    for _ in range(3):
        g = geometry()
        sc = random_scenario(rng, K=2, I=4, L=20)
        W, pos, tr = solve(sc, g)
        path = np.array(tr.path)
        assert np.all(np.diff(path) >= -1e-9 * path.max())
        assert tr.status == CONVERGED
        assert check_constraints(W, pos, sc, g).ok()
        assert len(tr.sinr) == len(tr.power) == len(tr.min_distance) == len(tr.ms)
        assert all(m >= 0 for m in tr.ms)


def test_warm_start_never_loses(rng):
    g = geometry()
    sc = random_scenario(rng)
    W, pos, tr = solve(sc, g)
    W2, pos2, tr2 = solve(sc, g, W_init=W, pos_init=pos)
    assert tr2.scnr[-1] >= tr.scnr[-1] * (1 - 1e-9)


def test_infeasible_status(rng):
    g = geometry()
    sc = random_scenario(rng, K=2, noise=1.0, gamma=1e6)
    W, pos, tr = solve(sc, g)
    assert W is None and tr.status == INFEASIBLE and tr.message


def test_config_validation():
    with pytest.raises(ConfigError):
        SolverConfig(eps_outer=0)
    with pytest.raises(ConfigError):
        SolverConfig(max_inner=0)


# ---- constraint report ----------------------------------------------------------

def test_report_zero_precoder(rng):
    g = geometry()
    sc = random_scenario(rng, gamma=1.5)
    rep = check_constraints(np.zeros((g.m, 2)), grid_positions(g), sc, g)
    np.testing.assert_allclose(rep.sinr, [1.5, 1.5])
    assert rep.power < 0 and rep.region == 0
    assert not rep.ok()


def test_report_feasible_point(rng):
    g = geometry()
    sc = random_scenario(rng)
    W, pos, _ = solve(sc, g)
    rep = check_constraints(W, pos, sc, g)
    assert rep.power <= sc.power_budget * 1e-9
    assert np.all(rep.sinr <= sc.sinr_targets * 1e-6)
    assert np.all(rep.distance <= g.min_distance * 1e-9)
    assert rep.region == 0 and rep.ok()


def test_report_region_violation(rng):
    g = geometry()
    sc = random_scenario(rng)
    W, pos, _ = solve(sc, g)
    pos = pos.copy()
    pos[0, 0] = g.region_size + 1e-3
    rep = check_constraints(W, pos, sc, g)
    assert rep.region == pytest.approx(1e-3, rel=1e-9)
    assert not rep.ok()
    pos[0, 0] = -1e-3
    assert check_constraints(W, pos, sc, g).region == pytest.approx(1e-3, rel=1e-9)


def test_report_spacing_violation(rng):
    g = geometry()
    sc = random_scenario(rng)
    pos = random_positions(rng, g)
    pos[1] = pos[0] + [g.min_distance / 2, 0]
    rep = check_constraints(np.zeros((g.m, 2)), pos, sc, g)
    assert rep.distance.max() >= g.min_distance / 2 - 1e-15
