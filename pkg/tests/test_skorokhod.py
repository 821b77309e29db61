import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gskor import skorokhod
from gskor.constraints import make_band_pair, make_link_pair, make_rho_pair
from gskor.errors import GridMismatch
from gskor.path_core import SampledPath, make_grid


def band(grid, a, b):
    return make_band_pair(a, b, grid)


def check_invariants(s, sol, pair):
    assert np.array_equal(sol.x.values, s.values + sol.k.values)
    assert np.array_equal(sol.k.values, sol.k_r.values - sol.k_l.values)
    assert np.all(np.diff(sol.k_r.values) >= 0) and np.all(np.diff(sol.k_l.values) >= 0)
    assert sol.k_r.values[0] >= 0 and sol.k_l.values[0] >= 0
    assert skorokhod.containment_violation(sol.x.values, pair) <= skorokhod.OBSTACLE_TOL
    assert max(sol.flat_off) <= skorokhod.FLAT_OFF_TOL


def test_zero_input_inside_band():
    g = make_grid(1, 10)
    s = SampledPath.constant(g, 0.0)
    sol = skorokhod.solve(s, band(g, -1, 1))
    assert np.array_equal(sol.k.values, np.zeros(11)) and np.array_equal(sol.x.values, np.zeros(11))
    assert sol.flat_off == (0.0, 0.0)


def test_ramp_closed_form():
    g = make_grid(1, 1000)
    t = g.nodes
    s = SampledPath(g, 2 * t)
    pair = band(g, -1, 1)
    sol = skorokhod.solve(s, pair)
    assert np.max(np.abs(sol.k.values + np.maximum(2 * t - 1, 0))) <= 1e-12
    assert np.max(np.abs(sol.x.values - np.minimum(2 * t, 1))) <= 1e-12
    assert sol.flat_off[0] == 0.0 and sol.flat_off[1] <= 1e-12
    check_invariants(s, sol, pair)
    oracle = skorokhod.solve_oracle(s, pair)
    assert np.max(np.abs(oracle.x.values - sol.x.values)) <= 1e-12


def test_time_zero_jumps():
    g = make_grid(1, 10)
    s = SampledPath.constant(g, 0.0)
    up = skorokhod.solve(s, band(g, 1, 2))
    assert up.k.values[0] == 1 and np.array_equal(up.x.values, np.ones(11))
    assert up.k_r.values[0] == 1 and up.k_l.values[-1] == 0
    down = skorokhod.solve(s, band(g, -2, -1))
    assert down.k.values[0] == -1 and np.array_equal(down.x.values, -np.ones(11))
    assert down.k_l.values[0] == 1 and down.k_r.values[-1] == 0
    orc = skorokhod.solve_oracle(s, band(g, 1, 2))
    assert np.array_equal(orc.x.values, np.ones(11)) and orc.k_r.values[0] == 1


def test_oscillating_flat_off():
    g = make_grid(1, 2 ** 14)
    s = SampledPath(g, 2 * np.sin(2 * np.pi * g.nodes))
    pair = band(g, -1, 1)
    sol = skorokhod.solve(s, pair)
    check_invariants(s, sol, pair)
    # one pull of size 1 at the crest, then a push of size 2 through the trough
    assert sol.k_l.values[-1] == pytest.approx(1.0, abs=1e-12)
    assert sol.k_r.values[-1] == pytest.approx(2.0, abs=1e-12)


def test_oscillating_flat_off_nonlinear_constraints():
    g = make_grid(1, 2 ** 14)
    t = g.nodes
    s = SampledPath(g, 3 * np.sin(2 * np.pi * t) + t)
    pair = make_link_pair("cubic", SampledPath(g, -1 + 0.2 * t), SampledPath(g, 2 + 0 * t))
    sol = skorokhod.solve(s, pair)
    check_invariants(s, sol, pair)


def test_one_sided_sentinel_matches_classical_map():
    rng = np.random.default_rng(4)
    g = make_grid(1, 500)
    s = SampledPath(g, np.cumsum(rng.normal(0, 0.1, 501)))
    lower = SampledPath(g, -0.3 + 0.1 * np.sin(5 * g.nodes))
    pair = make_band_pair(lower, SampledPath.constant(g, 1e30))
    sol = skorokhod.solve(s, pair)
    classical = np.maximum.accumulate(np.maximum(lower.values - s.values, 0.0))
    assert np.max(np.abs(sol.k.values - classical)) <= 1e-12
    assert sol.k_l.values[-1] == 0
    assert np.max(np.abs(skorokhod.solve_oracle(s, pair).k.values - classical)) <= 1e-12


def test_wide_band_is_identity():
    rng = np.random.default_rng(5)
    g = make_grid(1, 300)
    s = SampledPath(g, np.cumsum(rng.normal(size=301)))
    sol = skorokhod.solve(s, band(g, -1e30, 1e30))
    assert np.array_equal(sol.x.values, s.values) and not np.any(sol.k.values)


def random_instance(rng, n):
    g = make_grid(1, n)
    gap = rng.uniform(0.2, 3)
    a = rng.uniform(-1, 1) + np.cumsum(rng.normal(0, 0.3 / np.sqrt(n), n + 1))
    b = a + gap + np.abs(np.cumsum(rng.normal(0, 0.3 / np.sqrt(n), n + 1)))
    s = rng.uniform(-3, 3) + np.cumsum(rng.normal(0, gap / np.sqrt(n), n + 1))
    return SampledPath(g, s), make_band_pair(SampledPath(g, a), SampledPath(g, b))


def test_randomized_oracle_equivalence():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        s, pair = random_instance(rng, int(rng.integers(1, 400)))
        a, b = skorokhod.solve(s, pair), skorokhod.solve_oracle(s, pair)
        assert np.max(np.abs(a.x.values - b.x.values)) <= skorokhod.ORACLE_TOL
        check_invariants(s, a, pair)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 200))
def test_solution_invariants_property(seed, n):
    s, pair = random_instance(np.random.default_rng(seed), n)
    sol = skorokhod.solve(s, pair)
    check_invariants(s, sol, pair)
    again = skorokhod.solve(s, pair)
    assert np.array_equal(sol.k.values, again.k.values)  # pathwise determinism


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-2, 2))
def test_stability_bound_property(seed, shift):
    rng = np.random.default_rng(seed)
    s, pair = random_instance(rng, 128)
    g = s.grid
    s2 = SampledPath(g, s.values + shift + np.cumsum(rng.normal(0, 0.01, 129)))
    da = np.cumsum(rng.normal(0, 0.02, 129))
    pair2 = make_band_pair(SampledPath(g, pair.lower.values + da), SampledPath(g, pair.upper.values + da))
    k1, k2 = skorokhod.solve(s, pair).k.values, skorokhod.solve(s2, pair2).k.values
    rhs = np.max(np.abs(s.values - s2.values)) + np.max(np.abs(da))
    assert np.max(np.abs(k1 - k2)) <= rhs + 1e-12


def test_constraint_monotonicity_band_example():
    g = make_grid(1, 2000)
    s = SampledPath(g, 1.5 * np.sin(6 * g.nodes) + g.nodes)
    wide = skorokhod.solve(s, band(g, -1, 1))
    narrow = skorokhod.solve(s, band(g, -0.5, 0.5))
    assert np.all(narrow.k_r.values >= wide.k_r.values) and np.all(narrow.k_l.values >= wide.k_l.values)


def test_input_monotonicity_nu_linear():
    g = make_grid(1, 1000)
    t = g.nodes
    s2 = 0.8 * np.sin(9 * t)
    pair = make_rho_pair(-0.6, 0.6, g)
    sol1 = skorokhod.solve(SampledPath(g, s2 + t), pair)
    sol2 = skorokhod.solve(SampledPath(g, s2), pair)
    assert np.all(sol1.k_r.values - 1e-12 <= sol2.k_r.values)
    assert np.all(sol2.k_r.values <= sol1.k_r.values + t + 1e-12)
    assert np.all(sol2.k_l.values - 1e-12 <= sol1.k_l.values)
    assert np.all(sol1.k_l.values <= sol2.k_l.values + t + 1e-12)


def test_flat_off_residual_detects_bad_decomposition():
    g = make_grid(1, 4)
    s = SampledPath.constant(g, 0.0)
    pair = band(g, -1, 1)
    sol = skorokhod.solve(s, pair)
    from gskor.path_core import MonotonePath
    bogus = skorokhod.SkorokhodSolution(sol.x, sol.k, MonotonePath(g, [0, 1, 1, 1, 1]),
                                        MonotonePath(g, [0, 1, 1, 1, 1]))
    assert skorokhod.flat_off_residuals(bogus, pair) == (1.0, 1.0)


def test_large_increment_warning(caplog):
    g = make_grid(1, 2)
    with caplog.at_level(logging.WARNING, logger="gskor.skorokhod"):
        skorokhod.solve(SampledPath(g, [0.0, 5.0, 0.0]), band(g, -1, 1))
    assert "half the obstacle gap" in caplog.text


def test_grid_mismatch():
    with pytest.raises(GridMismatch):
        skorokhod.solve(SampledPath.constant(make_grid(1, 3), 0), band(make_grid(1, 4), -1, 1))
