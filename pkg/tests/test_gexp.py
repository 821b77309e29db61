import math

import numpy as np
import pytest

from gskor import rng
from gskor.errors import FunctionalError, InvalidArgument
from gskor.gexp import (FUNCTIONALS, ScenarioControl, VolatilityBounds, coarsen, family_sensitivity,
                        lower_expectation, per_path, quadratic_variation_bounds_check, scenario_family,
                        simulate_batch, simulate_path, sublinear_expectation)
from gskor.path_core import make_grid

BOUNDS = VolatilityBounds(0.25, 1.0)
G16 = make_grid(1.0, 16)
# mean of the positive part of a standard normal
POS_PART = 1 / math.sqrt(2 * math.pi)


def test_bounds_validation_and_generator():
    with pytest.raises(InvalidArgument):
        VolatilityBounds(1.0, 0.5)
    with pytest.raises(InvalidArgument):
        VolatilityBounds(-0.1, 0.5)
    VolatilityBounds(0.5, 0.5)
    assert BOUNDS.G(2.0) == 1.0 and BOUNDS.G(-2.0) == -0.25


def test_scenario_family_constant():
    assert [c.levels for c in scenario_family(BOUNDS, "constant", 2)] == [(0.25,), (1.0,)]
    assert [c.levels[0] for c in scenario_family(BOUNDS, "constant", 3)] == [0.25, 0.625, 1.0]
    with pytest.raises(InvalidArgument):
        scenario_family(BOUNDS, "constant", 1)
    with pytest.raises(InvalidArgument):
        scenario_family(BOUNDS, "mixed", 2)


def test_scenario_family_bang_bang():
    fam = scenario_family(BOUNDS, "bang-bang", switches=1)
    assert len(fam) == 2
    g = make_grid(1, 8)
    assert fam[0].rates(g).tolist() == [0.25] * 4 + [1.0] * 4
    assert fam[1].rates(g).tolist() == [1.0] * 4 + [0.25] * 4
    assert all(c.within(BOUNDS) for c in fam)


def test_control_validation():
    with pytest.raises(InvalidArgument):
        ScenarioControl((1.0, 2.0), ())
    with pytest.raises(InvalidArgument):
        ScenarioControl((1.0, 2.0), (1.5,))


def test_simulate_path_deterministic_qv():
    g = make_grid(2.0, 50)
    p = simulate_path(ScenarioControl.constant(1.0), g, (3, 0, 0))
    assert p.B.values[0] == 0 and p.QV.values[0] == 0
    assert p.QV.values[-1] == pytest.approx(2.0, abs=1e-14)
    assert np.allclose(p.dQV, 1.0 * g.dt, rtol=1e-12, atol=0)
    q = simulate_path(ScenarioControl.constant(1.0), g, (3, 0, 0))
    assert np.array_equal(p.B.values, q.B.values)


def test_realized_qv_mode():
    g = make_grid(1.0, 32)
    p = simulate_path(ScenarioControl.constant(0.5), g, (1, 2, 3), realized_qv=True)
    assert np.allclose(p.dQV, p.dB ** 2, atol=1e-15)


def test_standard_brownian_variance():
    g = make_grid(1.0, 8)
    b = simulate_batch(ScenarioControl.constant(1.0), g, 0, 0, range(100_000))
    var = np.var(b.B[:, -1], ddof=1)
    # stderr of a sample variance of N(0,1) is sqrt(2/(m-1))
    assert abs(var - 1.0) <= 3 * math.sqrt(2 / 99_999)


def test_substreams_independent_of_batching():
    g = make_grid(1.0, 40)
    full = simulate_batch(ScenarioControl.constant(1.0), g, 9, 2, range(10)).B
    part = simulate_batch(ScenarioControl.constant(1.0), g, 9, 2, [7, 3]).B
    assert np.array_equal(full[7], part[0]) and np.array_equal(full[3], part[1])
    other = simulate_batch(ScenarioControl.constant(1.0), g, 9, 3, range(10)).B
    assert not np.array_equal(full, other)


def test_normals_look_standard():
    z = rng.normals(5, 1, range(200), 500).ravel()
    assert abs(z.mean()) < 4 / math.sqrt(z.size)
    assert abs(z.var() - 1) < 0.02
    u = rng.uniforms(5, 1, range(10), 1000)
    assert u.min() > 0 and u.max() < 1


def test_coarsen():
    g = make_grid(1.0, 64)
    p = simulate_path(ScenarioControl.constant(0.5), g, (0, 0, 0))
    c = coarsen(p, 8)
    assert c.grid.n == 8 and np.array_equal(c.B.values, p.B.values[::8])
    assert np.array_equal(c.QV.values, p.QV.values[::8])
    r = coarsen(p, 8, realized_qv=True)
    assert np.allclose(r.dQV, r.dB ** 2)
    with pytest.raises(InvalidArgument):
        coarsen(p, 7)


def test_qv_bounds_check():
    g = make_grid(1.0, 64)
    fam = scenario_family(BOUNDS, "constant", 3) + scenario_family(BOUNDS, "bang-bang", switches=3)
    rep = quadratic_variation_bounds_check(fam, g, BOUNDS, paths=3)
    assert rep["ok"] and rep["checked"] == 15
    bad = quadratic_variation_bounds_check([ScenarioControl.constant(2.0)], g, BOUNDS)
    assert not bad["ok"]
    # a mixed control is strictly between the extremes once both rates have been used
    for ctrl in fam[3:]:
        p = simulate_path(ctrl, g, 0)
        inner = slice(17, 64)  # past the first switch at t = 1/4
        t = g.nodes[inner]
        assert np.all(p.QV.values[inner] > 0.25 * t) and np.all(p.QV.values[inner] < 1.0 * t)


def test_g_moments_terminal_square():
    fam = scenario_family(BOUNDS, "constant", 5)
    up = sublinear_expectation(FUNCTIONALS["terminal_sq"], fam, G16, 100_000, 0)
    assert abs(up.value - 1.0) <= 3 * up.stderrs[up.argmax]
    assert up.argmax == 4 and up.argmax_control.levels == (1.0,)
    assert up.stderrs[up.argmax] == pytest.approx(math.sqrt(2 / 1e5), rel=0.05)
    low, neg = lower_expectation(FUNCTIONALS["terminal_sq"], fam, G16, 100_000, 0)
    assert abs(low - 0.25) <= 3 * neg.stderrs[neg.argmax] and neg.argmax == 0


def test_terminal_mean_and_positive_part():
    fam = scenario_family(BOUNDS, "constant", 2)
    up = sublinear_expectation(FUNCTIONALS["terminal"], fam, G16, 50_000, 1)
    low, neg = lower_expectation(FUNCTIONALS["terminal"], fam, G16, 50_000, 1)
    assert abs(up.value) <= 3 * max(up.stderrs) and abs(low) <= 3 * max(neg.stderrs)
    pos = sublinear_expectation(FUNCTIONALS["terminal_pos"], fam, G16, 100_000, 2)
    assert abs(pos.value - POS_PART) <= 3 * pos.stderrs[pos.argmax]


def test_no_uncertainty_collapses():
    b = VolatilityBounds(0.5, 0.5)
    fam = scenario_family(b, "constant", 2)
    up = sublinear_expectation(FUNCTIONALS["qv_terminal"], fam, G16, 10, 0)
    low, _ = lower_expectation(FUNCTIONALS["qv_terminal"], fam, G16, 10, 0)
    assert up.value == pytest.approx(0.5, abs=1e-14) and low == pytest.approx(0.5, abs=1e-14)


def test_sublinearity_invariants():
    fam = scenario_family(BOUNDS, "bang-bang", switches=2)
    fn = FUNCTIONALS["running_max"]
    up = sublinear_expectation(fn, fam, G16, 2000, 4)
    low, _ = lower_expectation(fn, fam, G16, 2000, 4)
    assert up.value >= low
    bigger = sublinear_expectation(fn, fam + scenario_family(BOUNDS, "constant", 3), G16, 2000, 4)
    assert bigger.value >= up.value
    scaled = sublinear_expectation(lambda b: 3.0 * fn(b), fam, G16, 2000, 4)
    assert scaled.value == pytest.approx(3 * up.value, rel=1e-14) and scaled.argmax == up.argmax


def test_estimate_independent_of_batching_and_threads():
    fam = scenario_family(BOUNDS, "constant", 3)
    a = sublinear_expectation(FUNCTIONALS["terminal_sq"], fam, G16, 5000, 7)
    b = sublinear_expectation(FUNCTIONALS["terminal_sq"], fam, G16, 5000, 7, batch_size=777, threads=3)
    assert a.means == b.means and a.stderrs == b.stderrs


def test_per_path_adapter_matches_vectorized():
    fam = scenario_family(BOUNDS, "constant", 2)
    a = sublinear_expectation(per_path(lambda p: p.B.values[-1] ** 2), fam, G16, 300, 1)
    b = sublinear_expectation(FUNCTIONALS["terminal_sq"], fam, G16, 300, 1)
    assert np.allclose(a.means, b.means, rtol=1e-14)


def test_functional_errors_carry_coordinates():
    fam = scenario_family(BOUNDS, "constant", 2)

    def boom(batch):
        raise RuntimeError("bad payoff")

    with pytest.raises(FunctionalError) as exc:
        sublinear_expectation(boom, fam, G16, 10, 0)
    assert exc.value.scenario == 0
    with pytest.raises(FunctionalError):
        sublinear_expectation(lambda b: np.full(len(b), np.nan), fam, G16, 10, 0)
    with pytest.raises(InvalidArgument):
        sublinear_expectation(boom, [], G16, 10, 0)


def test_family_sensitivity_report():
    rows = family_sensitivity(FUNCTIONALS["terminal_sq"], BOUNDS, G16, [2, 3], 1000, 0)
    assert [r["m"] for r in rows] == [2, 3] and all(r["stderr"] > 0 for r in rows)


def test_to_dict():
    fam = scenario_family(BOUNDS, "constant", 2)
    d = sublinear_expectation(FUNCTIONALS["terminal"], fam, G16, 10, 0).to_dict()
    assert set(d) == {"value", "argmax", "argmax_control", "per_scenario", "paths_per_scenario"}
