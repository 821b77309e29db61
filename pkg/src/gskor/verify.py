"""Randomized property campaigns for the reflection and reflected-SDE results.

Every suite is a pure function of ``(trials, seed)``. Trial ``i`` draws its
inputs from ``trial_rng(seed, suite_code, i)`` (or from the counter-based
Brownian substreams), so a witness reported by a failing campaign can be
replayed on its own with :func:`replay`.

Generators build hypothesis-satisfying inputs constructively: orderings are
imposed by adding nonnegative random fields, never by rejection.
"""
from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import gsde, skorokhod
from .constraints import ConstraintPair, make_band_pair, make_rho_pair
from .gexp import (FUNCTIONALS, ScenarioControl, VolatilityBounds, coarsen, lower_expectation,
                   ordered_map, scenario_family, simulate_batch, simulate_path, sublinear_expectation)
from .gsde import SDECoefficients
from .path_core import SampledPath, TimeGrid, cell_oscillation, coarse_gamma, gamma_envelope, make_grid
from .rng import trial_rng

STABILITY_SLACK = 1e-12
MONOTONE_SLACK = 1e-12
COMPARISON_SLACK = 1e-8
SDE_MONOTONE_SLACK = 1e-8
SENTINEL_TOL = 1e-10
SENTINEL = 1e30
ITO_RATIO = 0.75
LINEAR_ITO_TOL = 1e-10

BOUNDS = VolatilityBounds(0.25, 1.0)


@dataclass
class PropertyReport:
    property_id: str
    trials: int
    failures: int
    worst_slack: float
    witness: dict
    verdict: str
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return asdict(self)


def _code(name: str) -> int:
    return zlib.crc32(name.encode())


def _rng(suite: str, seed: int, i: int) -> np.random.Generator:
    return trial_rng(seed, _code(suite), i)


def _campaign(suite: str, trial: Callable[[int, int], tuple[float, dict]], trials: int, seed: int,
              slack: float, threads: int | None, extra: dict | None = None) -> PropertyReport:
    """Run ``trial(seed, i)`` -> ``(margin, info)``; a trial fails when ``margin < -slack``."""
    results = ordered_map(lambda i: trial(seed, i), range(trials), threads)
    margins = np.array([m for m, _ in results]) if results else np.zeros(0)
    failures = int(np.sum(margins < -slack))
    if trials:
        worst = int(np.argmin(margins))
        witness = {"seed": seed, "trial": worst, **results[worst][1]}
        worst_slack = float(margins[worst])
    else:
        witness, worst_slack = {"seed": seed}, float("inf")
    info = {"slack": slack, **(extra or {})}
    if results and all("malformed" in r[1] for r in results):
        info["malformed_solutions"] = int(sum(r[1]["malformed"] for r in results))
    return PropertyReport(suite, trials, failures, worst_slack, witness,
                          "pass" if failures == 0 else "fail", info)


# ---------------------------------------------------------------- generators

def _walk(rng: np.random.Generator, n: int, scale: float) -> np.ndarray:
    out = np.zeros(n + 1)
    out[1:] = np.cumsum(rng.normal(0.0, scale, n))
    return out


def _nonneg_field(rng: np.random.Generator, n: int, scale: float) -> np.ndarray:
    """Random nonnegative path (absolute value of a shifted walk)."""
    return np.abs(rng.uniform(0.0, scale) + _walk(rng, n, scale / np.sqrt(n)))


def _obstacles(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray, float]:
    gap = rng.uniform(0.3, 2.0)
    alpha = rng.uniform(-1.0, 1.0) + _walk(rng, n, rng.uniform(0.0, 0.5) / np.sqrt(n))
    beta = alpha + gap + _nonneg_field(rng, n, 0.5 * gap)
    return alpha, beta, gap


def _input(rng: np.random.Generator, n: int, gap: float, start: float = 0.0) -> np.ndarray:
    # increments stay well below half the gap, the regime of the minimal decomposition
    return start + _walk(rng, n, rng.uniform(0.2, 2.0) * gap / np.sqrt(n) / 8)


# ------------------------------------------------------- Skorokhod campaigns

SKOROKHOD_N = 512


def stability_trial(seed: int, i: int, n: int = SKOROKHOD_N) -> tuple[float, dict]:
    rng = _rng("stability", seed, i)
    grid = make_grid(1.0, n)
    alpha, beta, gap = _obstacles(rng, n)
    s1 = _input(rng, n, gap, rng.uniform(-2, 2))
    kind = ("identical", "shift", "random")[i % 3]
    a2, b2, s2 = alpha, beta, s1
    if kind == "shift":
        s2 = s1 + rng.uniform(-1.0, 1.0)
    elif kind == "random":
        s2 = s1 + _walk(rng, n, rng.uniform(0.0, 0.3) / np.sqrt(n)) + rng.uniform(-0.3, 0.3)
        a2 = alpha + _walk(rng, n, 0.2 / np.sqrt(n)) + rng.uniform(-0.2, 0.2)
        b2 = np.maximum(beta + _walk(rng, n, 0.2 / np.sqrt(n)) + rng.uniform(-0.2, 0.2), a2 + 0.1)
    k1 = skorokhod.solve(SampledPath(grid, s1), make_band_pair(SampledPath(grid, alpha), SampledPath(grid, beta))).k
    k2 = skorokhod.solve(SampledPath(grid, s2), make_band_pair(SampledPath(grid, a2), SampledPath(grid, b2))).k
    lhs = float(np.max(np.abs(k1.values - k2.values)))
    rhs = float(np.max(np.abs(s1 - s2)) + max(np.max(np.abs(alpha - a2)), np.max(np.abs(beta - b2))))
    return rhs - lhs, {"kind": kind, "lhs": lhs, "rhs": rhs}


def constraint_monotonicity_trial(seed: int, i: int, n: int = SKOROKHOD_N) -> tuple[float, dict]:
    """Narrower obstacles (pair 2 inside pair 1) push at least as much in both directions."""
    rng = _rng("constraint_monotonicity", seed, i)
    grid = make_grid(1.0, n)
    kind = ("identical", "band", "rho")[i % 3]
    alpha2, beta2, gap = _obstacles(rng, n)
    if kind == "identical":
        alpha1, beta1 = alpha2, beta2
    else:
        alpha1 = alpha2 - _nonneg_field(rng, n, rng.uniform(0, 1))
        beta1 = beta2 + _nonneg_field(rng, n, rng.uniform(0, 1))
    build = make_rho_pair if kind == "rho" else make_band_pair
    p1 = build(SampledPath(grid, alpha1), SampledPath(grid, beta1))
    p2 = build(SampledPath(grid, alpha2), SampledPath(grid, beta2))
    s = SampledPath(grid, _input(rng, n, min(p2.gap, gap) * 4, rng.uniform(-3, 3)))
    sol1, sol2 = skorokhod.solve(s, p1), skorokhod.solve(s, p2)
    margin_r = float(np.min(sol2.k_r.values - sol1.k_r.values))
    margin_l = float(np.min(sol2.k_l.values - sol1.k_l.values))
    return min(margin_r, margin_l), {"kind": kind, "margin_r": margin_r, "margin_l": margin_l}


def input_monotonicity_chains(sol1, sol2, nu: np.ndarray, c1: float, c2: float) -> dict[str, float]:
    """Margins (min over nodes, >= 0 when satisfied) of the four inequalities for ``s1 = s2 + nu``."""
    up = max(c2 - c1, 0.0)
    down = max(c1 - c2, 0.0)
    r1, r2 = sol1.k_r.values, sol2.k_r.values
    l1, l2 = sol1.k_l.values, sol2.k_l.values
    return {
        "r_lower": float(np.min(r2 - (r1 - up))),
        "r_upper": float(np.min(r1 + nu + down - r2)),
        "l_lower": float(np.min(l1 - (l2 - up))),
        "l_upper": float(np.min(l2 + nu + down - l1)),
    }


def input_monotonicity_trial(seed: int, i: int, n: int = SKOROKHOD_N) -> tuple[float, dict]:
    rng = _rng("input_monotonicity", seed, i)
    grid = make_grid(1.0, n)
    kind = ("zero", "linear", "random")[i % 3]
    alpha, beta, gap = _obstacles(rng, n)
    s2 = _input(rng, n, gap)
    if kind == "zero":
        nu = np.zeros(n + 1)
        c1 = c2 = rng.uniform(-2, 2)
    else:
        nu = grid.nodes.copy() if kind == "linear" else np.concatenate(
            [[0.0], np.cumsum(rng.exponential(rng.uniform(0, 2) / n, n))])
        c1, c2 = rng.uniform(-2, 2, 2)
    pair = make_band_pair(SampledPath(grid, alpha), SampledPath(grid, beta))
    sol1 = skorokhod.solve(SampledPath(grid, c1 + s2 + nu), pair)
    sol2 = skorokhod.solve(SampledPath(grid, c2 + s2), pair)
    chains = input_monotonicity_chains(sol1, sol2, nu, c1, c2)
    return min(chains.values()), {"kind": kind, **chains}


def check_stability(trials: int = 1000, seed: int = 0, threads: int | None = None) -> PropertyReport:
    """``sup|k1-k2| <= sup|s1-s2| + sup(|d lower| v |d upper|)`` on random instances."""
    return _campaign("stability", stability_trial, trials, seed, STABILITY_SLACK, threads)


def check_constraint_monotonicity(trials: int = 1000, seed: int = 0, threads: int | None = None) -> PropertyReport:
    return _campaign("constraint_monotonicity", constraint_monotonicity_trial, trials, seed,
                     MONOTONE_SLACK, threads)


def check_input_monotonicity(trials: int = 1000, seed: int = 0, threads: int | None = None) -> PropertyReport:
    return _campaign("input_monotonicity", input_monotonicity_trial, trials, seed, MONOTONE_SLACK, threads)


# ---------------------------------------------------------- SDE campaigns

SDE_N = 4096
N_PARAMETER_PAIRS = 5


def _bump(rng, scale: float) -> Callable:
    """Nonnegative Lipschitz perturbation ``d + e (1 + sin x) / 2`` with Lipschitz constant ``e / 2``."""
    d, e = rng.uniform(0, scale, 2)
    return (lambda t, x: d + e * (1.0 + np.sin(x)) / 2.0), e / 2.0


def _scenario(j: int) -> ScenarioControl:
    fam = scenario_family(BOUNDS, "constant", 2) + scenario_family(BOUNDS, "bang-bang", switches=3)
    return fam[j % len(fam)]


@dataclass(frozen=True, eq=False)
class ComparisonSetup:
    x1: float
    x2: float
    c1: SDECoefficients
    c2: SDECoefficients
    pair1: ConstraintPair
    pair2: ConstraintPair


def comparison_setup(seed: int, j: int, grid: TimeGrid, same_obstacles: bool = False,
                     monotone_upper: bool = False) -> ComparisonSetup:
    """Parameter pair with ``x1 <= x2``, ``f1 <= f2``, ``h1 <= h2``, shared ``g_diff``,
    ``lower1 <= lower2`` and ``upper1 <= upper2``.

    ``monotone_upper`` makes ``f2``, ``h2`` nondecreasing in x and ``g_diff``
    state independent; ``same_obstacles`` reuses pair 1 for both.
    """
    rng = _rng("comparison-setup", seed, j)
    n = grid.n
    x2 = rng.uniform(-0.5, 0.5)
    x1 = x2 - (0.0 if j == 0 else rng.uniform(0, 0.5))
    a_f = rng.uniform(0, 0.3) if monotone_upper else rng.uniform(-0.3, 0.3)
    a_h = rng.uniform(0, 0.2) if monotone_upper else rng.uniform(-0.2, 0.2)
    f2 = gsde.affine(a_f, rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5))
    h2 = gsde.affine(a_h, rng.uniform(-0.5, 0.5))
    if monotone_upper:
        g = gsde.constant(rng.uniform(0.5, 1.5))
        L_g = 0.0
    else:
        amp = rng.uniform(0, 0.2)
        g = gsde.sine(amp, 1.0, rng.uniform(0.5, 1.5))
        L_g = amp
    if j == 0:
        f1, h1, Lf1, Lh1 = f2, h2, abs(a_f), abs(a_h)
    else:
        bf, Lbf = _bump(rng, 1.0)
        bh, Lbh = _bump(rng, 0.5)
        f1 = lambda t, x, f2=f2, bf=bf: f2(t, x) - bf(t, x)
        h1 = lambda t, x, h2=h2, bh=bh: h2(t, x) - bh(t, x)
        Lf1, Lh1 = abs(a_f) + Lbf, abs(a_h) + Lbh
    c2 = SDECoefficients(f2, h2, g, lipschitz=abs(a_f) + abs(a_h) + L_g)
    c1 = SDECoefficients(f1, h1, g, lipschitz=Lf1 + Lh1 + L_g)

    t = grid.nodes
    gap = rng.uniform(0.5, 2.0)
    if j == N_PARAMETER_PAIRS - 1:
        # signed-square-root constraints: obstacle order follows from the order in the link space
        la1 = np.full(n + 1, -rng.uniform(0.5, 1.0))
        lb1 = la1 + gap + 0.2 * np.sin(2 * np.pi * t) ** 2
        pair1 = make_rho_pair(SampledPath(grid, la1), SampledPath(grid, lb1))
        if same_obstacles:
            return ComparisonSetup(x1, x2, c1, c2, pair1, pair1)
        la2 = la1 + _nonneg_field(rng, n, 0.3)
        lb2 = lb1 + _nonneg_field(rng, n, 0.3)
        pair2 = make_rho_pair(SampledPath(grid, la2), SampledPath(grid, np.maximum(lb2, la2 + 0.1)))
        return ComparisonSetup(x1, x2, c1, c2, pair1, pair2)
    a1 = -gap / 2 + 0.3 * np.sin(2 * np.pi * rng.uniform(0.5, 2) * t)
    b1 = a1 + gap + _nonneg_field(rng, n, 0.5)
    pair1 = make_band_pair(SampledPath(grid, a1), SampledPath(grid, b1))
    if same_obstacles or j == 0:
        return ComparisonSetup(x1, x2, c1, c2, pair1, pair1)
    a2 = a1 + _nonneg_field(rng, n, 0.4)
    b2 = np.maximum(b1 + _nonneg_field(rng, n, 0.4), a2 + 0.2)
    return ComparisonSetup(x1, x2, c1, c2, pair1, make_band_pair(SampledPath(grid, a2), SampledPath(grid, b2)))


def _wellformed(sol, pair) -> int:
    return int(bool(gsde.wellformedness_violations(sol, pair)))


def comparison_trial(seed: int, i: int, n: int = SDE_N) -> tuple[float, dict]:
    """Trial ``i`` is path ``i // 5`` under parameter pair ``i % 5``."""
    grid = make_grid(1.0, n)
    j, p = i % N_PARAMETER_PAIRS, i // N_PARAMETER_PAIRS
    setup = comparison_setup(seed, j, grid)
    path = simulate_path(_scenario(p), grid, (seed, 1000 + j, p))
    s1 = gsde.solve_reflected(setup.x1, setup.c1, setup.pair1, path)
    s2 = gsde.solve_reflected(setup.x2, setup.c2, setup.pair2, path)
    margin = float(np.min(s2.X.values - s1.X.values))
    bad = _wellformed(s1, setup.pair1) + _wellformed(s2, setup.pair2)
    return margin, {"parameter_pair": j, "path": p, "margin": margin, "malformed": bad}


def check_comparison(trials: int = 200, seed: int = 0, threads: int | None = None) -> PropertyReport:
    """``X1 <= X2 + 1e-8`` node-wise; ``trials`` paths under each of five parameter pairs."""
    rep = _campaign("comparison", comparison_trial, trials * N_PARAMETER_PAIRS, seed,
                    COMPARISON_SLACK, threads, {"paths": trials, "parameter_pairs": N_PARAMETER_PAIRS})
    return rep


def sde_monotonicity_trial(seed: int, i: int, n: int = SDE_N) -> tuple[float, dict]:
    grid = make_grid(1.0, n)
    j, p = i % N_PARAMETER_PAIRS, i // N_PARAMETER_PAIRS
    st = comparison_setup(seed, j, grid, same_obstacles=True, monotone_upper=True)
    path = simulate_path(_scenario(p), grid, (seed, 2000 + j, p))
    s1 = gsde.solve_reflected(st.x1, st.c1, st.pair1, path)
    s2 = gsde.solve_reflected(st.x2, st.c2, st.pair2, path)
    t = grid.nodes[:-1]
    X1, X2 = s1.X.values[:-1], s2.X.values[:-1]
    incr = ((st.c2.f(t, X2) - st.c1.f(t, X1)) * grid.dt
            + (st.c2.h_qv(t, X2) - st.c1.h_qv(t, X1)) * path.dQV)
    xhat = np.concatenate([[0.0], np.cumsum(incr)])
    dx = st.x2 - st.x1
    Al1, Al2, Ar1, Ar2 = s1.A_l.values, s2.A_l.values, s1.A_r.values, s2.A_r.values
    chains = {
        "l_lower": float(np.min(Al2 - Al1)),
        "l_upper": float(np.min(Al1 + xhat + dx - Al2)),
        "r_lower": float(np.min(Ar1 - Ar2)),
        "r_upper": float(np.min(Ar2 + xhat + dx - Ar1)),
    }
    bad = _wellformed(s1, st.pair1) + _wellformed(s2, st.pair2)
    return min(chains.values()), {"parameter_pair": j, "path": p, **chains, "malformed": bad}


def check_sde_constraining_monotonicity(trials: int = 200, seed: int = 0,
                                        threads: int | None = None) -> PropertyReport:
    """Sandwich chains for the individual constraining processes of two reflected SDEs."""
    return _campaign("sde_constraining_monotonicity", sde_monotonicity_trial, trials * N_PARAMETER_PAIRS,
                     seed, SDE_MONOTONE_SLACK, threads,
                     {"paths": trials, "parameter_pairs": N_PARAMETER_PAIRS})


# ------------------------------------------------ well-formedness, sentinel

def _wellformed_case(j: int, grid: TimeGrid) -> tuple[float, SDECoefficients, ConstraintPair]:
    t = grid.nodes
    if j == 0:
        coeffs = SDECoefficients(f=gsde.affine(-1.0), g_diff=gsde.constant(1.0), lipschitz=1.0)
        return 0.0, coeffs, make_band_pair(-5.0, 5.0, grid)
    if j == 1:
        coeffs = SDECoefficients(f=gsde.sine(0.3, 1.0, 0.5), h_qv=gsde.affine(0.2, 0.1),
                                 g_diff=gsde.sine(0.2, 1.0, 1.0), lipschitz=0.7)
        return 0.2, coeffs, make_band_pair(-1.0, 1.0, grid)
    if j == 2:
        coeffs = SDECoefficients(f=gsde.affine(-0.5, 1.0), g_diff=gsde.affine(0.2, 0.8), lipschitz=0.7)
        lower = SampledPath(grid, -0.8 + 0.3 * np.sin(2 * np.pi * t))
        upper = SampledPath(grid, 0.8 + 0.3 * np.sin(2 * np.pi * t))
        return 0.5, coeffs, make_rho_pair(lower, upper)
    coeffs = SDECoefficients(f=gsde.constant(2.0), h_qv=gsde.sine(0.4, 1.0), g_diff=gsde.constant(1.2),
                             lipschitz=0.4)
    return -0.3, coeffs, make_band_pair(SampledPath(grid, -0.5 - t), SampledPath(grid, 0.5 + 0.5 * t))


def wellformed_trial(seed: int, i: int, n: int = SDE_N) -> tuple[float, dict]:
    grid = make_grid(1.0, n)
    j, p = i % 4, i // 4
    x0, coeffs, pair = _wellformed_case(j, grid)
    path = simulate_path(_scenario(p), grid, (seed, 3000 + j, p))
    sol = gsde.solve_reflected(x0, coeffs, pair, path)
    problems = gsde.wellformedness_violations(sol, pair)
    return (-1.0 if problems else 0.0), {
        "case": j, "path": p, "problems": problems, "iterations": sol.iterations,
        "equation_residual": sol.equation_residual, "flat_off": list(sol.flat_off)}


def check_wellformed(trials: int = 500, seed: int = 0, threads: int | None = None) -> PropertyReport:
    """Containment, flat-off, equation residual and Picard diagnostics on simulated reflected paths."""
    rep = _campaign("wellformed", wellformed_trial, trials, seed, 0.0, threads)
    return rep


def sentinel_trial(seed: int, i: int, n: int = SDE_N) -> tuple[float, dict]:
    grid = make_grid(1.0, n)
    coeffs = SDECoefficients(f=gsde.affine(-0.5, 0.2, 0.3), h_qv=gsde.sine(0.2, 1.0, 0.1),
                             g_diff=gsde.affine(0.2, 1.0), lipschitz=0.9)
    pair = make_band_pair(-SENTINEL, SENTINEL, grid)
    path = simulate_path(_scenario(i), grid, (seed, 4000, i))
    x0 = float(_rng("sentinel", seed, i).uniform(-1, 1))
    refl = gsde.solve_reflected(x0, coeffs, pair, path)
    free = gsde.solve_unreflected(x0, coeffs, path)
    d = float(np.max(np.abs(refl.X.values - free.values)))
    a = float(np.max(np.abs(refl.A.values)))
    return SENTINEL_TOL - max(d, a), {"path": i, "distance": d, "sup_A": a}


def check_sentinel(trials: int = 100, seed: int = 0, threads: int | None = None) -> PropertyReport:
    """Reflection between +-1e30 reproduces the plain Euler recursion."""
    return _campaign("sentinel", sentinel_trial, trials, seed, 0.0, threads)


# ---------------------------------------------------------------- gamma

GAMMA_FINE = 2 ** 16
GAMMA_LADDER = tuple(range(4, 13))


def gamma_ladder(a: SampledPath, b: SampledPath, exponents=GAMMA_LADDER) -> tuple[list[float], list[float]]:
    """``sup|gamma - gamma^n|`` and the cell-oscillation bound for ``n = 2**e``."""
    exact = gamma_envelope(a, b).values
    errors, bounds = [], []
    for e in exponents:
        n = 2 ** e
        errors.append(float(np.max(np.abs(exact - coarse_gamma(a, b, n).values))))
        bounds.append(max(cell_oscillation(a, n), cell_oscillation(b, n)))
    return errors, bounds


def gamma_trial(seed: int, i: int, fine: int = GAMMA_FINE, exponents=GAMMA_LADDER) -> tuple[float, dict]:
    grid = make_grid(1.0, fine)
    B = simulate_batch(ScenarioControl.constant(1.0), grid, seed, 5000, [i]).B[0]
    # obstacle-minus-input shape with obstacles -1 and 1
    a, b = SampledPath(grid, -1.0 - B), SampledPath(grid, 1.0 - B)
    errors, bounds = gamma_ladder(a, b, exponents)
    steps = [errors[k] - errors[k + 1] for k in range(len(errors) - 1)]
    bound_margin = min(bd - er for er, bd in zip(errors, bounds))
    margin = min(min(steps), bound_margin)
    return margin, {"path": i, "errors": errors, "bounds": bounds}


def check_gamma_convergence(trials: int = 50, seed: int = 0, threads: int | None = None,
                            fine: int = GAMMA_FINE, exponents=GAMMA_LADDER) -> PropertyReport:
    """Coarse envelopes approach the fine one monotonically along a doubling ladder.

    Each trial also checks the error against the largest cell oscillation
    of the two inputs at every rung.
    """
    results = ordered_map(lambda i: gamma_trial(seed, i, fine, exponents), range(trials), threads)
    non_monotone = sum(min(np.diff(-np.asarray(r[1]["errors"]))) < 0 for r in results)
    rep = _campaign("gamma_convergence", lambda s, i: results[i], trials, seed, 0.0, 1,
                    {"fine_steps": fine, "ladder": [2 ** e for e in exponents],
                     "non_monotone_trials": int(non_monotone),
                     "mean_errors": np.mean([r[1]["errors"] for r in results], axis=0).tolist()
                     if results else []})
    return rep


# ------------------------------------------------------------------ Ito

ITO_FINE_EXP = 13
ITO_LADDER = tuple(range(8, 14))
ITO_BAND = 0.5

PHIS = {
    "x": (lambda x: x, lambda x: np.ones_like(x), lambda x: np.zeros_like(x)),
    "x2": (lambda x: x * x, lambda x: 2 * x, lambda x: np.full_like(x, 2.0)),
    "x3": (lambda x: x ** 3, lambda x: 3 * x * x, lambda x: 6 * x),
}


def ito_residual(sol: gsde.ReflectedSDESolution, coeffs: SDECoefficients, path, phi: str) -> float:
    """``|Phi(X_T) - Phi(X_0) - (sum of left-endpoint integrals)|`` along one solution.

    The right-hand side collects ``Phi'(X) f dt``, ``Phi'(X) h_qv dQV``,
    ``Phi'(X) g_diff dB``, ``Phi'(X) dA`` and ``Phi''(X) g_diff^2 dQV / 2``.
    """
    F, dF, d2F = PHIS[phi]
    grid = sol.grid
    t, x = grid.nodes[:-1], sol.X.values[:-1]
    f, h, g = coeffs.f(t, x), coeffs.h_qv(t, x), coeffs.g_diff(t, x)
    dQ, dB, dA = path.dQV, path.dB, np.diff(sol.A.values)
    d1 = dF(x)
    rhs = (np.dot(d1, f * grid.dt) + np.dot(d1, h * dQ) + np.dot(d1, g * dB) + np.dot(d1, dA)
           + 0.5 * np.dot(d2F(x), g * g * dQ))
    X = sol.X.values
    return float(abs(F(X[-1]) - F(X[0]) - rhs))


def ito_path_residuals(seed: int, i: int, fine_exp: int = ITO_FINE_EXP,
                       ladder=ITO_LADDER) -> dict[str, list[float]]:
    """Residuals of one reflected G-Brownian path on every rung of the ladder.

    The path is drawn once on the finest grid and aggregated, with the
    realized quadratic variation as clock, so all rungs share one sample.
    """
    fine = make_grid(1.0, 2 ** fine_exp)
    rates = (BOUNDS.sigma2_min, BOUNDS.sigma2_max)
    path = simulate_path(ScenarioControl.constant(rates[i % 2]), fine, (seed, 6000, i))
    coeffs = SDECoefficients(g_diff=gsde.constant(1.0), lipschitz=0.0)
    out = {name: [] for name in PHIS}
    for e in ladder:
        cp = coarsen(path, 2 ** e, realized_qv=True)
        pair = make_band_pair(-ITO_BAND, ITO_BAND, cp.grid)
        sol = gsde.solve_reflected(0.0, coeffs, pair, cp)
        for name in PHIS:
            out[name].append(ito_residual(sol, coeffs, cp, name))
    return out


def check_ito_residual(trials: int = 50, seed: int = 0, threads: int | None = None,
                       ladder=ITO_LADDER) -> PropertyReport:
    """Mean residual for ``Phi(x) = x^2`` shrinks by at most 0.75 per doubling; ``Phi(x) = x`` is exact.

    ``x^3`` residuals are reported as a diagnostic only.
    """
    fine_exp = max(ladder)
    per_path = ordered_map(lambda i: ito_path_residuals(seed, i, fine_exp, ladder), range(trials), threads)
    means = {name: np.mean([r[name] for r in per_path], axis=0) for name in PHIS}
    ratios = {name: (m[1:] / m[:-1]).tolist() for name, m in means.items() if name != "x"}
    linear = max(max(r["x"]) for r in per_path)
    checks = [ITO_RATIO - r for r in ratios["x2"]] + [LINEAR_ITO_TOL - linear]
    failures = sum(c < 0 for c in checks)
    worst = int(np.argmin(checks))
    return PropertyReport(
        "ito_residual", trials, failures, float(checks[worst]),
        {"seed": seed, "check": worst, "ladder": [2 ** e for e in ladder]},
        "pass" if failures == 0 else "fail",
        {"mean_residuals": {k: v.tolist() for k, v in means.items()}, "ratios": ratios,
         "max_linear_residual": linear, "ratio_threshold": ITO_RATIO, "band": ITO_BAND})


# ---------------------------------------------------------------- moments

def check_g_moments(trials: int = 100_000, seed: int = 0, threads: int | None = None,
                    bounds: VolatilityBounds = BOUNDS, T: float = 1.0, n: int = 16,
                    m: int = 5) -> PropertyReport:
    """Upper and lower G-moments of ``B_T^2`` and the upper mean of ``(B_T)^+``; ``trials`` = paths per scenario."""
    grid = make_grid(T, n)
    fam = scenario_family(bounds, "constant", m)
    upper = sublinear_expectation(FUNCTIONALS["terminal_sq"], fam, grid, trials, seed, threads=threads)
    low_value, low = lower_expectation(FUNCTIONALS["terminal_sq"], fam, grid, trials, seed, threads=threads)
    pos = sublinear_expectation(FUNCTIONALS["terminal_pos"], fam, grid, trials, seed, threads=threads)
    targets = [
        ("upper_sq", upper.value, upper.stderrs[upper.argmax], bounds.sigma2_max * T),
        ("lower_sq", low_value, low.stderrs[low.argmax], bounds.sigma2_min * T),
        ("upper_pos", pos.value, pos.stderrs[pos.argmax], np.sqrt(bounds.sigma2_max * T / (2 * np.pi))),
    ]
    margins = [3 * se - abs(v - ref) for _, v, se, ref in targets]
    worst = int(np.argmin(margins))
    failures = sum(mg < 0 for mg in margins)
    detail = {name: {"value": v, "stderr": se, "reference": float(ref)} for name, v, se, ref in targets}
    return PropertyReport("g_moments", trials, failures, float(margins[worst]),
                          {"seed": seed, "check": targets[worst][0]},
                          "pass" if failures == 0 else "fail", {"checks": detail, "steps": n, "scenarios": m})


# --------------------------------------------------------------- registry

SUITES: dict[str, Callable[..., PropertyReport]] = {
    "stability": check_stability,
    "constraint_monotonicity": check_constraint_monotonicity,
    "input_monotonicity": check_input_monotonicity,
    "comparison": check_comparison,
    "sde_constraining_monotonicity": check_sde_constraining_monotonicity,
    "wellformed": check_wellformed,
    "sentinel": check_sentinel,
    "gamma_convergence": check_gamma_convergence,
    "ito_residual": check_ito_residual,
    "g_moments": check_g_moments,
}

TRIALS = {
    "stability": stability_trial,
    "constraint_monotonicity": constraint_monotonicity_trial,
    "input_monotonicity": input_monotonicity_trial,
    "comparison": comparison_trial,
    "sde_constraining_monotonicity": sde_monotonicity_trial,
    "wellformed": wellformed_trial,
    "sentinel": sentinel_trial,
    "gamma_convergence": gamma_trial,
}


def replay(suite: str, seed: int, trial: int) -> tuple[float, dict]:
    """Re-run one recorded trial (``witness["trial"]``) of a campaign."""
    return TRIALS[suite](seed, trial)


def run_suites(names, trials: int | None = None, seed: int = 0, threads: int | None = None) -> list[PropertyReport]:
    """Run suites by name (``"all"`` for every suite) in registry order."""
    names = list(SUITES) if names == "all" or names == ["all"] else list(names)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s) {unknown}; choose from {sorted(SUITES)} or 'all'")
    out = []
    for name in SUITES:
        if name in names:
            kw = {} if trials is None else {"trials": trials}
            out.append(SUITES[name](seed=seed, threads=threads, **kw))
    return out
