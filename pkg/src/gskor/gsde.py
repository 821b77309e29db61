"""Reflected SDEs driven by G-Brownian motion, one scenario path at a time.

For a path ``(B, QV)`` the solver alternates explicit Euler integration

    S_{i+1} = S_i + f(t_i, X_i) dt + h_qv(t_i, X_i) dQV_i + g_diff(t_i, X_i) dB_i

with the two-sided Skorokhod reflection of ``S`` until successive reflected
paths agree to ``tol`` in sup norm (Picard iteration started from ``X = 0``).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from . import skorokhod
from .constraints import ConstraintPair
from .errors import InvalidArgument, NumericFailure
from .gexp import GBMPath, ScenarioControl, ordered_map, simulate_batch
from .path_core import MonotonePath, SampledPath, TimeGrid, check_same_grid

log = logging.getLogger(__name__)

Coefficient = Callable[[np.ndarray, np.ndarray], np.ndarray]

PICARD_TOL = 1e-10
MAX_ITER = 50
EQUATION_TOL = 1e-8
MONOTONE_SLACK = 1e-12


def zero(t, x):
    return np.zeros(np.broadcast(t, x).shape)


def constant(c: float) -> Coefficient:
    c = float(c)
    return lambda t, x: np.full(np.broadcast(t, x).shape, c)


def affine(a: float = 0.0, b: float = 0.0, c: float = 0.0) -> Coefficient:
    """``a x + b + c t``."""
    return lambda t, x: a * np.asarray(x) + b + c * np.asarray(t)


def sine(amp: float = 1.0, freq: float = 1.0, offset: float = 0.0, phase: float = 0.0) -> Coefficient:
    """``amp sin(freq x + phase) + offset``."""
    return lambda t, x: amp * np.sin(freq * np.asarray(x) + phase) + offset + 0.0 * np.asarray(t)


# id -> (factory, Lipschitz constant in x as a function of the parameters)
BUILTINS: dict[str, tuple[Callable[..., Coefficient], Callable[..., float]]] = {
    "zero": (lambda: zero, lambda: 0.0),
    "constant": (constant, lambda c: 0.0),
    "affine": (affine, lambda a=0.0, b=0.0, c=0.0: abs(a)),
    "sine": (sine, lambda amp=1.0, freq=1.0, offset=0.0, phase=0.0: abs(amp * freq)),
}


def builtin(spec: dict) -> tuple[Coefficient, float]:
    """Coefficient and its Lipschitz constant from ``{"id": name, **params}``."""
    params = dict(spec)
    name = params.pop("id", None)
    if name not in BUILTINS:
        raise InvalidArgument(f"unknown coefficient id {name!r}; choose from {sorted(BUILTINS)}")
    make, lip = BUILTINS[name]
    try:
        return make(**params), float(lip(**params))
    except TypeError as exc:
        raise InvalidArgument(f"bad parameters for coefficient {name!r}: {exc}") from None


@dataclass(frozen=True, eq=False)
class SDECoefficients:
    """Drift ``f`` (in dt), ``h_qv`` (in dQV) and diffusion ``g_diff`` (in dB).

    When ``lipschitz`` is given, ``|f(x)-f(y)| + |h_qv(x)-h_qv(y)| + |g_diff(x)-g_diff(y)|
    <= L |x - y|`` is spot-checked on random probes at construction.
    """

    f: Coefficient = zero
    h_qv: Coefficient = zero
    g_diff: Coefficient = zero
    lipschitz: float | None = None
    horizon: float = 1.0

    def __post_init__(self):
        rng = np.random.default_rng(0xC0EF)
        t = rng.uniform(0.0, self.horizon, 64)
        x, y = rng.uniform(-10.0, 10.0, (2, 64))
        total = np.zeros(64)
        for name in ("f", "h_qv", "g_diff"):
            fn = getattr(self, name)
            fx, fy = np.asarray(fn(t, x), float), np.asarray(fn(t, y), float)
            if not (np.all(np.isfinite(fx)) and np.all(np.isfinite(fy))):
                raise InvalidArgument(f"coefficient {name} is not finite on probe points")
            total += np.abs(fx - fy)
        if self.lipschitz is not None:
            bound = self.lipschitz * np.abs(x - y) * (1 + 1e-9) + 1e-12
            if np.any(total > bound):
                j = int(np.flatnonzero(total > bound)[0])
                raise InvalidArgument(
                    f"declared Lipschitz constant {self.lipschitz!r} violated at x={x[j]!r}, y={y[j]!r}")

    @classmethod
    def from_spec(cls, spec: dict, horizon: float = 1.0) -> "SDECoefficients":
        parts, lip = {}, 0.0
        for name in ("f", "h_qv", "g_diff"):
            fn, L = builtin(spec.get(name, {"id": "zero"}))
            parts[name] = fn
            lip += L
        return cls(lipschitz=lip, horizon=horizon, **parts)


@dataclass(frozen=True, eq=False)
class ReflectedSDESolution:
    X: SampledPath
    A: SampledPath
    A_r: MonotonePath
    A_l: MonotonePath
    S: SampledPath  # Euler functional of the final X
    iterations: int
    picard_residual: float
    equation_residual: float
    distances: tuple[float, ...]
    converged: bool
    flat_off: tuple[float, float] = (0.0, 0.0)

    @property
    def grid(self) -> TimeGrid:
        return self.X.grid


def euler_functional(coeffs: SDECoefficients, X: SampledPath, path: GBMPath, x0: float) -> SampledPath:
    """Left-endpoint Euler integral ``x0 + int f dt + int h_qv dQV + int g_diff dB`` along ``X``."""
    check_same_grid(X, path.B, path.QV)
    t = X.grid.nodes[:-1]
    x = X.values[:-1]
    incr = (coeffs.f(t, x) * X.grid.dt
            + coeffs.h_qv(t, x) * path.dQV
            + coeffs.g_diff(t, x) * path.dB)
    if not np.all(np.isfinite(incr)):
        raise NumericFailure("non-finite Euler increment", int(np.flatnonzero(~np.isfinite(incr))[0]))
    out = np.empty(X.grid.n + 1)
    out[0] = x0
    out[1:] = x0 + np.cumsum(incr)
    return SampledPath(X.grid, out)


def solve_unreflected(x0: float, coeffs: SDECoefficients, path: GBMPath) -> SampledPath:
    """Plain explicit Euler recursion, no constraints."""
    grid = path.grid
    t = grid.nodes
    dB, dQ = path.dB, path.dQV
    X = np.empty(grid.n + 1)
    X[0] = x0
    for i in range(grid.n):
        xi = X[i:i + 1]
        step = (coeffs.f(t[i], xi) * grid.dt + coeffs.h_qv(t[i], xi) * dQ[i]
                + coeffs.g_diff(t[i], xi) * dB[i])
        X[i + 1] = X[i] + float(step[0])
        if not np.isfinite(X[i + 1]):
            raise NumericFailure("non-finite Euler step", i + 1)
    return SampledPath(grid, X)


def solve_reflected(x0: float, coeffs: SDECoefficients, pair: ConstraintPair, path: GBMPath,
                    tol: float = PICARD_TOL, max_iter: int = MAX_ITER,
                    init: str = "zero") -> ReflectedSDESolution:
    """Picard iteration ``X^{n+1} = reflect(S(X^n))`` from ``X^0 = 0``.

    ``init="clamp"`` starts from the constant ``x0`` clamped into the
    obstacles at time 0 instead. Convergence is judged on
    ``d_n = sup|X^{n+1} - X^n|`` for ``n >= 1``; the first distance measures
    the arbitrary start and is not used. A run that exhausts ``max_iter`` is
    returned with ``converged=False``.
    """
    if not tol > 0:
        raise InvalidArgument("Picard tolerance must be positive")
    grid = path.grid
    check_same_grid(path.B, pair.lower)
    if init == "zero":
        X = SampledPath.constant(grid, 0.0)
    elif init == "clamp":
        X = SampledPath.constant(grid, min(max(x0, pair.lower.values[0]), pair.upper.values[0]))
    else:
        raise InvalidArgument(f"unknown Picard init {init!r}")
    dists: list[float] = []
    converged = False
    sol = None
    for it in range(max_iter):
        S = euler_functional(coeffs, X, path, x0)
        sol = skorokhod.solve(S, pair)
        d = float(np.max(np.abs(sol.x.values - X.values)))
        dists.append(d)
        X = sol.x
        if it >= 1 and d <= tol:
            converged = True
            break
    if not converged:
        log.warning("Picard iteration stopped after %d steps at distance %.3g", max_iter, dists[-1])
    S_final = euler_functional(coeffs, X, path, x0)
    eq_res = float(np.max(np.abs(X.values - S_final.values - sol.k.values)))
    return ReflectedSDESolution(
        X=X, A=sol.k, A_r=sol.k_r, A_l=sol.k_l, S=S_final,
        iterations=len(dists), picard_residual=dists[-1], equation_residual=eq_res,
        distances=tuple(dists), converged=converged, flat_off=sol.flat_off)


def wellformedness_violations(sol: ReflectedSDESolution, pair: ConstraintPair,
                              max_iter: int = MAX_ITER) -> list[str]:
    """Empty when the solution meets every acceptance tolerance."""
    problems = []
    excursion = skorokhod.containment_violation(sol.X.values, pair)
    if excursion > skorokhod.OBSTACLE_TOL:
        problems.append(f"obstacle excursion {excursion:.3g}")
    if max(sol.flat_off) > skorokhod.FLAT_OFF_TOL:
        problems.append(f"flat-off residuals {sol.flat_off}")
    if sol.equation_residual > EQUATION_TOL:
        problems.append(f"equation residual {sol.equation_residual:.3g}")
    if not sol.converged or sol.iterations > max_iter:
        problems.append(f"Picard did not converge in {sol.iterations} iterations")
    d = sol.distances
    for n in range(1, len(d) - 1):
        if d[n + 1] > d[n] + MONOTONE_SLACK:
            problems.append(f"Picard distance increased at n={n + 1}: {d[n]:.3g} -> {d[n + 1]:.3g}")
            break
    return problems


def data_size(x0: float, coeffs: SDECoefficients, grid: TimeGrid, p: float) -> float:
    """``|x0|^p + int |f(t,0)|^p dt + int |h_qv(t,0)|^p dt + (int g_diff(t,0)^2 dt)^(p/2)`` as left sums."""
    t = grid.nodes[:-1]
    zero = np.zeros_like(t)
    f, h, g = (np.abs(np.broadcast_to(np.asarray(c(t, zero), float), t.shape)) for c in (coeffs.f, coeffs.h_qv, coeffs.g_diff))
    return float(abs(x0) ** p + np.sum(f ** p) * grid.dt + np.sum(h ** p) * grid.dt
                 + (np.sum(g * g) * grid.dt) ** (p / 2))


PairProvider = Callable[[int, int, GBMPath], ConstraintPair]


@dataclass
class EnsembleResult:
    solutions: list[list[ReflectedSDESolution]] = field(repr=False)
    paths: list[list[GBMPath]] = field(repr=False)
    moments: dict
    per_scenario: list[dict]
    failures: list[dict]


def ensemble_solve(x0: float, coeffs: SDECoefficients, pair: Union[ConstraintPair, PairProvider],
                   family: Sequence[ScenarioControl], grid: TimeGrid, paths_per_scenario: int,
                   base_seed: int = 0, *, p: float = 2.0, tol: float = PICARD_TOL,
                   max_iter: int = MAX_ITER, init: str = "zero", realized_qv: bool = False,
                   threads: int | None = None) -> EnsembleResult:
    """Solve every (scenario, path) and summarise sup-moments.

    ``moments`` holds the largest over scenarios of the mean of
    ``sup_t |X_t|^p`` and ``sup_t |A_t|^p``, the data size of the a priori
    bound (coefficients at zero plus obstacle sup-moments) and their ratio. ``pair`` may be a callable
    ``(scenario, path, gbm_path) -> ConstraintPair`` for simulated obstacles.
    """
    provider = pair if callable(pair) else (lambda j, i, g: pair)
    family = list(family)
    batches = [simulate_batch(ctrl, grid, base_seed, j, range(paths_per_scenario), realized_qv)
               for j, ctrl in enumerate(family)]
    jobs = [(j, i) for j in range(len(family)) for i in range(paths_per_scenario)]

    def run(job):
        j, i = job
        gpath = batches[j].path(i)
        try:
            cp = provider(j, i, gpath)
            sol = solve_reflected(x0, coeffs, cp, gpath, tol, max_iter, init)
        except Exception as exc:  # aggregated below with coordinates
            return gpath, None, {"scenario": j, "path": i, "error": repr(exc)}, None
        bad = wellformedness_violations(sol, cp, max_iter)
        obstacles = (float(np.max(np.abs(cp.lower.values))) ** p
                     + float(np.max(np.abs(cp.upper.values))) ** p)
        return gpath, sol, ({"scenario": j, "path": i, "error": "; ".join(bad)} if bad else None), obstacles

    results = ordered_map(run, jobs, threads)
    solutions = [[None] * paths_per_scenario for _ in family]
    paths = [[None] * paths_per_scenario for _ in family]
    failures = []
    obstacle_p = [[] for _ in family]
    for (j, i), (gpath, sol, fail, obs) in zip(jobs, results):
        solutions[j][i] = sol
        paths[j][i] = gpath
        if fail:
            failures.append(fail)
        if obs is not None:
            obstacle_p[j].append(obs)
    per_scenario = []
    for j in range(len(family)):
        sols = [s for s in solutions[j] if s is not None]
        mx = [float(np.max(np.abs(s.X.values)) ** p) for s in sols]
        ma = [float(np.max(np.abs(s.A.values)) ** p) for s in sols]
        per_scenario.append({"scenario": j, "sup_X_p": float(np.mean(mx)) if mx else float("nan"),
                             "sup_A_p": float(np.mean(ma)) if ma else float("nan")})
    moments = {"p": p,
               "sup_X_p": max(r["sup_X_p"] for r in per_scenario),
               "sup_A_p": max(r["sup_A_p"] for r in per_scenario)}
    data = data_size(x0, coeffs, grid, p) + max((float(np.mean(o)) for o in obstacle_p if o), default=0.0)
    lhs = moments["sup_X_p"] + moments["sup_A_p"]
    moments["data_size"] = data
    # empirical ratio for the a priori moment bound; no theoretical constant is available to compare with
    moments["fitted_constant"] = lhs / data if data > 0 and np.isfinite(lhs) else None
    return EnsembleResult(solutions, paths, moments, per_scenario, failures)
