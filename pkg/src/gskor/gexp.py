"""G-Brownian paths under volatility scenarios and sublinear Monte Carlo.

The sublinear expectation is represented as a supremum of linear
expectations over a family of probability measures. Here the family is a
finite set of piecewise-constant variance-rate controls; the estimate is the
largest per-scenario Monte Carlo mean.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import rng
from .errors import FunctionalError, InvalidArgument
from .path_core import SampledPath, TimeGrid


def thread_count() -> int:
    """Parallelism cap from ``GSKOR_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("GSKOR_THREADS", "1")))
    except ValueError:
        return 1


def ordered_map(fn, items, threads: int | None = None) -> list:
    """``list(map(fn, items))``, optionally on a thread pool; output order is fixed."""
    threads = thread_count() if threads is None else threads
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class VolatilityBounds:
    sigma2_min: float
    sigma2_max: float

    def __post_init__(self):
        lo, hi = self.sigma2_min, self.sigma2_max
        if not (np.isfinite(lo) and np.isfinite(hi)) or lo < 0 or lo > hi:
            raise InvalidArgument(f"need 0 <= sigma2_min <= sigma2_max, got ({lo!r}, {hi!r})")

    def G(self, a):
        """Generator ``G(a) = (sigma2_max a^+ - sigma2_min a^-) / 2``."""
        a = np.asarray(a, dtype=np.float64)
        return 0.5 * (self.sigma2_max * np.maximum(a, 0) - self.sigma2_min * np.maximum(-a, 0))


@dataclass(frozen=True)
class ScenarioControl:
    """Piecewise-constant variance rate: ``levels[j]`` on ``[switches[j-1], switches[j])``.

    ``switches`` are fractions of the horizon in (0, 1), increasing.
    """

    levels: tuple[float, ...]
    switches: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        object.__setattr__(self, "switches", tuple(float(v) for v in self.switches))
        if len(self.levels) != len(self.switches) + 1:
            raise InvalidArgument("need exactly one more level than switch points")
        if any(not 0 < u < 1 for u in self.switches) or list(self.switches) != sorted(set(self.switches)):
            raise InvalidArgument(f"switch points must be increasing in (0, 1): {self.switches}")

    @classmethod
    def constant(cls, v: float) -> "ScenarioControl":
        return cls((v,))

    def rates(self, grid: TimeGrid) -> np.ndarray:
        """Per-step rates ``v_i`` for steps ``[t_i, t_{i+1})``, i = 0..n-1."""
        frac = np.arange(grid.n) / grid.n
        seg = np.searchsorted(np.asarray(self.switches), frac, side="right")
        return np.asarray(self.levels)[seg]

    def within(self, bounds: VolatilityBounds) -> bool:
        return all(bounds.sigma2_min <= v <= bounds.sigma2_max for v in self.levels)

    def describe(self) -> dict:
        return {"levels": list(self.levels), "switches": list(self.switches)}


def scenario_family(bounds: VolatilityBounds, kind: str = "constant", m: int = 2,
                    switches: int = 1) -> list[ScenarioControl]:
    """Finite control family approximating the representing set of measures.

    ``constant``: ``m`` constant rates equally spaced over the bounds.
    ``bang-bang``: alternation between the two extremes with ``switches``
    equispaced change points, in both phases.
    """
    lo, hi = bounds.sigma2_min, bounds.sigma2_max
    if kind == "constant":
        if m < 2:
            raise InvalidArgument(f"constant family needs m >= 2, got {m}")
        return [ScenarioControl.constant(lo + j * (hi - lo) / (m - 1)) for j in range(m)]
    if kind == "bang-bang":
        if switches < 1:
            raise InvalidArgument(f"bang-bang family needs switches >= 1, got {switches}")
        cuts = tuple(j / (switches + 1) for j in range(1, switches + 1))
        lows_first = tuple(lo if j % 2 == 0 else hi for j in range(switches + 1))
        highs_first = tuple(hi if j % 2 == 0 else lo for j in range(switches + 1))
        return [ScenarioControl(lows_first, cuts), ScenarioControl(highs_first, cuts)]
    raise InvalidArgument(f"unknown family kind {kind!r}")


@dataclass(frozen=True, eq=False)
class GBMPath:
    """One G-Brownian path ``B`` and its quadratic-variation clock ``QV``."""

    B: SampledPath
    QV: SampledPath

    @property
    def grid(self) -> TimeGrid:
        return self.B.grid

    @property
    def dB(self) -> np.ndarray:
        return np.diff(self.B.values)

    @property
    def dQV(self) -> np.ndarray:
        return np.diff(self.QV.values)


@dataclass(frozen=True, eq=False)
class PathBatch:
    """Many paths of one scenario: ``B`` has shape ``(m, n + 1)``; ``QV`` is ``(n + 1,)`` or ``(m, n + 1)``."""

    grid: TimeGrid
    B: np.ndarray
    QV: np.ndarray
    path_index: np.ndarray

    def __len__(self):
        return self.B.shape[0]

    def path(self, j: int) -> GBMPath:
        qv = self.QV if self.QV.ndim == 1 else self.QV[j]
        return GBMPath(SampledPath(self.grid, self.B[j]), SampledPath(self.grid, qv))


def _cum(increments: np.ndarray) -> np.ndarray:
    out = np.zeros(increments.shape[:-1] + (increments.shape[-1] + 1,))
    out[..., 1:] = np.cumsum(increments, axis=-1, dtype=np.longdouble)
    return out


def simulate_batch(ctrl: ScenarioControl, grid: TimeGrid, seed: int, scenario: int,
                   paths: Sequence[int], realized_qv: bool = False) -> PathBatch:
    """Paths ``paths`` of scenario ``scenario``: ``dB_i = sqrt(v_i dt) Z_i``.

    The clock increments are ``v_i dt`` (the compensator), or the squared
    increments ``dB_i^2`` when ``realized_qv`` is set.
    """
    paths = np.atleast_1d(np.asarray(paths, dtype=np.int64))
    v = ctrl.rates(grid)
    z = rng.normals(seed, scenario, paths, grid.n)
    dB = np.sqrt(v * grid.dt) * z
    B = _cum(dB)
    QV = _cum(dB * dB) if realized_qv else _cum(v * grid.dt)
    return PathBatch(grid, B, QV, paths)


def simulate_path(ctrl: ScenarioControl, grid: TimeGrid, stream=(0, 0, 0),
                  realized_qv: bool = False) -> GBMPath:
    """Single path from substream ``stream = (seed, scenario, path)`` (an int means ``(seed, 0, 0)``)."""
    if isinstance(stream, (int, np.integer)):
        stream = (int(stream), 0, 0)
    seed, scenario, path = stream
    return simulate_batch(ctrl, grid, seed, scenario, [path], realized_qv).path(0)


def coarsen(path: GBMPath, n: int, realized_qv: bool = False) -> GBMPath:
    """Subsample ``path`` onto ``n`` equal steps; the fine step count must be a multiple of ``n``.

    With ``realized_qv`` the clock is rebuilt from the squared coarse
    increments, otherwise the fine clock is subsampled.
    """
    fine = path.grid
    if n < 1 or fine.n % n:
        raise InvalidArgument(f"{n} steps do not divide the fine grid of {fine.n} steps")
    step = fine.n // n
    grid = TimeGrid(fine.T, n)
    B = path.B.values[::step]
    QV = _cum(np.diff(B) ** 2) if realized_qv else path.QV.values[::step]
    return GBMPath(SampledPath(grid, B), SampledPath(grid, QV))


def quadratic_variation_bounds_check(family: Sequence[ScenarioControl], grid: TimeGrid,
                                     bounds: VolatilityBounds, paths: int = 1, seed: int = 0,
                                     rtol: float = 1e-12) -> dict:
    """Check ``sigma2_min t <= QV_t <= sigma2_max t`` at every node of every simulated path.

    ``rtol`` only absorbs summation rounding in the clock.
    """
    t = grid.nodes
    violations = []
    for j, ctrl in enumerate(family):
        batch = simulate_batch(ctrl, grid, seed, j, range(paths))
        qv = np.broadcast_to(batch.QV, (len(batch), grid.n + 1))
        below = qv < bounds.sigma2_min * t * (1 - rtol)
        above = qv > bounds.sigma2_max * t * (1 + rtol)
        for p, i in zip(*np.nonzero(below | above)):
            violations.append({"scenario": j, "path": int(p), "node": int(i), "qv": float(qv[p, i])})
    return {"checked": len(family) * paths, "violations": violations, "ok": not violations}


# --- functionals -------------------------------------------------------------

Functional = Callable[[PathBatch], np.ndarray]


def per_path(fn: Callable[[GBMPath], float]) -> Functional:
    """Lift a scalar path functional to batches; failures report the path index."""
    def batched(batch: PathBatch) -> np.ndarray:
        out = np.empty(len(batch))
        for j in range(len(batch)):
            try:
                out[j] = float(fn(batch.path(j)))
            except Exception as exc:
                raise FunctionalError(None, int(batch.path_index[j]), exc) from exc
        return out
    return batched


FUNCTIONALS: dict[str, Functional] = {
    "terminal": lambda b: b.B[:, -1],
    "terminal_sq": lambda b: b.B[:, -1] ** 2,
    "terminal_pos": lambda b: np.maximum(b.B[:, -1], 0.0),
    "terminal_abs": lambda b: np.abs(b.B[:, -1]),
    "running_max": lambda b: np.max(b.B, axis=1),
    "qv_terminal": lambda b: np.broadcast_to(b.QV, b.B.shape)[:, -1],
}


@dataclass(frozen=True)
class SublinearEstimate:
    value: float
    argmax: int
    argmax_control: ScenarioControl
    means: tuple[float, ...]
    stderrs: tuple[float, ...]
    paths_per_scenario: int
    family: tuple[ScenarioControl, ...] = field(repr=False, default=())

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "argmax": self.argmax,
            "argmax_control": self.argmax_control.describe(),
            "per_scenario": [{"mean": m, "stderr": s, "control": c.describe()}
                             for m, s, c in zip(self.means, self.stderrs, self.family)],
            "paths_per_scenario": self.paths_per_scenario,
        }


def _scenario_values(functional: Functional, ctrl: ScenarioControl, grid: TimeGrid,
                     n_paths: int, seed: int, scenario: int, batch_size: int,
                     realized_qv: bool) -> np.ndarray:
    chunks = []
    for start in range(0, n_paths, batch_size):
        idx = np.arange(start, min(start + batch_size, n_paths))
        batch = simulate_batch(ctrl, grid, seed, scenario, idx, realized_qv)
        try:
            vals = np.asarray(functional(batch), dtype=np.float64).reshape(len(idx))
        except FunctionalError as exc:
            raise FunctionalError(scenario, exc.path, exc.__cause__) from exc.__cause__
        except Exception as exc:
            raise FunctionalError(scenario, f"{idx[0]}..{idx[-1]}", exc) from exc
        if not np.all(np.isfinite(vals)):
            bad = int(idx[np.flatnonzero(~np.isfinite(vals))[0]])
            raise FunctionalError(scenario, bad, "non-finite value")
        chunks.append(vals)
    return np.concatenate(chunks)


def sublinear_expectation(functional: Functional, family: Sequence[ScenarioControl], grid: TimeGrid,
                          paths_per_scenario: int, base_seed: int = 0, *, batch_size: int = 20000,
                          realized_qv: bool = False, threads: int | None = None) -> SublinearEstimate:
    """Largest per-scenario Monte Carlo mean of ``functional``.

    Scenario ``j`` path ``p`` always uses substream ``(base_seed, j, p)``, and
    each mean is taken over the full value vector in path order, so the
    estimate is independent of batching and thread count.
    """
    family = tuple(family)
    if not family:
        raise InvalidArgument("scenario family is empty")
    if paths_per_scenario < 2:
        raise InvalidArgument("need at least two paths per scenario")

    def one(j):
        vals = _scenario_values(functional, family[j], grid, paths_per_scenario,
                                base_seed, j, batch_size, realized_qv)
        return float(np.mean(vals)), float(np.std(vals, ddof=1) / np.sqrt(len(vals)))

    stats = ordered_map(one, range(len(family)), threads)
    means = tuple(m for m, _ in stats)
    errs = tuple(s for _, s in stats)
    j = int(np.argmax(means))
    return SublinearEstimate(means[j], j, family[j], means, errs, paths_per_scenario, family)


def lower_expectation(functional: Functional, family, grid, paths_per_scenario, base_seed=0, **kw):
    """Lower expectation ``-E[-xi]``, i.e. the smallest per-scenario mean.

    Returns the value and the underlying estimate for ``-xi``.
    """
    neg = sublinear_expectation(lambda b: -np.asarray(functional(b)), family, grid,
                                paths_per_scenario, base_seed, **kw)
    return -neg.value, neg


def family_sensitivity(functional: Functional, bounds: VolatilityBounds, grid: TimeGrid,
                       ms: Sequence[int], paths_per_scenario: int, base_seed: int = 0,
                       **kw) -> list[dict]:
    """Estimate vs. size of the constant family; reported, not claimed to converge."""
    rows = []
    for m in ms:
        est = sublinear_expectation(functional, scenario_family(bounds, "constant", m), grid,
                                    paths_per_scenario, base_seed, **kw)
        rows.append({"m": m, "value": est.value, "stderr": est.stderrs[est.argmax]})
    return rows
