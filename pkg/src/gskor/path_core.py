"""Uniform-grid sampled paths and the running envelopes built on them.

All sup/inf operations treat a path as its set of node values: the supremum
over ``[s, t]`` is the maximum over the grid nodes lying in ``[s, t]``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .errors import GridMismatch, InvalidArgument


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = i*T/n`` on ``[0, T]``."""

    T: float
    n: int

    def __post_init__(self):
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 1):
            raise InvalidArgument(f"step count must be an integer >= 1, got {self.n!r}")
        if not (np.isfinite(self.T) and self.T > 0):
            raise InvalidArgument(f"horizon must be positive, got {self.T!r}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "n", int(self.n))

    @property
    def dt(self) -> float:
        return self.T / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.T / self.n

    def __len__(self):
        return self.n + 1


def make_grid(T: float, n: int) -> TimeGrid:
    return TimeGrid(T, n)


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SampledPath:
    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.ndim != 1 or vals.shape[0] != self.grid.n + 1:
            raise InvalidArgument(
                f"path needs {self.grid.n + 1} values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise InvalidArgument(f"non-finite path value at node {bad}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: TimeGrid, c: float):
        return cls(grid, np.full(grid.n + 1, float(c)))

    @classmethod
    def from_function(cls, grid: TimeGrid, fn):
        return cls(grid, np.broadcast_to(fn(grid.nodes), (grid.n + 1,)))

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    def __len__(self):
        return self.values.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def with_values(self, values) -> "SampledPath":
        return SampledPath(self.grid, values)


class MonotonePath(SampledPath):
    """A sampled path whose node values never decrease."""

    def __post_init__(self):
        super().__post_init__()
        steps = np.diff(self.values)
        if np.any(steps < 0):
            i = int(np.flatnonzero(steps < 0)[0])
            raise InvalidArgument(f"path decreases between nodes {i} and {i + 1}")


def check_same_grid(*paths: SampledPath) -> TimeGrid:
    grid = paths[0].grid
    for p in paths[1:]:
        if p.grid != grid:
            raise GridMismatch(f"grids differ: {grid} vs {p.grid}")
    return grid


def running_sup(p: SampledPath) -> SampledPath:
    return p.with_values(np.maximum.accumulate(p.values))


def running_inf(p: SampledPath) -> SampledPath:
    return p.with_values(np.minimum.accumulate(p.values))


# The two envelopes below reduce to one-state recursions. For the dual
# envelope, every candidate start s < t updates as max(v_s, psi_t), and
# min_s max(v_s, c) == max(min_s v_s, c), so the whole candidate set is
# summarised by its minimum. Only min/max are used, so results are exact.

@njit(cache=True, nogil=True)
def _dual_envelope(phi, psi):
    out = np.empty_like(phi)
    cur = np.inf
    for i in range(phi.shape[0]):
        if phi[i] < cur:
            cur = phi[i]
        if psi[i] > cur:
            cur = psi[i]
        out[i] = cur
    return out


@njit(cache=True, nogil=True)
def _gamma_envelope(a, b):
    out = np.empty_like(a)
    cur = -np.inf
    for i in range(a.shape[0]):
        if a[i] > cur:
            cur = a[i]
        if b[i] < cur:
            cur = b[i]
        out[i] = cur
    return out


def dual_envelope_array(phi: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """``inf_{s<=t} [phi_s v sup_{r in [s,t]} psi_r]`` node-wise, in O(n)."""
    return _dual_envelope(np.ascontiguousarray(phi, dtype=np.float64),
                          np.ascontiguousarray(psi, dtype=np.float64))


def gamma_envelope_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``sup_{s<=t} [a_s ^ inf_{r in [s,t]} b_r]`` node-wise, in O(n)."""
    return _gamma_envelope(np.ascontiguousarray(a, dtype=np.float64),
                           np.ascontiguousarray(b, dtype=np.float64))


def dual_envelope(phi: SampledPath, psi: SampledPath) -> SampledPath:
    check_same_grid(phi, psi)
    return phi.with_values(dual_envelope_array(phi.values, psi.values))


def gamma_envelope(a: SampledPath, b: SampledPath) -> SampledPath:
    check_same_grid(a, b)
    return a.with_values(gamma_envelope_array(a.values, b.values))


def _coarse_step(grid: TimeGrid, n: int) -> int:
    if n < 1 or grid.n % n:
        raise InvalidArgument(f"coarse step count {n} must divide the fine step count {grid.n}")
    return grid.n // n


def coarse_gamma(a: SampledPath, b: SampledPath, n: int) -> SampledPath:
    """Discretized envelope built from ``n`` equal cells, evaluated on the fine grid.

    For ``t`` in ``[t_k, t_{k+1})`` the value is
    ``max_{j<=k} [a_{t_j} ^ min_{j<=i<=k} b_{t_i} ^ b_t]  v  [a_t ^ b_t]``.
    """
    grid = check_same_grid(a, b)
    step = _coarse_step(grid, n)
    G = gamma_envelope_array(a.values[::step], b.values[::step])
    k = np.minimum(np.arange(grid.n + 1) // step, n)
    return a.with_values(np.maximum(np.minimum(G[k], b.values), np.minimum(a.values, b.values)))


def cell_oscillation(p: SampledPath, n: int) -> float:
    """Largest ``max - min`` of ``p`` over the closed cells of an ``n``-cell partition."""
    step = _coarse_step(p.grid, n)
    v = p.values
    cells = np.lib.stride_tricks.sliding_window_view(v, step + 1)[::step]
    return float(np.max(np.ptp(cells, axis=1)))


def dual_envelope_bruteforce(phi: SampledPath, psi: SampledPath) -> SampledPath:
    """Definition-direct O(n^2) evaluation, kept as an oracle."""
    check_same_grid(phi, psi)
    f, g = phi.values, psi.values
    out = np.empty_like(f)
    for t in range(len(f)):
        # sup of psi over [s, t] for every s <= t: reversed running max
        inner = np.maximum.accumulate(g[t::-1])[::-1]
        out[t] = np.min(np.maximum(f[: t + 1], inner))
    return phi.with_values(out)


def gamma_envelope_bruteforce(a: SampledPath, b: SampledPath) -> SampledPath:
    """Definition-direct O(n^2) evaluation, kept as an oracle."""
    check_same_grid(a, b)
    x, y = a.values, b.values
    out = np.empty_like(x)
    for t in range(len(x)):
        inner = np.minimum.accumulate(y[t::-1])[::-1]
        out[t] = np.max(np.minimum(x[: t + 1], inner))
    return a.with_values(out)


def stieltjes_integral(x: SampledPath, k: SampledPath) -> float:
    """Left-endpoint sum ``sum_i x_{t_i} (k_{t_{i+1}} - k_{t_i})``."""
    check_same_grid(x, k)
    return float(np.dot(x.values[:-1], np.diff(k.values)))


def sup_distance(p: SampledPath, q: SampledPath) -> float:
    check_same_grid(p, q)
    return float(np.max(np.abs(p.values - q.values)))


# --- CSV I/O ---------------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def write_columns_csv(path, grid: TimeGrid, columns: dict[str, np.ndarray]) -> None:
    """Write ``t`` plus named columns, one row per node, round-trip precision."""
    names = list(columns)
    t = grid.nodes
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *names])
        for i in range(grid.n + 1):
            w.writerow([_fmt(t[i]), *(_fmt(columns[c][i]) for c in names)])


def write_path_csv(path, p: SampledPath) -> None:
    write_columns_csv(path, p.grid, {"value": p.values})


def read_path_csv(path) -> SampledPath:
    """Read a ``t,value`` CSV; the time column must be a uniform grid from 0."""
    rows = []
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header[:2] != ["t", "value"]:
            raise InvalidArgument(f"{path}: expected header 't,value', got {','.join(header)}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError) as exc:
                raise InvalidArgument(f"{path}:{line_no}: {exc}") from None
    if len(rows) < 2:
        raise InvalidArgument(f"{path}: need at least two rows")
    t = np.array([r[0] for r in rows])
    grid = TimeGrid(t[-1], len(rows) - 1)
    if t[0] != 0.0 or np.max(np.abs(t - grid.nodes)) > 1e-9 * grid.T:
        raise InvalidArgument(f"{path}: time column is not a uniform grid starting at 0")
    return SampledPath(grid, [r[1] for r in rows])
