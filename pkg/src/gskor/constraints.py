"""Nonlinear time-dependent constraints and their inverse-at-zero obstacles.

A constraint is a function ``c(t, x)`` strictly increasing in ``x``. A pair
consists of a lower pusher ``r`` (the state must satisfy ``r(t, x) >= 0``)
and an upper puller ``l`` (``l(t, x) <= 0``). The reflection only ever sees
the roots ``r^-1(t, 0)`` and ``l^-1(t, 0)``, cached here as obstacle paths.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgument, RootNotFound, SeparationViolation
from .path_core import SampledPath, TimeGrid, check_same_grid

SMALL_GAP = 1e-6
_BRACKET_CAP = 2 ** 20
_N_PROBES = 64


class SmallGapWarning(UserWarning):
    pass


def rho(x):
    """Signed square root."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.sqrt(np.abs(x))


def rho_inv(y):
    """Signed square, the inverse of :func:`rho`."""
    y = np.asarray(y, dtype=np.float64)
    return np.sign(y) * y * y


def cubic_link(x):
    x = np.asarray(x, dtype=np.float64)
    return x ** 3 + x


# Strictly increasing links usable as ``link(x) - obstacle_t``. Entries carry
# a closed-form inverse when one exists; None forces bisection.
LINKS: dict[str, tuple[Callable, Optional[Callable]]] = {
    "identity": (lambda x: np.asarray(x, dtype=np.float64), lambda y: np.asarray(y, dtype=np.float64)),
    "rho": (rho, rho_inv),
    "cubic": (cubic_link, None),
    "sinh": (np.sinh, np.arcsinh),
}


@dataclass(frozen=True, eq=False)
class ConstraintFunction:
    """``evaluate(t, x)`` vectorised over numpy arrays, strictly increasing in x.

    ``inverse(t)`` optionally returns the root ``x`` with ``c(t, x) = 0``;
    otherwise roots are found by bisection from ``[center - width, center + width]``.
    Strict increase is spot-checked with random probes on ``[0, horizon]``.
    """

    evaluate: Callable[[np.ndarray, np.ndarray], np.ndarray]
    inverse: Optional[Callable[[np.ndarray], np.ndarray]] = None
    width: float = 10.0
    tol: float = 1e-12
    center: float = 0.0
    horizon: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        if not self.width > 0:
            raise InvalidArgument("bracket width must be positive")
        self._probe_monotone()

    def __call__(self, t, x):
        return self.evaluate(np.asarray(t, dtype=np.float64), np.asarray(x, dtype=np.float64))

    def _probe_monotone(self):
        rng = np.random.default_rng(0x5EED)
        t = rng.uniform(0.0, self.horizon, _N_PROBES)
        x = rng.uniform(-self.width, self.width, (2, _N_PROBES)) + self.center
        lo, hi = np.min(x, axis=0), np.max(x, axis=0)
        hi = np.where(hi > lo, hi, lo + 1.0)
        clo, chi = self(t, lo), self(t, hi)
        bad = ~(clo < chi)
        if np.any(bad):
            j = int(np.flatnonzero(bad)[0])
            raise InvalidArgument(
                f"{self.name}: not strictly increasing in x at t={t[j]!r} "
                f"(c({lo[j]!r})={clo[j]!r} >= c({hi[j]!r})={chi[j]!r})")


def inverse_at_zero(c: ConstraintFunction, grid: TimeGrid) -> SampledPath:
    """Path of roots ``x_i`` with ``|c(t_i, x_i)| <= c.tol``."""
    t = grid.nodes
    if c.inverse is not None:
        x = np.broadcast_to(np.asarray(c.inverse(t), dtype=np.float64), t.shape).copy()
        return SampledPath(grid, x)
    return SampledPath(grid, _bisect_roots(c, t))


def _bisect_roots(c: ConstraintFunction, t: np.ndarray) -> np.ndarray:
    width = np.full(t.shape, float(c.width))
    lo = c.center - width
    hi = c.center + width
    # widen each node's bracket until it straddles the root
    while True:
        flo, fhi = c(t, lo), c(t, hi)
        need = ~((flo <= 0) & (fhi >= 0))
        if not np.any(need):
            break
        if np.any(width[need] >= c.width * _BRACKET_CAP):
            raise RootNotFound(int(np.flatnonzero(need & (width >= c.width * _BRACKET_CAP))[0]))
        width[need] *= 2.0
        lo[need] = c.center - width[need]
        hi[need] = c.center + width[need]
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        active = (mid > lo) & (mid < hi)
        if not np.any(active):
            break
        fm = c(t, mid)
        go_up = active & (fm < 0)
        go_down = active & (fm >= 0)
        lo = np.where(go_up, mid, lo)
        hi = np.where(go_down, mid, hi)
    flo, fhi = np.abs(c(t, lo)), np.abs(c(t, hi))
    x = np.where(flo <= fhi, lo, hi)
    resid = np.minimum(flo, fhi)
    if np.any(resid > c.tol):
        raise RootNotFound(int(np.flatnonzero(resid > c.tol)[0]),
                           f"residual above {c.tol!r} after bisection")
    return x


@dataclass(frozen=True, eq=False)
class ConstraintPair:
    """Lower pusher ``r`` and upper puller ``l`` with cached obstacle paths.

    ``lower[i] = r^-1(t_i, 0)`` and ``upper[i] = l^-1(t_i, 0)``. The original
    functions are kept only to evaluate flat-off residuals.
    """

    lower: SampledPath
    upper: SampledPath
    r: Optional[ConstraintFunction] = field(default=None, repr=False)
    l: Optional[ConstraintFunction] = field(default=None, repr=False)
    kind: str = "band"

    def __post_init__(self):
        check_same_grid(self.lower, self.upper)
        validate_separation(self)

    @property
    def grid(self) -> TimeGrid:
        return self.lower.grid

    @property
    def gap(self) -> float:
        return float(np.min(self.upper.values - self.lower.values))

    def r_values(self, x: np.ndarray) -> np.ndarray:
        """``r(t_i, x_i)`` node-wise; linear form ``x - lower`` when no function is stored."""
        if self.r is None:
            return x - self.lower.values
        return self.r(self.grid.nodes, x)

    def l_values(self, x: np.ndarray) -> np.ndarray:
        if self.l is None:
            return x - self.upper.values
        return self.l(self.grid.nodes, x)


def validate_separation(pair: ConstraintPair) -> float:
    """Minimum of ``upper - lower``; raises when it is not positive."""
    diff = pair.upper.values - pair.lower.values
    i = int(np.argmin(diff))
    gap = float(diff[i])
    if not gap > 0:
        raise SeparationViolation(gap, i)
    if gap < SMALL_GAP:
        warnings.warn(f"obstacle gap {gap!r} is tiny; reflection is ill-conditioned",
                      SmallGapWarning, stacklevel=2)
    return gap


def _as_path(grid: TimeGrid, v) -> SampledPath:
    if isinstance(v, SampledPath):
        return v
    return SampledPath(grid, np.broadcast_to(np.asarray(v, dtype=np.float64), (grid.n + 1,)))


def _grid_of(*vs) -> TimeGrid:
    for v in vs:
        if isinstance(v, SampledPath):
            return v.grid
    raise InvalidArgument("at least one obstacle must be a SampledPath")


def _node_index(grid: TimeGrid, t) -> np.ndarray:
    return np.clip(np.rint(np.asarray(t) / grid.dt).astype(np.int64), 0, grid.n)


def make_band_pair(alpha, beta, grid: TimeGrid | None = None) -> ConstraintPair:
    """Linear constraints ``r(t, x) = x - alpha_t``, ``l(t, x) = x - beta_t``.

    ``alpha``/``beta`` are paths or scalars (scalars need ``grid``).
    """
    grid = grid or _grid_of(alpha, beta)
    a, b = _as_path(grid, alpha), _as_path(grid, beta)
    return ConstraintPair(lower=a, upper=b, kind="band")


def make_link_pair(link: str, alpha, beta, grid: TimeGrid | None = None, **fn_opts) -> ConstraintPair:
    """Constraints ``r(t, x) = link(x) - alpha_t`` and ``l(t, x) = link(x) - beta_t``."""
    if link not in LINKS:
        raise InvalidArgument(f"unknown link {link!r}; choose from {sorted(LINKS)}")
    fwd, inv = LINKS[link]
    grid = grid or _grid_of(alpha, beta)
    a, b = _as_path(grid, alpha), _as_path(grid, beta)
    if not np.min(b.values - a.values) > 0:
        raise SeparationViolation(np.min(b.values - a.values), int(np.argmin(b.values - a.values)))
    opts = dict(horizon=grid.T, **fn_opts)

    def at_nodes(obstacle):
        vals = obstacle.values
        return lambda t, x: fwd(x) - vals[_node_index(grid, t)]

    def inverse_of(obstacle):
        if inv is None:
            return None
        vals = obstacle.values
        return lambda t: inv(vals[_node_index(grid, t)])

    r = ConstraintFunction(at_nodes(a), inverse_of(a), name=f"{link}-lower", **opts)
    l = ConstraintFunction(at_nodes(b), inverse_of(b), name=f"{link}-upper", **opts)
    lower = inverse_at_zero(r, grid)
    upper = inverse_at_zero(l, grid)
    return ConstraintPair(lower=lower, upper=upper, r=r, l=l, kind=link)


def make_rho_pair(alpha, beta, grid: TimeGrid | None = None) -> ConstraintPair:
    """``r(t, x) = rho(x) - alpha_t``, ``l(t, x) = rho(x) - beta_t`` with signed sqrt ``rho``."""
    return make_link_pair("rho", alpha, beta, grid)


def make_pair(r: ConstraintFunction, l: ConstraintFunction, grid: TimeGrid) -> ConstraintPair:
    """Pair from arbitrary constraint functions; obstacles found by inversion."""
    return ConstraintPair(lower=inverse_at_zero(r, grid), upper=inverse_at_zero(l, grid),
                          r=r, l=l, kind="custom")
