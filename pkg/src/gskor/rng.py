"""Counter-based normal substreams.

Every variate is a pure function of ``(seed, scenario, path, step)``: the
first three coordinates are hashed into a stream key, and the step index
drives a SplitMix64 counter under that key. Results therefore do not depend
on how paths are batched or scheduled.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TAGS = (np.uint64(0xD1B54A32D192ED03), np.uint64(0x8CB92BA72F3D8DD7), np.uint64(0xF1357AEA2E62A9C5))
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    return z ^ (z >> np.uint64(31))


def stream_keys(seed: int, scenario: int, paths) -> np.ndarray:
    """One 64-bit key per path index."""
    paths = np.atleast_1d(np.asarray(paths, dtype=np.int64)).astype(np.uint64)
    with np.errstate(over="ignore"):
        k = _mix(np.full(paths.shape, int(seed) & _MASK, dtype=np.uint64) * _TAGS[0] + _GOLDEN)
        k = _mix(k ^ (np.uint64(int(scenario) & _MASK) * _TAGS[1]))
        k = _mix(k ^ (paths * _TAGS[2]))
    return k


def uniforms(seed: int, scenario: int, paths, n_steps: int) -> np.ndarray:
    """Uniforms in the open interval (0, 1), shape ``(len(paths), n_steps)``."""
    keys = stream_keys(seed, scenario, paths)
    steps = np.arange(1, n_steps + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = _mix(keys[:, None] + steps[None, :] * _GOLDEN)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0 ** -53)


def normals(seed: int, scenario: int, paths, n_steps: int) -> np.ndarray:
    """Standard normals by inverse CDF, shape ``(len(paths), n_steps)``."""
    return ndtri(uniforms(seed, scenario, paths, n_steps))


def trial_rng(seed: int, *coords: int) -> np.random.Generator:
    """Independent numpy generator for one trial of a randomized campaign."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & _MASK, *map(int, coords)]))
