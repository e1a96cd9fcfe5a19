"""Stochastic reference samplers: systematic/random-scan Gibbs and independent draws.

All randomness comes from :class:`RandomStream`, a thin wrapper over numpy's
Philox4x32-10 counter-based generator keyed directly by the seed, so a seed
names the same uniform stream on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .discrete import DiscreteTarget, _strides
from .errors import CapacityError, DegenerateError

__all__ = [
    "RandomStream",
    "GibbsChain",
    "gibbs_sweep",
    "run_gibbs",
    "independent_sample",
    "independent_samples",
]

GENERATOR_ID = "numpy.random.Philox (Philox4x32-10), key=seed, counter=0; split(i) = jumped(i + 1)"


class RandomStream:
    """Replayable uniform stream.

    ``split(i)`` gives the i-th independent child stream by jumping the Philox
    counter ``(i + 1) * 2**128`` steps, so chains parallelize by splitting.
    """

    def __init__(self, seed: int, _jumps: int = 0):
        if not 0 <= int(seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self._jumps = _jumps
        bitgen = np.random.Philox(key=self.seed)
        if _jumps:
            bitgen = bitgen.jumped(_jumps)
        self._gen = np.random.Generator(bitgen)

    def split(self, i: int) -> "RandomStream":
        return RandomStream(self.seed, self._jumps + i + 1)

    def random(self) -> float:
        return float(self._gen.random())

    def uniform(self, size) -> np.ndarray:
        return self._gen.random(size)

    def integers(self, high: int, size) -> np.ndarray:
        return self._gen.integers(0, high, size=size)


def _draw(masses, u):
    tot = float(np.sum(masses))
    if not tot > 0:
        raise DegenerateError("all conditional masses are zero")
    cdf = np.cumsum(masses)
    return min(int(np.searchsorted(cdf, u * tot, side="right")), len(masses) - 1)


def _axis_masses(target: DiscreteTarget, j: int, state: list) -> np.ndarray:
    s = list(state)
    out = np.empty(target.dims[j])
    for v in range(target.dims[j]):
        s[j] = v
        out[v] = target.conditional(j, s) if target.unnorm_prob(s) > 0 else 0.0
    return out


def gibbs_sweep(target: DiscreteTarget, state, rng, order=None, random_scan: bool = False) -> tuple:
    """One Gibbs sweep: resample each axis from its exact conditional.

    Axes are visited in ``order`` (default ascending); ``random_scan`` draws
    ``n_axes`` axes uniformly with replacement instead.  Values are drawn by
    inverse CDF over the unnormalized masses along the axis, consuming one
    uniform per update from ``rng`` (anything with a ``random()`` method).
    """
    s = list(target.check_state(state))
    n = target.n_axes
    if random_scan:
        order = [min(int(rng.random() * n), n - 1) for _ in range(n)]
    elif order is None:
        order = range(n)
    for j in order:
        s[j] = _draw(_axis_masses(target, j, s), rng.random())
    return tuple(s)


@dataclass(frozen=True)
class GibbsChain:
    """Single-site update record: after update ``k`` axis ``axes[k]`` holds ``values[k]``."""

    dims: tuple
    start: tuple
    axes: np.ndarray
    values: np.ndarray

    def __len__(self):
        return len(self.axes)

    @property
    def final(self) -> tuple:
        cur = np.asarray(self.start, dtype=np.int64).copy()
        # last write per axis wins
        last = {}
        for j, v in zip(self.axes[::-1].tolist(), self.values[::-1].tolist()):
            last.setdefault(j, v)
        for j, v in last.items():
            cur[j] = v
        return tuple(cur.tolist())

    def running_means(self, record, values=None) -> np.ndarray:
        """Unweighted running means of axis values after ``K`` updates for each ``K`` in ``record``."""
        if values is None:
            values = np.zeros((len(self.dims), max(self.dims)))
            for j, d in enumerate(self.dims):
                values[j, :d] = np.arange(d)
        return _kernels.running_means(
            np.asarray(self.start, np.int64),
            np.asarray(self.dims, np.int64),
            np.asarray(values, dtype=float),
            self.axes,
            self.values,
            np.ones(len(self.axes)),
            np.asarray(record, np.int64),
            False,
        )

    def flat_states(self) -> np.ndarray:
        return _kernels.flat_path(
            np.asarray(self.start, np.int64),
            np.asarray(self.dims, np.int64),
            _strides(self.dims),
            self.axes,
            self.values,
            False,
        )


def run_gibbs(target: DiscreteTarget, start, n_updates: int, rng: RandomStream, random_scan: bool = False) -> GibbsChain:
    """``n_updates`` single-axis Gibbs updates (systematic scan unless ``random_scan``)."""
    if n_updates < 1:
        raise ValueError("n_updates must be at least 1")
    start = target.check_state(start)
    n = target.n_axes
    if random_scan:
        axes = rng.integers(n, n_updates).astype(np.int32)
    else:
        axes = (np.arange(n_updates) % n).astype(np.int32)
    u = rng.uniform(n_updates)
    cell = np.asarray(start, dtype=np.int64).copy()
    newv = target._gibbs_kernel(cell, axes, u)
    if newv is None:
        s = list(start)
        newv = np.empty(n_updates, np.int32)
        for k in range(n_updates):
            j = int(axes[k])
            s[j] = newv[k] = _draw(_axis_masses(target, j, s), float(u[k]))
    elif len(newv) < n_updates or (len(newv) and newv[-1] < 0):
        raise DegenerateError(f"all conditional masses are zero at update {len(newv) - 1}")
    return GibbsChain(tuple(target.dims), start, axes, np.asarray(newv, np.int32))


def _full_table(target):
    if not hasattr(target, "probabilities"):
        if hasattr(target, "to_table"):
            target = target.to_table()
        else:
            raise CapacityError("independent sampling needs a full normalized table")
    return target.probabilities()


def independent_sample(target: DiscreteTarget, rng) -> tuple:
    """Exact categorical draw over the row-major flattened table."""
    p = _full_table(target).ravel()
    flat = _draw(p, rng.random())
    return tuple(int(v) for v in np.unravel_index(flat, target.dims))


def independent_samples(target: DiscreteTarget, n: int, rng: RandomStream) -> np.ndarray:
    """``n`` independent draws as flat row-major indices."""
    p = _full_table(target).ravel()
    cdf = np.cumsum(p)
    idx = np.searchsorted(cdf, rng.uniform(n) * cdf[-1], side="right")
    return np.minimum(idx, len(p) - 1)
