"""Event-driven dynamical Gibbs on dequantized discrete distributions.

Each discrete state ``(i_1, ..., i_n)`` is a unit cell of constant density.
Inside a cell the velocity is constant, ``v_j = c_j * axis_sum_j / p``, so the
particle moves on a straight line and the only work is finding which face it
hits first.  Every visited state is emitted together with the time spent in
it; time-weighted averages over the emitted states are unbiased for the
target.  Motion is always in the ``+`` direction; each axis wraps modulo
``d_j``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from . import _kernels
from .errors import CapacityError, ConsistencyError, DegenerateError
from .fields import Coefficients, as_coefficients

__all__ = [
    "DiscreteTarget",
    "CellState",
    "WeightedSample",
    "EventTrace",
    "boundary_times",
    "advance_event",
    "run_events",
    "weighted_expectation",
    "weighted_histogram",
    "weighted_axis_means",
    "running_axis_means",
]

ONE_MINUS = _kernels.ONE_MINUS
MATERIALIZE_LIMIT = 50_000_000


class DiscreteTarget:
    """Unnormalized distribution over ``prod(range(d_j))``.

    Subclasses implement :meth:`unnorm_prob`; :meth:`axis_sum` and
    :meth:`conditional` default to brute-force summation along one axis.
    ``axis_values`` maps cell indices to the numeric value reported by
    estimators (``0..d-1`` unless overridden, e.g. spins use ``-1, +1``).
    """

    dims: tuple

    @property
    def n_axes(self) -> int:
        return len(self.dims)

    @property
    def n_states(self) -> int:
        return math.prod(self.dims)

    def unnorm_prob(self, state) -> float:
        raise NotImplementedError

    def axis_sum(self, j: int, state) -> float:
        s = list(state)
        total = 0.0
        for v in range(self.dims[j]):
            s[j] = v
            total += self.unnorm_prob(s)
        return total

    def conditional(self, j: int, state) -> float:
        """``p(state) / axis_sum_j(state)``, with 0 for zero-mass states."""
        p = self.unnorm_prob(state)
        if p == 0.0:
            return 0.0
        return p / self.axis_sum(j, state)

    def axis_values(self) -> np.ndarray:
        """``(n_axes, max_d)`` table of per-axis values indexed by cell index."""
        out = np.zeros((self.n_axes, max(self.dims)))
        for j, d in enumerate(self.dims):
            out[j, :d] = np.arange(d)
        return out

    def check_state(self, state) -> tuple:
        s = tuple(int(v) for v in state)
        if len(s) != self.n_axes or any(not 0 <= v < d for v, d in zip(s, self.dims)):
            raise ValueError(f"state {state} is not in the grid {self.dims}")
        return s

    # Compiled fast paths; ``None`` means "use the Python reference loop".
    def _events_kernel(self, c, cell, off, t, n_events):
        return None

    def _gibbs_kernel(self, cell, axes, uniforms):
        return None


@dataclass(frozen=True)
class CellState:
    """Position in the dequantized grid: integer cell, offset in ``[0,1)^n``, flow time."""

    cell: tuple
    offset: tuple
    time: float = 0.0

    def __post_init__(self):
        cell = tuple(int(v) for v in self.cell)
        off = tuple(float(v) for v in self.offset)
        if len(cell) != len(off):
            raise ValueError("cell and offset lengths differ")
        if any(not 0.0 <= o < 1.0 for o in off):
            raise ValueError(f"offsets must lie in [0, 1): {off}")
        if not self.time >= 0:
            raise ValueError("time must be non-negative")
        object.__setattr__(self, "cell", cell)
        object.__setattr__(self, "offset", off)
        object.__setattr__(self, "time", float(self.time))

    @classmethod
    def initial(cls, dims: Sequence[int], offset: float = 0.5) -> "CellState":
        """Default start: cell all zeros, every offset ``offset``."""
        return cls(tuple(0 for _ in dims), tuple(offset for _ in dims))

    @classmethod
    def from_point(cls, point, dims: Sequence[int]) -> "CellState":
        """Split a continuous point of ``[0, d_1) x ... x [0, d_n)`` into cell and offset."""
        x = np.asarray(point, dtype=float)
        cell = np.minimum(np.floor(x).astype(np.int64), np.asarray(dims) - 1)
        off = np.minimum(x - cell, ONE_MINUS)
        return cls(tuple(cell.tolist()), tuple(off.tolist()))

    def validate(self, dims) -> None:
        if len(self.cell) != len(dims) or any(not 0 <= v < d for v, d in zip(self.cell, dims)):
            raise ValueError(f"cell {self.cell} outside grid {tuple(dims)}")


@dataclass(frozen=True)
class WeightedSample:
    state: tuple
    dwell: float


@dataclass(frozen=True)
class EventTrace:
    """Sequence of weighted samples stored compactly.

    Sample ``k`` is the cell occupied before event ``k``; event ``k`` leaves
    through axis ``axes[k]`` after ``dwell[k]`` time units.  Full states are
    rebuilt on demand.
    """

    dims: tuple
    start: CellState
    axes: np.ndarray
    dwell: np.ndarray
    final: CellState
    zero_mass_events: int = 0

    def __len__(self):
        return len(self.axes)

    @property
    def total_time(self) -> float:
        return self.final.time - self.start.time

    def __iter__(self) -> Iterator[WeightedSample]:
        cur = list(self.start.cell)
        for j, w in zip(self.axes.tolist(), self.dwell.tolist()):
            yield WeightedSample(tuple(cur), w)
            cur[j] = (cur[j] + 1) % self.dims[j]

    def __getitem__(self, k: int) -> WeightedSample:
        if k < 0:
            k += len(self)
        if not 0 <= k < len(self):
            raise IndexError(k)
        counts = np.bincount(self.axes[:k], minlength=len(self.dims))
        state = (np.asarray(self.start.cell) + counts) % np.asarray(self.dims)
        return WeightedSample(tuple(state.tolist()), float(self.dwell[k]))

    def states(self) -> np.ndarray:
        """All sampled states as an ``(n_events, n_axes)`` array."""
        n = len(self.dims)
        if len(self) * n > MATERIALIZE_LIMIT:
            raise CapacityError("trace too large to materialize; use the streaming helpers")
        onehot = np.zeros((len(self), n), dtype=np.int64)
        onehot[np.arange(len(self))[1:], self.axes[:-1]] = 1
        return (np.asarray(self.start.cell) + np.cumsum(onehot, axis=0)) % np.asarray(self.dims)

    def flat_states(self) -> np.ndarray:
        """Row-major flat index of every sampled state."""
        dims = np.asarray(self.dims, dtype=np.int64)
        strides = _strides(self.dims)
        return _kernels.flat_path(
            np.asarray(self.start.cell, np.int64), dims, strides, self.axes, np.empty(0, np.int32), True
        )


def _strides(dims) -> np.ndarray:
    strides = np.ones(len(dims), dtype=np.int64)
    for j in range(len(dims) - 2, -1, -1):
        strides[j] = strides[j + 1] * dims[j + 1]
    return strides


def boundary_times(target: DiscreteTarget, c, s: CellState) -> np.ndarray:
    """Time to reach the upper face of the current cell along each axis.

    ``tau_j = (1 - offset_j) * p / (c_j * axis_sum_j)``; the product form makes
    every ``tau_j`` zero in a zero-mass cell instead of ``inf / inf``.
    """
    c = np.asarray(as_coefficients(c, target.n_axes))
    out = np.empty(target.n_axes)
    for j in range(target.n_axes):
        q = target.conditional(j, s.cell)
        if not 0.0 <= q <= 1.0:
            raise ConsistencyError(f"conditional {q} outside [0, 1] on axis {j} at {s.cell}")
        out[j] = (1.0 - s.offset[j]) * q / c[j]
    return out


def _advance(target, c, s):
    n = target.n_axes
    cond = [target.conditional(j, s.cell) for j in range(n)]
    tau = [(1.0 - s.offset[j]) * cond[j] / c[j] for j in range(n)]
    off = list(s.offset)
    zero_mass = all(q == 0.0 for q in cond)
    if zero_mass:
        # limit of a vanishing cell mass: direction c_j * S_j, crossed in zero time
        weights = [c[j] * target.axis_sum(j, s.cell) for j in range(n)]
        best, tmin = 0, 0.0
        best_s = math.inf
        for j in range(n):
            if weights[j] > 0.0:
                sj = (1.0 - off[j]) / weights[j]
                if sj < best_s:
                    best, best_s = j, sj
        if best_s < math.inf:
            for j in range(n):
                if j != best and weights[j] > 0.0:
                    o = off[j] + best_s * weights[j]
                    off[j] = ONE_MINUS if o >= 1.0 else o
    else:
        best, tmin = 0, tau[0]
        for j in range(1, n):
            if tau[j] < tmin:
                best, tmin = j, tau[j]
        if tmin > 0.0:
            for j in range(n):
                if j != best:
                    o = off[j] + tmin * (c[j] / cond[j])
                    off[j] = ONE_MINUS if o >= 1.0 else o
    off[best] = 0.0
    cell = list(s.cell)
    cell[best] = (cell[best] + 1) % target.dims[best]
    nxt = CellState(tuple(cell), tuple(off), s.time + tmin)
    return nxt, WeightedSample(s.cell, tmin), best, zero_mass


def advance_event(target: DiscreteTarget, c, s: CellState) -> tuple[CellState, WeightedSample]:
    """Move to the first face hit and emit the sample for the cell just left.

    Ties go to the lowest axis index.  A zero-mass cell is crossed in zero
    time along the direction ``(c_j * axis_sum_j)_j``, the limit of the flow
    as the cell mass goes to zero; the exit face is the first one hit in that
    direction.  If every axis sum vanishes the particle leaves along axis 0.
    """
    c = np.asarray(as_coefficients(c, target.n_axes))
    s.validate(target.dims)
    nxt, sample, _, _ = _advance(target, c, s)
    return nxt, sample


def _trace_from_loop(target, c, s0, n_events):
    c = np.asarray(c)
    axes = np.empty(n_events, np.int32)
    dwell = np.empty(n_events)
    zero = 0
    s = s0
    for k in range(n_events):
        s, sample, axes[k], zm = _advance(target, c, s)
        dwell[k] = sample.dwell
        zero += zm
    return EventTrace(tuple(target.dims), s0, axes, dwell, s, zero)


def run_events(target: DiscreteTarget, c, s0: CellState | None = None, n_events: int = 1) -> EventTrace:
    """Apply ``n_events`` consecutive boundary events starting from ``s0``.

    Uses the target's compiled kernel when it has one; otherwise loops over
    :func:`advance_event`.
    """
    if n_events < 1:
        raise ValueError("n_events must be at least 1")
    coeffs = as_coefficients(c, target.n_axes)
    if s0 is None:
        s0 = CellState.initial(target.dims)
    s0.validate(target.dims)
    cvec = np.asarray(coeffs)
    cell = np.asarray(s0.cell, dtype=np.int64).copy()
    off = np.asarray(s0.offset, dtype=float).copy()
    res = target._events_kernel(cvec, cell, off, s0.time, int(n_events))
    if res is None:
        return _trace_from_loop(target, coeffs, s0, n_events)
    axes, dwell, t, zero = res
    final = CellState(tuple(cell.tolist()), tuple(off.tolist()), t)
    return EventTrace(tuple(target.dims), s0, axes, dwell, final, int(zero))


def _kahan(values, weights):
    total = np.zeros(values.shape[1:]) if values.ndim > 1 else 0.0
    comp = np.zeros_like(total)
    for v, w in zip(values, weights):
        y = w * v - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def weighted_expectation(trace: EventTrace, f: Callable, compensated: bool = False) -> np.ndarray:
    """Dwell-weighted mean ``sum_k t_k f(x_k) / sum_k t_k``.

    Accumulation is left to right in double precision; ``compensated`` switches
    to Kahan summation for the numerator and the denominator.
    """
    total = trace.total_time
    if not total > 0:
        raise DegenerateError("trace has zero total time")
    num = None
    den = 0.0
    if compensated:
        vals = np.array([np.atleast_1d(np.asarray(f(ws.state), dtype=float)) for ws in trace])
        num = _kahan(vals, trace.dwell)
        den = _kahan(np.ones(len(trace)), trace.dwell)
    else:
        for ws in trace:
            fv = np.atleast_1d(np.asarray(f(ws.state), dtype=float))
            num = ws.dwell * fv if num is None else num + ws.dwell * fv
            den += ws.dwell
    if not den > 0:
        raise DegenerateError("trace has zero total time")
    return np.asarray(num) / den


def weighted_histogram(trace: EventTrace, dims: Sequence[int] | None = None) -> np.ndarray:
    """Fraction of flow time spent in every state, shaped like the grid."""
    dims = tuple(trace.dims if dims is None else dims)
    if dims != tuple(trace.dims):
        raise ValueError("dims do not match the trace")
    if math.prod(dims) > MATERIALIZE_LIMIT:
        raise CapacityError("state space too large for a dense histogram")
    total = float(np.sum(trace.dwell))
    if not total > 0:
        raise DegenerateError("trace has zero total time")
    h = np.bincount(trace.flat_states(), weights=trace.dwell, minlength=math.prod(dims))
    return (h / total).reshape(dims)


def weighted_axis_means(trace: EventTrace, values: np.ndarray | None = None) -> np.ndarray:
    """Dwell-weighted mean of every axis value over the whole trace."""
    return running_axis_means(trace, [len(trace)], values)[0]


def running_axis_means(trace: EventTrace, record: Sequence[int], values: np.ndarray | None = None) -> np.ndarray:
    """Dwell-weighted running means after the first ``K`` samples, for each ``K`` in ``record``."""
    if values is None:
        values = np.zeros((len(trace.dims), max(trace.dims)))
        for j, d in enumerate(trace.dims):
            values[j, :d] = np.arange(d)
    rec = np.asarray(record, dtype=np.int64)
    if np.any(np.diff(rec) <= 0) or rec[0] < 1 or rec[-1] > len(trace):
        raise ValueError("record must be increasing sample counts within the trace")
    if not float(np.sum(trace.dwell[: rec[0]])) > 0:
        raise DegenerateError("zero accumulated time at the first record point")
    return _kernels.running_means(
        np.asarray(trace.start.cell, np.int64),
        np.asarray(trace.dims, np.int64),
        np.asarray(values, dtype=float),
        trace.axes,
        np.empty(0, np.int32),
        trace.dwell,
        rec,
        True,
    )


def all_states(dims: Sequence[int]):
    return itertools.product(*(range(d) for d in dims))
