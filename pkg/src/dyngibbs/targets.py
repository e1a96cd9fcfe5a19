"""Concrete discrete targets, data loaders and exact-enumeration oracles."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .discrete import DiscreteTarget, _strides, all_states
from .errors import CapacityError, ParseError

__all__ = [
    "TableTarget",
    "ImageTarget",
    "IsingTarget",
    "LogRegTarget",
    "ExactMoments",
    "load_pgm",
    "write_pgm",
    "ising_axis_sum",
    "logreg_axis_sum",
    "enumerate_exact",
    "load_csv_dataset",
    "load_dataset",
    "synthetic_image",
    "ENUMERATION_LIMIT",
]

ENUMERATION_LIMIT = 2**20


class TableTarget(DiscreteTarget):
    """Target given by a dense table of masses (or log masses).

    Conditionals and axis sums of every state along every axis are
    precomputed, so one event costs ``O(n_axes)``.
    """

    def __init__(self, table=None, *, log_table=None, values: np.ndarray | None = None):
        if (table is None) == (log_table is None):
            raise ValueError("give exactly one of table / log_table")
        if table is not None:
            t = np.asarray(table, dtype=float)
            if t.ndim == 0 or not np.all(np.isfinite(t)) or np.any(t < 0):
                raise ValueError("table entries must be finite and non-negative")
            if not np.any(t > 0):
                raise ValueError("table has no positive entry")
            with np.errstate(divide="ignore"):
                lt = np.log(t)
            self._mass = t
        else:
            lt = np.asarray(log_table, dtype=float)
            if lt.ndim == 0 or np.any(np.isnan(lt)) or np.any(lt == np.inf):
                raise ValueError("log table entries must be < +inf and not NaN")
            if not np.any(np.isfinite(lt)):
                raise ValueError("log table has no finite entry")
            self._mass = np.exp(lt)
        self._log = lt
        self.dims = tuple(int(d) for d in lt.shape)
        n = len(self.dims)
        cond = np.empty((n, lt.size))
        axsum = np.empty((n, lt.size))
        for j in range(n):
            if table is not None:
                s = np.broadcast_to(self._mass.sum(axis=j, keepdims=True), self.dims)
                with np.errstate(divide="ignore", invalid="ignore"):
                    q = np.where(self._mass > 0, self._mass / s, 0.0)
                axsum[j] = s.ravel()
            else:
                lse = np.broadcast_to(logsumexp(lt, axis=j, keepdims=True), self.dims)
                with np.errstate(invalid="ignore"):
                    q = np.where(np.isfinite(lt), np.exp(lt - lse), 0.0)
                axsum[j] = np.exp(lse).ravel()
            cond[j] = q.ravel()
        self._cond = cond
        self._axsum = axsum
        self._strides = _strides(self.dims)
        self._values = values

    def _flat(self, state) -> int:
        s = self.check_state(state)
        return int(np.dot(s, self._strides))

    def unnorm_prob(self, state) -> float:
        return float(self._mass.ravel()[self._flat(state)])

    def log_unnorm_prob(self, state) -> float:
        return float(self._log.ravel()[self._flat(state)])

    def axis_sum(self, j, state) -> float:
        return float(self._axsum[j, self._flat(state)])

    def conditional(self, j, state) -> float:
        return float(self._cond[j, self._flat(state)])

    def axis_values(self) -> np.ndarray:
        if self._values is not None:
            return np.asarray(self._values, dtype=float)
        return super().axis_values()

    def log_table(self) -> np.ndarray:
        return self._log

    def probabilities(self) -> np.ndarray:
        """Normalized table."""
        return np.exp(self._log - logsumexp(self._log))

    def _events_kernel(self, c, cell, off, t, n_events):
        return _kernels.dgibbs_table(
            self._cond, self._axsum, np.asarray(self.dims, np.int64), self._strides, c, cell, off, t, n_events
        )

    def _gibbs_kernel(self, cell, axes, uniforms):
        return _kernels.gibbs_table(self._cond, np.asarray(self.dims, np.int64), self._strides, cell, axes, uniforms)


class ImageTarget(TableTarget):
    """Grayscale image read as an unnormalized distribution over (row, column)."""

    def __init__(self, raw, floor: float | None = None):
        raw = np.asarray(raw, dtype=float)
        if raw.ndim != 2:
            raise ValueError("image must be 2D")
        if floor is None:
            floor = 1e-6 * float(raw.max())
        if floor < 0:
            raise ValueError("floor must be non-negative")
        self.raw = raw
        self.floor = float(floor)
        self.pixel_mass = np.where(raw == 0, self.floor, raw)
        self.height, self.width = raw.shape
        super().__init__(self.pixel_mass)

    @property
    def row_sums(self) -> np.ndarray:
        return self.pixel_mass.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.pixel_mass.sum(axis=0)


class IsingTarget(DiscreteTarget):
    """Nearest-neighbour Ising model on an open ``side x side`` lattice.

    Energy ``E = J * sum_edges s_i s_j - eta * sum_i s_i xi_i`` and
    ``p ~ exp(-E)``.  ``J = +1`` with no field is the antiferromagnet whose
    ground states are the checkerboards; the denoising model uses
    ``J = -beta``.  Axes are sites in row-major order; cell index 0/1 is spin
    -1/+1.
    """

    def __init__(self, side: int, coupling: float = 1.0, eta: float = 0.0, xi=None):
        if side < 1:
            raise ValueError("side must be positive")
        self.side = int(side)
        self.coupling = float(coupling)
        self.eta = float(eta)
        n = self.side * self.side
        self.xi = np.zeros((side, side)) if xi is None else np.asarray(xi, dtype=float).reshape(side, side)
        self.hfield = (self.eta * self.xi).ravel().astype(float)
        self.dims = (2,) * n
        nbrs = -np.ones((n, 4), dtype=np.int64)
        for r in range(side):
            for q in range(side):
                i = r * side + q
                for m, (dr, dq) in enumerate(((-1, 0), (1, 0), (0, -1), (0, 1))):
                    rr, qq = r + dr, q + dq
                    if 0 <= rr < side and 0 <= qq < side:
                        nbrs[i, m] = rr * side + qq
        self.nbrs = nbrs
        self.n_edges = 2 * side * (side - 1)

    @classmethod
    def denoising(cls, xi, beta: float = 1.0, eta: float = 2.1) -> "IsingTarget":
        xi = np.asarray(xi, dtype=float)
        if xi.ndim != 2 or xi.shape[0] != xi.shape[1]:
            raise ValueError("noisy image must be square")
        return cls(xi.shape[0], coupling=-beta, eta=eta, xi=xi)

    def spins(self, state) -> np.ndarray:
        return 2 * np.asarray(state, dtype=np.int64) - 1

    def energy_spins(self, spins) -> np.ndarray | float:
        s = np.asarray(spins, dtype=float)
        grid = s.reshape(s.shape[:-1] + (self.side, self.side))
        pair = (grid[..., 1:, :] * grid[..., :-1, :]).sum(axis=(-1, -2)) + (grid[..., :, 1:] * grid[..., :, :-1]).sum(
            axis=(-1, -2)
        )
        e = self.coupling * pair - s @ self.hfield
        return float(e) if np.ndim(e) == 0 else e

    def energy(self, state) -> float:
        return self.energy_spins(self.spins(state))

    def checkerboards(self) -> tuple[np.ndarray, np.ndarray]:
        r, q = np.indices((self.side, self.side))
        a = np.where((r + q) % 2 == 0, 1, -1).ravel()
        return a, -a

    def log_unnorm_prob(self, state) -> float:
        return -self.energy(state)

    def unnorm_prob(self, state) -> float:
        return math.exp(-self.energy(state))

    def _neighbor_sum(self, i, spins):
        return int(sum(spins[b] for b in self.nbrs[i] if b >= 0))

    def _check_site(self, i):
        if not 0 <= i < len(self.dims):
            raise ValueError(f"site {i} outside the {self.side}x{self.side} lattice")

    def conditional(self, i, state) -> float:
        self._check_site(i)
        spins = self.spins(state)
        a = self.coupling * self._neighbor_sum(i, spins) - self.hfield[i]
        return 1.0 / (1.0 + math.exp(2.0 * int(spins[i]) * a))

    def axis_ratio(self, i, state) -> float:
        """``axis_sum_i / p(state)``; the Boltzmann factor common to both terms cancels."""
        self._check_site(i)
        spins = self.spins(state)
        a = self.coupling * self._neighbor_sum(i, spins) - self.hfield[i]
        return 1.0 + math.exp(2.0 * int(spins[i]) * a)

    def axis_sum(self, i, state) -> float:
        return self.unnorm_prob(state) * self.axis_ratio(i, state)

    def axis_values(self) -> np.ndarray:
        return np.tile(np.array([-1.0, 1.0]), (len(self.dims), 1))

    def log_table(self) -> np.ndarray:
        n = len(self.dims)
        if 2**n > ENUMERATION_LIMIT:
            raise CapacityError(f"2^{n} states exceed the enumeration limit")
        idx = (np.arange(2**n)[:, None] >> np.arange(n - 1, -1, -1)) & 1
        return (-self.energy_spins(2 * idx - 1)).reshape(self.dims)

    def _events_kernel(self, c, cell, off, t, n_events):
        return _kernels.dgibbs_ising(self.nbrs, self.coupling, self.hfield, c, cell, off, t, n_events)

    def _gibbs_kernel(self, cell, axes, uniforms):
        return _kernels.gibbs_ising(self.nbrs, self.coupling, self.hfield, cell, axes, uniforms)

    def energy_path(self, cell0, axes, newv=None) -> np.ndarray:
        """Energy after each change of a trace (``newv=None``) or chain."""
        nv = np.empty(0, np.int32) if newv is None else np.asarray(newv, np.int32)
        return _kernels.ising_energy_path(
            self.nbrs, self.coupling, self.hfield, np.asarray(cell0, np.int64), np.asarray(axes, np.int32), nv
        )


def ising_axis_sum(target: IsingTarget, i: int, state) -> float:
    """Axis sum at site ``i`` in units of the current mass, ``(p(-) + p(+)) / p(state)``.

    Equals ``1 + exp(2 s_i a_i)`` with local field ``a_i = J S_i - eta xi_i``;
    constant-time and overflow free on any lattice size.
    """
    return target.axis_ratio(i, state)


class LogRegTarget(DiscreteTarget):
    """Posterior of logistic regression with weights in ``{-1, +1}`` and a uniform prior.

    ``log p(theta) = sum_m log sigmoid(y_m theta . x_m)``.  Axis ``i`` is weight
    ``i``; cell index 0/1 is -1/+1.
    """

    def __init__(self, X, y, feature_names: Sequence[str] | None = None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("X must be (M, n) and y of length M")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        self.X = X
        self.y = y
        self.dims = (2,) * X.shape[1]
        self.feature_names = list(feature_names) if feature_names else [f"x{i}" for i in range(X.shape[1])]
        self._table = None

    def theta(self, state) -> np.ndarray:
        return 2.0 * np.asarray(self.check_state(state), dtype=float) - 1.0

    def log_likelihood_theta(self, theta) -> float:
        z = self.y * (self.X @ np.asarray(theta, dtype=float))
        return float(-np.sum(np.logaddexp(0.0, -z)))

    def log_unnorm_prob(self, state) -> float:
        return self.log_likelihood_theta(self.theta(state))

    def unnorm_prob(self, state) -> float:
        return math.exp(self.log_unnorm_prob(state))

    def _pair(self, i, state):
        th = self.theta(state)
        lo, hi = th.copy(), th.copy()
        lo[i], hi[i] = -1.0, 1.0
        return th, self.log_likelihood_theta(lo), self.log_likelihood_theta(hi)

    def axis_sum(self, i, state) -> float:
        return logreg_axis_sum(self, i, state)

    def conditional(self, i, state) -> float:
        th, l_lo, l_hi = self._pair(i, state)
        cur, other = (l_hi, l_lo) if th[i] > 0 else (l_lo, l_hi)
        return float(np.exp(cur - np.logaddexp(cur, other)))

    def axis_values(self) -> np.ndarray:
        return np.tile(np.array([-1.0, 1.0]), (len(self.dims), 1))

    def log_table(self) -> np.ndarray:
        n = len(self.dims)
        if 2**n > ENUMERATION_LIMIT:
            raise CapacityError(f"2^{n} states exceed the enumeration limit")
        idx = (np.arange(2**n)[:, None] >> np.arange(n - 1, -1, -1)) & 1
        thetas = 2.0 * idx - 1.0
        z = (thetas @ self.X.T) * self.y[None, :]
        return (-np.logaddexp(0.0, -z).sum(axis=1)).reshape(self.dims)

    def to_table(self) -> TableTarget:
        if self._table is None:
            self._table = TableTarget(log_table=self.log_table(), values=self.axis_values())
        return self._table

    # With at most 2^20 states, precomputing every conditional once is cheaper
    # than the 2 n likelihood evaluations a single event would otherwise need.
    def _events_kernel(self, c, cell, off, t, n_events):
        if 2 ** len(self.dims) > ENUMERATION_LIMIT:
            return None
        return self.to_table()._events_kernel(c, cell, off, t, n_events)

    def _gibbs_kernel(self, cell, axes, uniforms):
        if 2 ** len(self.dims) > ENUMERATION_LIMIT:
            return None
        return self.to_table()._gibbs_kernel(cell, axes, uniforms)


def logreg_axis_sum(target: LogRegTarget, i: int, state) -> float:
    """``p(theta_i = -1) + p(theta_i = +1)`` with the other weights fixed."""
    _, l_lo, l_hi = target._pair(i, state)
    return float(np.exp(np.logaddexp(l_lo, l_hi)))


@dataclass(frozen=True)
class ExactMoments:
    z: float
    log_z: float
    means: np.ndarray
    table: np.ndarray | None = None


def enumerate_exact(target: DiscreteTarget, keep_table: bool = True) -> ExactMoments:
    """Normalizer and per-axis means by summing over every state."""
    if target.n_states > ENUMERATION_LIMIT:
        raise CapacityError(f"{target.n_states} states exceed the enumeration limit {ENUMERATION_LIMIT}")
    if hasattr(target, "log_table"):
        lt = np.asarray(target.log_table(), dtype=float)
    else:
        with np.errstate(divide="ignore"):
            lt = np.log([target.unnorm_prob(s) for s in all_states(target.dims)]).reshape(target.dims)
    log_z = float(logsumexp(lt))
    probs = np.exp(lt - log_z)
    values = target.axis_values()
    means = np.empty(target.n_axes)
    for j, d in enumerate(target.dims):
        marg = probs.sum(axis=tuple(k for k in range(target.n_axes) if k != j))
        means[j] = float(marg @ values[j, :d])
    return ExactMoments(math.exp(log_z) if log_z < 709 else math.inf, log_z, means, probs if keep_table else None)


# --- data ingestion -------------------------------------------------------

_WS = b" \t\r\n\v\f"


def _pgm_tokens(data: bytes, count: int, pos: int):
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and (data[pos] in _WS or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < n and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < n and data[pos] not in _WS and data[pos] != ord("#"):
            pos += 1
        if start == pos:
            raise ParseError("truncated PGM header", offset=start)
        tok = data[start:pos]
        if not tok.isdigit():
            raise ParseError(f"expected an integer, got {tok!r}", offset=start)
        out.append(int(tok))
    return out, pos


def load_pgm(path, floor: float | None = None) -> ImageTarget:
    """Read a P2 (ASCII) or P5 (binary) PGM file as an :class:`ImageTarget`."""
    data = Path(path).read_bytes()
    if len(data) < 2 or data[:2] not in (b"P2", b"P5"):
        raise ParseError("not a P2/P5 PGM file", offset=0)
    binary = data[:2] == b"P5"
    (width, height, maxval), pos = _pgm_tokens(data, 3, 2)
    if width < 1 or height < 1:
        raise ParseError("image dimensions must be positive", offset=pos)
    if not 0 < maxval <= 65535:
        raise ParseError(f"maxval {maxval} out of range", offset=pos)
    count = width * height
    if binary:
        if pos >= len(data) or data[pos] not in _WS:
            raise ParseError("missing whitespace after maxval", offset=pos)
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = count * dtype.itemsize
        if len(data) - pos < need:
            raise ParseError(f"truncated raster: need {need} bytes, have {len(data) - pos}", offset=len(data))
        pixels = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(float)
    else:
        body = data[pos:]
        toks = list(re.finditer(rb"\S+", body))
        if len(toks) < count:
            raise ParseError(f"truncated raster: need {count} values, have {len(toks)}", offset=len(data))
        vals = []
        for m in toks[:count]:
            if not m.group().isdigit():
                raise ParseError(f"bad pixel value {m.group()!r}", offset=pos + m.start())
            vals.append(int(m.group()))
        pixels = np.asarray(vals, dtype=float)
    if pixels.max(initial=0) > maxval:
        raise ParseError("pixel value exceeds maxval", offset=pos)
    return ImageTarget(pixels.reshape(height, width), floor=floor)


def write_pgm(path, image, binary: bool = True, maxval: int | None = None) -> None:
    img = np.asarray(image)
    if img.ndim != 2 or np.any(img < 0):
        raise ValueError("image must be 2D and non-negative")
    img = np.rint(img).astype(np.int64)
    maxval = int(max(1, img.max())) if maxval is None else maxval
    h, w = img.shape
    header = f"{'P5' if binary else 'P2'}\n{w} {h}\n{maxval}\n".encode()
    if binary:
        body = img.astype(">u2" if maxval > 255 else "u1").tobytes()
    else:
        body = ("\n".join(" ".join(str(v) for v in row) for row in img) + "\n").encode()
    Path(path).write_bytes(header + body)


def synthetic_image(size: int, kind: str = "blobs") -> np.ndarray:
    """Deterministic strictly positive test images."""
    r, q = np.indices((size, size)) / max(size - 1, 1)
    if kind == "uniform":
        return np.ones((size, size))
    if kind == "blobs":
        img = 0.15 + np.exp(-((r - 0.3) ** 2 + (q - 0.35) ** 2) / 0.02) + 0.6 * np.exp(
            -((r - 0.7) ** 2 + (q - 0.7) ** 2) / 0.05
        )
        return img
    if kind == "disk":
        return np.where((r - 0.5) ** 2 + (q - 0.5) ** 2 < 0.12, 1.0, -1.0)
    raise ValueError(f"unknown synthetic image kind {kind!r}")


def _class0_rule(labels):
    first = sorted(set(labels))[0]
    return np.array([-1.0 if lab == first else 1.0 for lab in labels])


def load_csv_dataset(
    path,
    label_column: str = "class",
    rule: str | Callable[[list], np.ndarray] = "class0",
    standardize: bool = True,
) -> LogRegTarget:
    """Binary logistic-regression target from a headed CSV file.

    Features are standardized (population std) and a bias column of ones is
    appended.  ``rule="class0"`` maps the first label in sorted order to -1 and
    every other label to +1; ``rule="pos:<label>"`` makes ``<label>`` the +1
    class; a callable gets the raw label list.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty CSV file", offset=1) from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise ParseError(f"missing label column {label_column!r}", offset=1)
        li = header.index(label_column)
        names = [h for k, h in enumerate(header) if k != li]
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", offset=f"row {lineno}")
            try:
                rows.append([float(c) for k, c in enumerate(row) if k != li])
            except ValueError:
                raise ParseError("non-numeric feature value", offset=f"row {lineno}") from None
            labels.append(row[li].strip())
    if not rows:
        raise ParseError("no data rows", offset=2)
    X = np.asarray(rows, dtype=float)
    if standardize:
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        X = (X - mu) / np.where(sd > 0, sd, 1.0)
    X = np.hstack([X, np.ones((len(X), 1))])
    if callable(rule):
        y = np.asarray(rule(labels), dtype=float)
    elif rule == "class0":
        y = _class0_rule(labels)
    elif rule.startswith("pos:"):
        pos = rule[4:]
        y = np.array([1.0 if lab == pos else -1.0 for lab in labels])
    else:
        raise ValueError(f"unknown binarization rule {rule!r}")
    return LogRegTarget(X, y, names + ["bias"])


def load_dataset(name: str, rule="class0") -> LogRegTarget:
    """Bundled ``iris`` or ``wine`` data."""
    if name not in ("iris", "wine"):
        raise ValueError(f"unknown bundled dataset {name!r}")
    with resources.as_file(resources.files("dyngibbs") / "data" / f"{name}.csv") as p:
        return load_csv_dataset(p, "class", rule)
