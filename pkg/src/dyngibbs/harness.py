"""Configuration-driven experiment runner.

An experiment runs one sampler on one target for several replicates, tracks
the running estimate of the per-axis means at a set of record points, and
writes the replicate-averaged error curve as CSV::

    iteration,mean_error,q10,q90

One iteration is one boundary event for ``dgibbs``/``suzuki``, one single-axis
update for ``gibbs`` and one full draw for ``independent``.  Sidecar files
next to the CSV hold wall-clock timings, the run metadata and the
kind-specific diagnostics (Ising energies and hitting times, denoising
disagreement, histogram distances).  Every file except the timing sidecar is
byte-identical across runs of the same configuration.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import GENERATOR_ID, RandomStream, independent_samples, run_gibbs
from .continuous import Trajectory
from .discrete import CellState, DiscreteTarget, EventTrace, run_events, running_axis_means, weighted_histogram
from .errors import CapacityError, ConfigError, FitError, ParseError
from .fields import first_primes, sqrt_prime_coefficients
from .targets import (
    ENUMERATION_LIMIT,
    ImageTarget,
    IsingTarget,
    TableTarget,
    enumerate_exact,
    load_csv_dataset,
    load_dataset,
    load_pgm,
    synthetic_image,
)

logger = logging.getLogger(__name__)

__all__ = [
    "KINDS",
    "SAMPLERS",
    "ExperimentConfig",
    "ErrorCurve",
    "ExperimentResult",
    "run_experiment",
    "loglog_slope",
    "coverage_and_period",
    "record_points",
    "start_points",
]

KINDS = ("validate", "image", "ising", "denoise", "logreg")
SAMPLERS = ("dgibbs", "gibbs", "independent", "suzuki")
CSV_HEADER = "iteration,mean_error,q10,q90"


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_shape(s) -> tuple:
    if isinstance(s, tuple):
        return s
    return tuple(int(v) for v in str(s).lower().replace("x", ",").split(",") if v.strip())


@dataclass
class ExperimentConfig:
    """Flat experiment description; see :meth:`from_text` for the file format."""

    kind: str = "validate"
    sampler: str = "dgibbs"
    budget: int = 10_000
    replicates: int = 1
    seed: int = 0
    record_stride: int = 0
    out: str = "results.csv"
    coefficients: str = "sqrt-primes"
    threads: int = 1
    reference: str = "auto"
    reference_seed: int = 12345
    reference_budget_factor: int = 5000
    # validate
    shape: tuple = (4, 4)
    target_seed: int = 0
    # image
    image: str = ""
    synthetic: str = "blobs"
    size: int = 32
    floor: float = -1.0
    # ising / denoise
    side: int = 28
    coupling: float = 1.0
    beta: float = 1.0
    eta: float = 2.1
    energy_tol: float = 0.05
    flip_rate: float = 0.1
    noise_seed: int = 2024
    # logreg
    dataset: str = "iris"
    csv: str = ""
    label_column: str = "class"
    rule: str = "class0"

    _CONVERT = {int: int, float: float, str: str, tuple: _parse_shape, bool: _parse_bool}

    def __post_init__(self):
        self.shape = _parse_shape(self.shape)
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"unknown sampler {self.sampler!r}; expected one of {', '.join(SAMPLERS)}")
        if self.budget < 1:
            raise ConfigError("budget must be at least 1")
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if self.record_stride < 0:
            raise ConfigError("record_stride must be non-negative")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if not 0 <= self.seed < 2**63:
            raise ConfigError("seed must be a non-negative 64-bit integer")
        if self.reference not in ("auto", "exact", "longrun", "mode", "clean"):
            raise ConfigError(f"unknown reference {self.reference!r}")
        if not self.shape or any(d < 1 for d in self.shape):
            raise ConfigError("shape needs positive sizes")
        if not 0.0 <= self.flip_rate <= 1.0:
            raise ConfigError("flip_rate must lie in [0, 1]")

    @classmethod
    def _types(cls) -> dict:
        hints = {"tuple": tuple, "int": int, "float": float, "str": str, "bool": bool}
        return {f.name: hints[f.type] for f in dataclasses.fields(cls)}

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ExperimentConfig":
        """Parse ``key = value`` lines; ``#`` starts a comment.

        Keyword ``overrides`` (``None`` values ignored) replace file entries.
        """
        types = cls._types()
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key == "events":
                key = "budget"
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            try:
                values[key] = cls._CONVERT[types[key]](val)
            except ValueError as err:
                raise ConfigError(f"line {lineno}: bad value for {key}: {err}") from None
        for k, v in overrides.items():
            if v is not None:
                if k not in types:
                    raise ConfigError(f"unknown key {k!r}")
                values[k] = v
        return cls(**values)

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from None
        return cls.from_text(text, **overrides)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = "x".join(str(d) for d in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ErrorCurve:
    """Per-replicate errors at shared iteration counts, with summary bands."""

    iterations: np.ndarray
    errors: np.ndarray

    def __post_init__(self):
        if self.errors.ndim != 2 or self.errors.shape[1] != len(self.iterations):
            raise ValueError("errors must be (replicates, len(iterations))")

    @property
    def mean(self) -> np.ndarray:
        return self.errors.mean(axis=0)

    @property
    def q10(self) -> np.ndarray:
        return np.quantile(self.errors, 0.1, axis=0)

    @property
    def q90(self) -> np.ndarray:
        return np.quantile(self.errors, 0.9, axis=0)

    def to_csv(self) -> str:
        rows = [CSV_HEADER]
        for it, m, lo, hi in zip(self.iterations.tolist(), self.mean.tolist(), self.q10.tolist(), self.q90.tolist()):
            rows.append(f"{it},{m!r},{lo!r},{hi!r}")
        return "\n".join(rows) + "\n"


@dataclass
class ExperimentResult:
    curve: ErrorCurve
    outputs: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)


def record_points(budget: int, stride: int = 0, n_log: int = 200) -> np.ndarray:
    """Iteration counts at which estimates are recorded; ``stride=0`` means log-spaced."""
    if stride > 0:
        pts = np.arange(stride, budget + 1, stride)
    else:
        pts = np.unique(np.logspace(0, math.log10(budget), n_log).astype(np.int64)) if budget > 1 else np.array([1])
    pts = pts[(pts >= 1) & (pts <= budget)]
    if pts.size == 0 or pts[-1] != budget:
        pts = np.append(pts, budget)
    return pts.astype(np.int64)


def start_points(dims, replicate: int, seed: int = 0) -> np.ndarray:
    """Deterministic low-discrepancy start point in ``[0, d_1) x ... x [0, d_n)``.

    Replicate ``r`` uses ``frac((seed + r + 1) * sqrt(q_i))`` with ``q_i`` the
    primes following the ``n`` used by the default coefficients, a Kronecker
    sequence whose successive points fill the torus evenly.
    """
    n = len(dims)
    alpha = np.sqrt(first_primes(2 * n)[n:].astype(float)) % 1.0
    u = ((seed + replicate + 1) * alpha) % 1.0
    return u * np.asarray(dims, dtype=float)


# --- targets and references -------------------------------------------------


@dataclass
class _Setup:
    target: DiscreteTarget
    reference: np.ndarray | None
    provenance: str
    values: np.ndarray
    start_cell: tuple | None = None
    extra: dict = field(default_factory=dict)


def _random_table(shape, seed):
    rng = np.random.Generator(np.random.Philox(key=seed))
    return rng.uniform(0.1, 1.0, size=shape)


def _exact_reference(target, what):
    try:
        ex = enumerate_exact(target, keep_table=True)
    except CapacityError as err:
        raise ConfigError(f"{what}: exact reference infeasible ({err}); set reference = longrun") from None
    return ex


def _longrun_reference(cfg, target, values, out: Path):
    n_up = cfg.reference_budget_factor * target.n_axes
    prov = (
        f"# reference: long-run systematic-scan gibbs, {n_up} updates, seed {cfg.reference_seed}, "
        f"{GENERATOR_ID}, dyngibbs {__version__}"
    )
    path = out.with_name(out.stem + "_reference.csv")
    if path.exists():
        lines = path.read_text().splitlines()
        if lines and lines[0] == prov:
            ref = np.array([float(v) for v in lines[2:]])
            if ref.size == target.n_axes:
                return ref, prov, path
    start = tuple(int(v) for v in start_points(target.dims, 0, cfg.reference_seed).astype(np.int64))
    chain = run_gibbs(target, start, n_up, RandomStream(cfg.reference_seed))
    ref = chain.running_means([n_up], values)[0]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(prov + "\nmean\n" + "".join(f"{v!r}\n" for v in ref.tolist()))
    return ref, prov, path


def _binarize(raw):
    mid = 0.5 * (float(np.min(raw)) + float(np.max(raw)))
    return np.where(raw > mid, 1.0, -1.0)


def _build(cfg: ExperimentConfig, out: Path, replicate: int | None = None) -> _Setup:
    kind = cfg.kind
    if kind == "validate":
        target = TableTarget(_random_table(cfg.shape, cfg.target_seed))
        if cfg.reference not in ("auto", "exact"):
            raise ConfigError("validate uses the exact reference")
        ex = _exact_reference(target, kind)
        return _Setup(target, ex.means, "# reference: exact enumeration", target.axis_values(), extra={"exact": ex})
    if kind == "image":
        if cfg.image:
            if not Path(cfg.image).is_file():
                raise ConfigError(f"image file not found: {cfg.image}")
            target = load_pgm(cfg.image, floor=None if cfg.floor < 0 else cfg.floor)
        else:
            try:
                raw = synthetic_image(cfg.size, cfg.synthetic)
            except ValueError as err:
                raise ConfigError(str(err)) from None
            if np.any(raw < 0):
                raise ConfigError(f"synthetic image {cfg.synthetic!r} is not a positive image")
            target = ImageTarget(raw, floor=None if cfg.floor < 0 else cfg.floor)
        if cfg.reference not in ("auto", "exact"):
            raise ConfigError("image uses the exact reference")
        ex = _exact_reference(target, kind)
        return _Setup(target, ex.means, "# reference: exact enumeration", target.axis_values(), extra={"exact": ex})
    if kind == "ising":
        target = IsingTarget(cfg.side, coupling=cfg.coupling)
        values = target.axis_values()
        if cfg.reference == "exact":
            ex = _exact_reference(target, kind)
            return _Setup(target, ex.means, "# reference: exact enumeration", values, extra={"exact": ex})
        if cfg.reference not in ("auto", "mode"):
            raise ConfigError("ising uses the mode or exact reference")
        return _Setup(target, None, "# reference: nearer checkerboard by sign of overlap with the final estimate", values)
    if kind == "denoise":
        if cfg.image:
            if not Path(cfg.image).is_file():
                raise ConfigError(f"image file not found: {cfg.image}")
            clean = _binarize(load_pgm(cfg.image).raw)
        else:
            clean = synthetic_image(cfg.size, "disk")
        if clean.shape[0] != clean.shape[1]:
            raise ConfigError("denoising needs a square image")
        noise = RandomStream(cfg.noise_seed).split(replicate or 0)
        flips = noise.uniform(clean.shape) < cfg.flip_rate
        noisy = np.where(flips, -clean, clean)
        target = IsingTarget.denoising(noisy, beta=cfg.beta, eta=cfg.eta)
        if cfg.reference not in ("auto", "clean"):
            raise ConfigError("denoise uses the clean image as reference")
        start = tuple(((noisy.ravel() + 1) // 2).astype(np.int64).tolist())
        return _Setup(
            target,
            clean.ravel().copy(),
            "# reference: clean image spins",
            target.axis_values(),
            start_cell=start,
            extra={"clean": clean.ravel(), "noisy": noisy.ravel()},
        )
    # logreg
    try:
        if cfg.csv:
            if not Path(cfg.csv).is_file():
                raise ConfigError(f"dataset file not found: {cfg.csv}")
            target = load_csv_dataset(cfg.csv, cfg.label_column, cfg.rule)
        else:
            target = load_dataset(cfg.dataset, cfg.rule)
    except (ValueError, ParseError) as err:
        raise ConfigError(str(err)) from None
    values = target.axis_values()
    ref_mode = cfg.reference
    if ref_mode == "auto":
        ref_mode = "exact" if target.n_states <= ENUMERATION_LIMIT else "longrun"
    if ref_mode == "exact":
        ex = _exact_reference(target, kind)
        return _Setup(target, ex.means, "# reference: exact enumeration", values, extra={"exact": ex})
    if ref_mode != "longrun":
        raise ConfigError("logreg uses the exact or longrun reference")
    ref, prov, path = _longrun_reference(cfg, target, values, out)
    return _Setup(target, ref, prov, values, extra={"reference_file": path})


# --- samplers -------------------------------------------------------------------


def _coefficients(cfg, n):
    if cfg.sampler == "suzuki" or cfg.coefficients == "ones":
        return np.ones(n)
    if cfg.coefficients == "sqrt-primes":
        return np.asarray(sqrt_prime_coefficients(n))
    try:
        c = np.array([float(v) for v in cfg.coefficients.split(",")])
    except ValueError:
        raise ConfigError(f"bad coefficients {cfg.coefficients!r}") from None
    if c.size != n:
        raise ConfigError(f"{c.size} coefficients given for {n} axes")
    return c


def _start_state(cfg, setup, r):
    dims = setup.target.dims
    pt = start_points(dims, r, cfg.seed)
    if setup.start_cell is not None:
        return CellState(setup.start_cell, tuple((pt % 1.0).tolist()))
    return CellState.from_point(pt, dims)


def _independent_means(target, values, n, rng, record, chunk=1 << 16):
    dims = np.asarray(target.dims)
    out = np.empty((len(record), target.n_axes))
    acc = np.zeros(target.n_axes)
    done = 0
    r = 0
    flat = None
    while done < n:
        m = min(chunk, n - done)
        flat = independent_samples(target, m, rng)
        st = np.stack(np.unravel_index(flat, tuple(dims)), axis=1)
        vals = values[np.arange(target.n_axes), st]
        cs = np.cumsum(vals, axis=0) + acc
        while r < len(record) and record[r] <= done + m:
            out[r] = cs[record[r] - done - 1] / record[r]
            r += 1
        acc = cs[-1]
        done += m
    return out, flat


@dataclass
class _Run:
    means: np.ndarray
    seconds: float
    trace: EventTrace | None = None
    chain: object = None
    start: tuple = ()
    hist: np.ndarray | None = None


def _run_replicate(cfg, setup, r, record) -> _Run:
    target = setup.target
    t0 = time.perf_counter()
    s0 = _start_state(cfg, setup, r)
    if cfg.sampler in ("dgibbs", "suzuki"):
        c = _coefficients(cfg, target.n_axes)
        tr = run_events(target, c, s0, cfg.budget)
        means = running_axis_means(tr, record, setup.values)
        return _Run(means, time.perf_counter() - t0, trace=tr, start=s0.cell)
    rng = RandomStream(cfg.seed).split(r)
    if cfg.sampler == "gibbs":
        chain = run_gibbs(target, s0.cell, cfg.budget, rng)
        means = chain.running_means(record, setup.values)
        return _Run(means, time.perf_counter() - t0, chain=chain, start=s0.cell)
    try:
        means, _ = _independent_means(target, setup.values, cfg.budget, rng, record)
    except CapacityError as err:
        raise ConfigError(f"independent sampler needs a full table: {err}") from None
    return _Run(means, time.perf_counter() - t0, start=s0.cell)


def _histogram_l1(cfg, setup, run) -> float | None:
    ex = setup.extra.get("exact")
    if ex is None or ex.table is None:
        return None
    if run.trace is not None:
        h = weighted_histogram(run.trace)
    elif run.chain is not None:
        h = np.bincount(run.chain.flat_states(), minlength=setup.target.n_states) / len(run.chain)
    else:
        return None
    return float(np.abs(np.ravel(h) - ex.table.ravel()).sum())


def _checkerboard_reference(target: IsingTarget, est):
    a, b = target.checkerboards()
    a = np.asarray(a, dtype=float).ravel()
    return a if float(est @ a) >= 0 else np.asarray(b, dtype=float).ravel()


def _energy_path(target, run):
    if run.trace is not None:
        return target.energy_path(run.start, run.trace.axes)
    return target.energy_path(run.start, run.chain.axes, run.chain.values)


def _final_cell(run):
    if run.trace is not None:
        return np.asarray(run.trace.final.cell)
    return np.asarray(run.chain.final)


def _fmt(v) -> str:
    return "inf" if isinstance(v, float) and math.isinf(v) else repr(v)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run every replicate, write the CSV and sidecars, return the curve."""
    cfg = config
    cfg.validate()
    out = Path(cfg.out)
    record = record_points(cfg.budget, cfg.record_stride)
    per_replicate = cfg.kind == "denoise"
    shared = None if per_replicate else _build(cfg, out)
    if cfg.kind in ("ising", "denoise") and cfg.sampler == "independent":
        raise ConfigError("independent sampler needs a full table; not available for lattice models")

    def job(r):
        setup = _build(cfg, out, r) if per_replicate else shared
        return setup, _run_replicate(cfg, setup, r, record)

    if cfg.threads > 1 and cfg.replicates > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(job, range(cfg.replicates)))
    else:
        results = [job(r) for r in range(cfg.replicates)]

    # ordered merge by replicate index
    errors = np.empty((cfg.replicates, len(record)))
    metrics: dict = {"replicates": []}
    extra_rows: list[str] = []
    energy_rows = []
    for r, (setup, run) in enumerate(results):
        ref = setup.reference
        if ref is None:
            ref = _checkerboard_reference(setup.target, run.means[-1])
        errors[r] = np.linalg.norm(run.means - ref, axis=1)
        row = {"replicate": r, "final_error": float(errors[r, -1]), "seconds": run.seconds}
        l1 = _histogram_l1(cfg, setup, run)
        if l1 is not None:
            row["histogram_l1"] = l1
        if cfg.kind == "ising":
            t = setup.target
            e = _energy_path(t, run)
            ground = -abs(t.coupling) * t.n_edges
            thr = (1.0 - cfg.energy_tol) * ground
            e0 = t.energy(run.start)
            hit_idx = np.flatnonzero(e <= thr)
            hit = 0 if e0 <= thr else (int(hit_idx[0]) + 1 if hit_idx.size else math.inf)
            row["hitting_iteration"] = hit
            energy_rows.append(e[record - 1])
        if cfg.kind == "denoise":
            clean = setup.extra["clean"]
            noisy = setup.extra["noisy"]
            est = run.means[-1]
            sign = np.where(est > 0, 1.0, np.where(est < 0, -1.0, noisy))
            state = 2.0 * _final_cell(run) - 1.0
            row["noisy_disagreement"] = float(np.mean(noisy != clean))
            row["estimate_disagreement"] = float(np.mean(sign != clean))
            row["state_disagreement"] = float(np.mean(state != clean))
        metrics["replicates"].append(row)

    curve = ErrorCurve(record, errors)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(curve.to_csv())
    outputs = {"curve": out}

    timing = out.with_name(out.stem + "_timing.csv")
    timing.write_text(
        "replicate,iterations,wall_seconds\n"
        + "".join(f"{m['replicate']},{cfg.budget},{m['seconds']:.6f}\n" for m in metrics["replicates"])
    )
    outputs["timing"] = timing

    meta = out.with_name(out.stem + "_meta.txt")
    setup0 = results[0][0]
    meta.write_text(
        f"# dyngibbs {__version__}\n{setup0.provenance}\n# rng: {GENERATOR_ID}\n"
        f"# iteration unit: {_UNITS[cfg.sampler]}\n" + cfg.to_text()
    )
    outputs["meta"] = meta

    rows = metrics["replicates"]
    if "histogram_l1" in rows[0]:
        p = out.with_name(out.stem + "_histogram.csv")
        p.write_text("replicate,histogram_l1\n" + "".join(f"{m['replicate']},{m['histogram_l1']!r}\n" for m in rows))
        outputs["histogram"] = p
        metrics["median_histogram_l1"] = float(np.median([m["histogram_l1"] for m in rows]))
    if cfg.kind == "ising":
        ea = np.array(energy_rows)
        p = out.with_name(out.stem + "_energy.csv")
        p.write_text(
            "iteration,mean_energy,q10,q90\n"
            + "".join(
                f"{it},{m!r},{lo!r},{hi!r}\n"
                for it, m, lo, hi in zip(
                    record.tolist(),
                    ea.mean(0).tolist(),
                    np.quantile(ea, 0.1, axis=0).tolist(),
                    np.quantile(ea, 0.9, axis=0).tolist(),
                )
            )
        )
        outputs["energy"] = p
        p = out.with_name(out.stem + "_hitting.csv")
        p.write_text(
            "replicate,hitting_iteration\n" + "".join(f"{m['replicate']},{_fmt(m['hitting_iteration'])}\n" for m in rows)
        )
        outputs["hitting"] = p
        metrics["median_hitting_iteration"] = float(np.median([m["hitting_iteration"] for m in rows]))
    if cfg.kind == "denoise":
        p = out.with_name(out.stem + "_denoise.csv")
        p.write_text(
            "replicate,noisy_disagreement,estimate_disagreement,state_disagreement\n"
            + "".join(
                f"{m['replicate']},{m['noisy_disagreement']!r},{m['estimate_disagreement']!r},"
                f"{m['state_disagreement']!r}\n"
                for m in rows
            )
        )
        outputs["denoise"] = p
        metrics["median_estimate_disagreement"] = float(np.median([m["estimate_disagreement"] for m in rows]))
        metrics["median_state_disagreement"] = float(np.median([m["state_disagreement"] for m in rows]))
    if "reference_file" in setup0.extra:
        outputs["reference"] = setup0.extra["reference_file"]
    metrics["final_mean_error"] = float(curve.mean[-1])
    return ExperimentResult(curve, outputs, metrics)


_UNITS = {
    "dgibbs": "boundary event",
    "suzuki": "boundary event (all coefficients 1)",
    "gibbs": "single-axis update (systematic scan)",
    "independent": "full independent draw",
}


# --- diagnostics --------------------------------------------------------------


def loglog_slope(curve, window=None) -> float:
    """Least-squares slope of ``log(error)`` against ``log(iteration)``.

    ``curve`` is an :class:`ErrorCurve` (its mean is fitted) or a pair
    ``(iterations, errors)``; ``window=(lo, hi)`` keeps iterations in
    ``[lo, hi]``.
    """
    if isinstance(curve, ErrorCurve):
        it, err = curve.iterations, curve.mean
    else:
        it, err = curve
    it = np.asarray(it, dtype=float)
    err = np.asarray(err, dtype=float)
    if window is not None:
        lo, hi = window
        keep = (it >= lo) & (it <= hi)
        it, err = it[keep], err[keep]
    if it.size < 2:
        raise FitError("need at least two points in the fit window")
    if np.any(err <= 0) or np.any(it <= 0):
        raise FitError("log-log fit needs strictly positive errors and iterations")
    x = np.log(it)
    y = np.log(err)
    x = x - x.mean()
    if not np.any(x != 0):
        raise FitError("fit window has a single distinct iteration")
    return float(x @ (y - y.mean()) / (x @ x))


def _smallest_period(seq) -> int:
    # KMP failure function; the smallest p with seq[k] == seq[k + p] for all k
    n = len(seq)
    fail = np.zeros(n, dtype=np.int64)
    k = 0
    for i in range(1, n):
        while k > 0 and seq[i] != seq[k]:
            k = fail[k - 1]
        if seq[i] == seq[k]:
            k += 1
        fail[i] = k
    return n - int(fail[-1])


def coverage_and_period(obj, resolution: int | None = None, tol: float = 1e-9, min_repeats: int = 3, bounds=None):
    """Fraction of grid cells visited and, if any, the period of the cell sequence.

    ``obj`` is an :class:`EventTrace` (cells are the states, weighted by dwell
    time), a :class:`Trajectory` (points binned on a ``resolution`` grid over
    ``bounds``, default the data range, equal weights) or a 1D sequence of
    integer cell labels over ``resolution`` cells.  A cell counts as covered
    when its share of the total weight exceeds ``tol``.  The period is the
    smallest lag at which the cell sequence repeats exactly; it is reported
    only when the trace holds at least ``min_repeats`` full periods.
    """
    if isinstance(obj, EventTrace):
        seq = obj.flat_states()
        weights = obj.dwell
        n_cells = math.prod(obj.dims)
    elif isinstance(obj, Trajectory):
        if resolution is None:
            raise ValueError("trajectories need a grid resolution")
        pts = np.asarray(obj.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if bounds is None:
            lo, hi = pts.min(axis=0), pts.max(axis=0)
        else:
            lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), pts.shape[1:]) for b in bounds)
        span = np.where(hi > lo, hi - lo, 1.0)
        idx = np.clip(((pts - lo) / span * resolution).astype(np.int64), 0, resolution - 1)
        seq = np.ravel_multi_index(idx.T, (resolution,) * pts.shape[1])
        weights = np.ones(len(seq))
        n_cells = resolution ** pts.shape[1]
    else:
        seq = np.asarray(obj, dtype=np.int64).ravel()
        if resolution is None:
            raise ValueError("label sequences need the number of cells as resolution")
        weights = np.ones(len(seq))
        n_cells = int(resolution)
    if len(seq) == 0:
        raise ValueError("empty input")
    total = float(np.sum(weights))
    if total > 0:
        w = np.bincount(seq, weights=weights, minlength=n_cells) / total
        covered = int(np.count_nonzero(w > tol))
    else:
        covered = int(np.unique(seq).size)
    coverage = covered / n_cells
    p = _smallest_period(seq.tolist())
    period = p if len(seq) >= min_repeats * p and p < len(seq) else None
    return coverage, period
