"""Continuous-state dynamical Gibbs sampling.

Every axis moves simultaneously with velocity ``c_i / p(x_i | x_rest)``.  The
flow is integrated in chart coordinates on the unit torus, where each axis is
mapped to ``[0, 1)`` either through a CDF or through ``tanh``, so that the
particle re-enters from ``-inf`` after leaving through ``+inf``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, IntegrationError, UnsupportedModelError
from .fields import DensityModel, VectorField, as_coefficients

logger = logging.getLogger(__name__)

__all__ = [
    "CDFBijection",
    "ConditionalModel",
    "TorusChart",
    "Trajectory",
    "exact_1d_step",
    "gibbs_field",
    "flow_on_torus",
    "independent_model",
    "correlated_gaussian_model",
    "uniform_bijection",
    "exponential_bijection",
    "normal_bijection",
]

# Chart coordinates are pulled into the open interval before inversion;
# CDF charts send the closed endpoints to points of zero density.
_U_MIN = 2.0**-52
_U_MAX = 1.0 - 2.0**-53
_stdnorm = NormalDist()
# Smallest chart displacement of a sub-step near the glue point.
_GLUE_STEP = 1e-12


@dataclass(frozen=True)
class CDFBijection:
    """A 1D distribution given by its CDF, and optionally its inverse and density."""

    cdf: Callable[[float], float]
    inverse: Callable[[float], float] | None = None
    density: Callable[[float], float] | None = None


def uniform_bijection(lo: float = 0.0, hi: float = 1.0) -> CDFBijection:
    w = hi - lo
    return CDFBijection(
        cdf=lambda x: (x - lo) / w,
        inverse=lambda u: lo + u * w,
        density=lambda x: 1.0 / w,
    )


def exponential_bijection(rate: float = 1.0) -> CDFBijection:
    return CDFBijection(
        cdf=lambda x: -math.expm1(-rate * x),
        inverse=lambda u: -math.log1p(-u) / rate,
        density=lambda x: rate * math.exp(-rate * x),
    )


def _ndtri(u):
    return float(_stdnorm.inv_cdf(u))


def normal_bijection(mu: float = 0.0, sigma: float = 1.0) -> CDFBijection:
    norm = 1.0 / (sigma * math.sqrt(2.0 * math.pi))
    return CDFBijection(
        cdf=lambda x: 0.5 * math.erfc(-(x - mu) / (sigma * math.sqrt(2.0))),
        inverse=lambda u: mu + sigma * _ndtri(u),
        density=lambda x: norm * math.exp(-0.5 * ((x - mu) / sigma) ** 2),
    )


@dataclass(frozen=True)
class ConditionalModel:
    """Full conditionals ``p(x_i | x_rest)`` of a continuous target.

    ``conditional_density(i, x)`` evaluates the conditional of axis ``i`` at the
    full point ``x``.  ``joint_density`` is optional and only used for
    divergence checks.
    """

    dim: int
    conditional_density: Callable[[int, np.ndarray], float]
    joint_density: Callable[[np.ndarray], float] | None = None
    marginals: Sequence[CDFBijection] | None = None

    def density_model(self) -> DensityModel:
        if self.joint_density is None:
            raise UnsupportedModelError("model has no joint density")
        return DensityModel(self.dim, self.joint_density)


def independent_model(axes: Sequence[CDFBijection]) -> ConditionalModel:
    """Product distribution; each conditional equals its marginal."""
    axes = tuple(axes)
    if any(a.density is None for a in axes):
        raise UnsupportedModelError("every axis needs a density")

    def cond(i, x):
        return axes[i].density(x[i])

    def joint(x):
        return math.prod(a.density(xi) for a, xi in zip(axes, x))

    return ConditionalModel(len(axes), cond, joint, axes)


def correlated_gaussian_model(rho: float) -> ConditionalModel:
    """Standard bivariate normal with correlation ``rho``; charts use the N(0,1) marginals."""
    if not -1.0 < rho < 1.0:
        raise ValueError("rho must lie in (-1, 1)")
    var = 1.0 - rho * rho
    cnorm = 1.0 / math.sqrt(2.0 * math.pi * var)
    jnorm = 1.0 / (2.0 * math.pi * math.sqrt(var))

    def cond(i, x):
        m = rho * x[1 - i]
        return cnorm * math.exp(-0.5 * (x[i] - m) ** 2 / var)

    def joint(x):
        q = (x[0] ** 2 - 2.0 * rho * x[0] * x[1] + x[1] ** 2) / var
        return jnorm * math.exp(-0.5 * q)

    return ConditionalModel(2, cond, joint, (normal_bijection(), normal_bijection()))


class TorusChart:
    """Per-axis bijection of the native support onto ``[0, 1)``.

    Build with :meth:`from_cdfs` (exact, needs CDF, inverse and density per
    axis) or :meth:`tanh`.  ``speed_factor`` is ``du/dx``, needed to carry the
    velocity field into chart coordinates.
    """

    def __init__(self, forward, inverse, speed_factor, kind):
        self._forward = tuple(forward)
        self._inverse = tuple(inverse)
        self._speed = tuple(speed_factor)
        self.kind = kind
        self.dim = len(self._forward)

    @classmethod
    def from_cdfs(cls, axes: Sequence[CDFBijection]) -> "TorusChart":
        axes = tuple(axes)
        for a in axes:
            if a.inverse is None or a.density is None:
                raise UnsupportedModelError("CDF chart needs inverse CDF and density on every axis")
        return cls([a.cdf for a in axes], [a.inverse for a in axes], [a.density for a in axes], "cdf")

    @classmethod
    def tanh(cls, dim: int, scale: float | Sequence[float] = 1.0) -> "TorusChart":
        scales = np.broadcast_to(np.asarray(scale, dtype=float), (dim,))
        fwd, inv, spd = [], [], []
        for s in scales:
            s = float(s)
            fwd.append(lambda x, s=s: 0.5 * (math.tanh(x / s) + 1.0))
            inv.append(lambda u, s=s: s * math.atanh(2.0 * u - 1.0))
            spd.append(lambda x, s=s: 0.5 * (1.0 - math.tanh(x / s) ** 2) / s)
        return cls(fwd, inv, spd, "tanh")

    @classmethod
    def for_model(cls, model: ConditionalModel, scale: float = 1.0) -> "TorusChart":
        """CDF chart when the model carries invertible marginals, tanh otherwise."""
        m = model.marginals
        if m is not None and all(a.inverse is not None and a.density is not None for a in m):
            return cls.from_cdfs(m)
        return cls.tanh(model.dim, scale)

    def to_chart(self, x) -> np.ndarray:
        return np.array([f(float(xi)) for f, xi in zip(self._forward, x)]) % 1.0

    def from_chart(self, u) -> np.ndarray:
        return np.array([g(min(max(float(ui), _U_MIN), _U_MAX)) for g, ui in zip(self._inverse, u)])

    def speed_factor(self, x) -> np.ndarray:
        return np.array([d(float(xi)) for d, xi in zip(self._speed, x)])


@dataclass(frozen=True)
class Trajectory:
    """Recorded ``(time, point)`` pairs; times strictly increasing."""

    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        if len(self.times) != len(self.points):
            raise ValueError("times and points differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return len(self.times)


def exact_1d_step(F: CDFBijection, x0: float, c: float, t: float) -> float:
    """Closed-form 1D flow ``F^-1((c t + F(x0)) mod 1)``."""
    if F.inverse is None:
        raise UnsupportedModelError("exact 1D update needs an inverse CDF")
    if c == 0:
        raise ValueError("c must be non-zero")
    if t < 0:
        raise ValueError("t must be non-negative")
    return F.inverse((c * t + F.cdf(x0)) % 1.0)


def gibbs_field(model: ConditionalModel, c) -> VectorField:
    """Dynamical Gibbs field with components ``c_i / p(x_i | x_rest)``."""
    c = np.asarray(as_coefficients(c, model.dim))

    def velocity(x):
        v = np.empty(model.dim)
        for i in range(model.dim):
            q = model.conditional_density(i, x)
            if not q > 0:
                raise DomainError(f"conditional density of axis {i} vanishes at {x}")
            v[i] = c[i] / q
        return v

    return VectorField(model.dim, velocity)


def flow_on_torus(
    model: ConditionalModel,
    chart: TorusChart,
    c,
    x0,
    dt: float = 1e-3,
    n_steps: int = 1000,
    record_every: int = 1,
    excursion_warn: float = 1e6,
    max_chart_step: float = 0.1,
    max_substeps: int = 100_000,
) -> Trajectory:
    """Integrate the dynamical Gibbs flow in chart coordinates.

    Each RK4 step is followed by a mod-1 wrap of every chart coordinate.  The
    state is recorded (in native coordinates) every ``record_every`` steps,
    i.e. at uniform time spacing, starting with ``x0`` at time 0.

    Near the glue point the chart speed can grow without bound (a tanh chart
    on a light-tailed target).  A step that would move any chart coordinate
    by more than ``max_chart_step`` is split into shorter sub-steps of that
    displacement, so the particle crosses the glue region in the tiny time
    the flow actually spends there instead of overflowing; a sub-step is
    also halved while any RK4 stage speed differs from the first stage's by
    more than a factor of 4, down to a displacement of 1e-12 below which the
    particle is taken to cross in zero time.  Steps over smoothly varying
    fields are untouched.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_steps < 0 or record_every < 1:
        raise ValueError("n_steps must be >= 0 and record_every >= 1")
    coeffs = np.asarray(as_coefficients(c, model.dim))
    if chart.dim != model.dim:
        raise ValueError("chart and model dimensions differ")

    n = model.dim
    cond = model.conditional_density
    inv = chart._inverse
    spd = chart._speed
    cs = [float(ci) for ci in coeffs]

    # Plain-float RK4: this loop dominates runtime and small numpy arrays
    # cost more than the arithmetic.
    def w(u):
        x = [g(min(max(ui % 1.0, _U_MIN), _U_MAX)) for g, ui in zip(inv, u)]
        out = []
        for i in range(n):
            q = cond(i, x)
            if not q > 0:
                raise IntegrationError(f"conditional density of axis {i} vanishes at {x}", point=x)
            out.append(spd[i](x[i]) * cs[i] / q)
        return out

    u = [float(ui) for ui in chart.to_chart(np.asarray(x0, dtype=float))]
    n_rec = n_steps // record_every + 1
    times = np.empty(n_rec)
    points = np.empty((n_rec, n))
    times[0] = 0.0
    points[0] = x0
    r = 1
    max_abs = 0.0

    def speed(k):
        return max(abs(b) for b in k)

    def rk4(u, h, k1, s1):
        # None when a stage speed leaves [s1 / 4, 4 * s1]: the step straddles
        # a speed blow-up and must be shortened
        k2 = w([a + 0.5 * h * b for a, b in zip(u, k1)])
        k3 = w([a + 0.5 * h * b for a, b in zip(u, k2)])
        k4 = w([a + h * b for a, b in zip(u, k3)])
        for kk in (k2, k3, k4):
            sk = speed(kk)
            if not 0.25 * s1 <= sk <= 4.0 * s1 and s1 < math.inf:
                return None
        return [h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for b1, b2, b3, b4 in zip(k1, k2, k3, k4)]

    def step(u, k):
        left = dt
        for _ in range(max_substeps):
            k1 = w(u)
            s1 = speed(k1)
            if not math.isfinite(s1):
                raise IntegrationError(f"non-finite chart velocity at step {k}", point=u, step=k)
            h = left if s1 * left <= max_chart_step else max_chart_step / s1
            du = rk4(u, h, k1, s1)
            while du is None:
                h *= 0.5
                if h * s1 < _GLUE_STEP:
                    # within rounding of the glue point: crossing takes no time
                    h = _GLUE_STEP / s1
                    du = rk4(u, h, k1, math.inf) if h > 0.0 else None
                    if du is None:
                        raise IntegrationError(f"sub-step underflow at step {k}", point=u, step=k)
                    break
                du = rk4(u, h, k1, s1)
            u = [(a + d) % 1.0 for a, d in zip(u, du)]
            if h >= left:
                return u
            left -= h
        raise IntegrationError(f"more than {max_substeps} sub-steps at step {k}", point=u, step=k)

    for k in range(1, n_steps + 1):
        try:
            u = step(u, k)
        except IntegrationError as err:
            err.step = k
            raise
        except (ZeroDivisionError, OverflowError, ValueError) as err:
            raise IntegrationError(f"integration failed at step {k}: {err}", step=k) from err
        if not all(math.isfinite(a) for a in u):
            raise IntegrationError(f"non-finite chart position at step {k}", step=k)
        if k % record_every == 0:
            x = [g(min(max(ui, _U_MIN), _U_MAX)) for g, ui in zip(inv, u)]
            times[r] = k * dt
            points[r] = x
            r += 1
    if n_rec > 1:
        max_abs = float(np.max(np.abs(points[1:])))
    if max_abs > excursion_warn:
        logger.warning("trajectory reached |x| = %.3g near the chart glue point", max_abs)
    return Trajectory(times, points)
