"""Vector fields, Liouville checks and generic ODE integration.

A density ``p`` is left invariant by the flow ``dx/dt = v(x)`` whenever the
product ``p * v`` is divergence free.  This module provides the pieces used to
build and check such flows numerically: field/density containers, a central
difference divergence of ``p * v``, a classical RK4 stepper, the Hamiltonian
construction ``v = (grad_y H, -grad_x H) / p`` and the square-root-of-primes
coefficient generator used by every dynamical Gibbs sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, IntegrationError

__all__ = [
    "VectorField",
    "DensityModel",
    "Hamiltonian",
    "Coefficients",
    "as_coefficients",
    "finite_diff_divergence",
    "rk4_step",
    "integrate",
    "hamiltonian_field",
    "first_primes",
    "sqrt_prime_coefficients",
    "phase_curve_distance",
]


@dataclass(frozen=True)
class VectorField:
    """Velocity evaluator ``x -> v(x)`` on ``R^dim``."""

    dim: int
    velocity_at: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.velocity_at(np.asarray(x, dtype=float)), dtype=float)

    def scaled(self, s: Callable[[np.ndarray], float]) -> "VectorField":
        """Field ``s(x) * v(x)``; same phase curves when ``s > 0``."""
        return VectorField(self.dim, lambda x: s(x) * self(x))


@dataclass(frozen=True)
class DensityModel:
    """Unnormalized density on an axis-aligned box (possibly unbounded).

    ``periodic`` marks a torus: points are never rejected for being outside
    the box because coordinates wrap.
    """

    dim: int
    unnorm_density: Callable[[np.ndarray], float]
    lower: Sequence[float] | None = None
    upper: Sequence[float] | None = None
    periodic: bool = False
    _lo: np.ndarray = field(init=False, repr=False)
    _hi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lo = np.full(self.dim, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        hi = np.full(self.dim, np.inf) if self.upper is None else np.asarray(self.upper, float)
        if lo.shape != (self.dim,) or hi.shape != (self.dim,):
            raise ValueError("support bounds must have length dim")
        if np.any(lo >= hi):
            raise ValueError("empty support")
        object.__setattr__(self, "_lo", lo)
        object.__setattr__(self, "_hi", hi)

    def __call__(self, x) -> float:
        return float(self.unnorm_density(np.asarray(x, dtype=float)))

    def in_interior(self, x, margin: float = 0.0) -> bool:
        if self.periodic:
            return True
        x = np.asarray(x, dtype=float)
        return bool(np.all(x - margin > self._lo) and np.all(x + margin < self._hi))


@dataclass(frozen=True)
class Hamiltonian:
    """Scalar ``H(x, y)`` with ``x`` in ``R^dim_x`` and ``y`` in ``R^dim_y``."""

    dim_x: int
    dim_y: int
    h: Callable[[np.ndarray, np.ndarray], float]

    def __call__(self, x, y) -> float:
        return float(self.h(np.asarray(x, dtype=float), np.asarray(y, dtype=float)))


@dataclass(frozen=True)
class Coefficients:
    """Strictly positive per-axis speed multipliers ``c_i``."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("at least one coefficient required")
        if not all(v > 0 and math.isfinite(v) for v in vals):
            raise ValueError("coefficients must be finite and strictly positive")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype or float)


def as_coefficients(c, n: int | None = None) -> Coefficients:
    """Coerce a sequence (or :class:`Coefficients`) and check its length."""
    if not isinstance(c, Coefficients):
        c = Coefficients(tuple(np.atleast_1d(np.asarray(c, dtype=float))))
    if n is not None and len(c) != n:
        raise ValueError(f"expected {n} coefficients, got {len(c)}")
    return c


def finite_diff_divergence(field: VectorField, density: DensityModel, point, h: float = 1e-4) -> float:
    """Central-difference estimate of ``div(p v)`` at ``point``.

    The product ``p * v_i`` is differenced directly, so no density gradient is
    needed.
    """
    x = np.asarray(point, dtype=float)
    if x.shape != (field.dim,) or density.dim != field.dim:
        raise ValueError("point, field and density dimensions disagree")
    if h <= 0:
        raise ValueError("h must be positive")
    if not density.in_interior(x, margin=h):
        raise DomainError(f"point {x} (+/- {h}) is not inside the support")
    total = 0.0
    for i in range(field.dim):
        e = np.zeros_like(x)
        e[i] = h
        fp = density(x + e) * field(x + e)[i]
        fm = density(x - e) * field(x - e)[i]
        total += (fp - fm) / (2.0 * h)
    return total


def _checked_velocity(field, x, stage):
    v = field(x)
    if not np.all(np.isfinite(v)):
        raise IntegrationError(f"non-finite velocity at RK4 stage {stage}, point {x}", point=x)
    return v


def rk4_step(field: VectorField, point, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step."""
    if not math.isfinite(dt):
        raise ValueError("dt must be finite")
    x = np.asarray(point, dtype=float)
    k1 = _checked_velocity(field, x, 1)
    x2 = x + 0.5 * dt * k1
    k2 = _checked_velocity(field, x2, 2)
    x3 = x + 0.5 * dt * k2
    k3 = _checked_velocity(field, x3, 3)
    x4 = x + dt * k3
    k4 = _checked_velocity(field, x4, 4)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(field: VectorField, x0, dt: float, n_steps: int) -> np.ndarray:
    """Fixed-step RK4 trajectory; returns ``(n_steps + 1, dim)`` points including ``x0``."""
    out = np.empty((n_steps + 1, field.dim))
    out[0] = x = np.asarray(x0, dtype=float)
    for k in range(n_steps):
        try:
            x = rk4_step(field, x, dt)
        except IntegrationError as err:
            err.step = k
            raise
        out[k + 1] = x
    return out


def _fd_gradient(f, z, step):
    g = np.empty_like(z)
    for i in range(z.size):
        hi = step * max(1.0, abs(z[i]))
        zp = z.copy()
        zm = z.copy()
        zp[i] += hi
        zm[i] -= hi
        g[i] = (f(zp) - f(zm)) / (zp[i] - zm[i])
    return g


def hamiltonian_field(ham: Hamiltonian, density: DensityModel, step: float = 1e-5) -> VectorField:
    """Build ``v(x, y) = (grad_y H, -grad_x H) / p(x, y)``.

    Gradients of ``H`` are central differences with per-coordinate step
    ``step * max(1, |z_i|)``.  ``density`` lives on the joint ``(x, y)`` space.
    """
    nx, ny = ham.dim_x, ham.dim_y
    if density.dim != nx + ny:
        raise ValueError("density must be defined on the joint (x, y) space")

    def joint(z):
        return ham(z[:nx], z[nx:])

    def velocity(z):
        p = density(z)
        if not p > 0:
            raise DomainError(f"density is zero at {z}")
        g = _fd_gradient(joint, z, step)
        return np.concatenate([g[nx:], -g[:nx]]) / p

    return VectorField(nx + ny, velocity)


def first_primes(n: int) -> np.ndarray:
    """The first ``n`` primes (sieve of Eratosthenes)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    # Rosser's bound p_n < n (ln n + ln ln n) for n >= 6
    limit = 15 if n < 6 else int(n * (math.log(n) + math.log(math.log(n)))) + 1
    sieve = np.ones(limit + 1, dtype=bool)
    sieve[:2] = False
    for k in range(2, int(limit**0.5) + 1):
        if sieve[k]:
            sieve[k * k :: k] = False
    return np.flatnonzero(sieve)[:n]


def sqrt_prime_coefficients(n: int) -> Coefficients:
    """``(sqrt(2), sqrt(3), sqrt(5), ...)`` of length ``n``.

    Square roots of distinct primes are linearly independent over the
    rationals, which is what makes the torus rotation behind the sampler dense.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    return Coefficients(tuple(math.sqrt(int(p)) for p in first_primes(n)))


def _point_to_polyline(points, poly, chunk=2048):
    """Distance from every row of ``points`` to the polyline through ``poly``."""
    if len(poly) == 1:
        return np.linalg.norm(points - poly[0], axis=1)
    a = poly[:-1]
    ab = poly[1:] - a
    ab2 = np.einsum("ij,ij->i", ab, ab)
    ab2 = np.where(ab2 > 0, ab2, 1.0)
    out = np.empty(len(points))
    for s in range(0, len(points), chunk):
        p = points[s : s + chunk]
        ap = p[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("ijk,jk->ij", ap, ab) / ab2, 0.0, 1.0)
        d = ap - t[..., None] * ab[None]
        out[s : s + chunk] = np.sqrt(np.einsum("ijk,ijk->ij", d, d).min(axis=1))
    return out


def phase_curve_distance(traj_a, traj_b) -> float:
    """Symmetric Hausdorff distance between two trajectories viewed as polylines."""
    a = np.asarray(traj_a, dtype=float)
    b = np.asarray(traj_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("trajectories must be non-empty")
    a = a.reshape(len(a), -1)
    b = b.reshape(len(b), -1)
    if a.shape[1] != b.shape[1]:
        raise ValueError("trajectories live in different dimensions")
    return float(max(_point_to_polyline(a, b).max(), _point_to_polyline(b, a).max()))
