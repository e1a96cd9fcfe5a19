import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyngibbs.errors import DomainError, IntegrationError
from dyngibbs.fields import (
    Coefficients,
    DensityModel,
    Hamiltonian,
    VectorField,
    as_coefficients,
    finite_diff_divergence,
    first_primes,
    hamiltonian_field,
    integrate,
    phase_curve_distance,
    rk4_step,
    sqrt_prime_coefficients,
)


def gauss2(z):
    return math.exp(-0.5 * (z[0] ** 2 + z[1] ** 2)) / (2 * math.pi)


GAUSS2 = DensityModel(2, gauss2)


def test_rotation_over_density_is_divergence_free():
    field = VectorField(2, lambda z: np.array([-z[1], z[0]]) / gauss2(z))
    assert abs(finite_diff_divergence(field, GAUSS2, [0.3, -0.2], h=1e-4)) < 1e-6


def test_one_dim_constant_flux():
    p = DensityModel(1, lambda x: math.exp(-x[0]), lower=[0.0])
    field = VectorField(1, lambda x: np.array([1.7 / math.exp(-x[0])]))
    assert abs(finite_diff_divergence(field, p, [0.7], h=1e-4)) < 1e-6


def test_non_solenoidal_field_matches_gradient():
    field = VectorField(2, lambda z: np.array([1.0, 1.0]))
    x, y = 1.0, 0.0
    dpx = -x * gauss2([x, y])
    dpy = -y * gauss2([x, y])
    got = finite_diff_divergence(field, GAUSS2, [x, y], h=1e-4)
    assert got == pytest.approx(dpx + dpy, abs=1e-4)
    assert abs(got) > 1e-3


def test_divergence_outside_support():
    p = DensityModel(1, lambda x: 1.0, lower=[0.0], upper=[1.0])
    field = VectorField(1, lambda x: np.array([1.0]))
    with pytest.raises(DomainError):
        finite_diff_divergence(field, p, [1.5])
    with pytest.raises(DomainError):
        finite_diff_divergence(field, p, [0.5e-4], h=1e-4)


def test_rk4_harmonic_oscillator_period():
    field = VectorField(2, lambda z: np.array([z[1], -z[0]]))
    traj = integrate(field, [1.0, 0.0], 2 * math.pi / 1000, 1000)
    assert traj.shape == (1001, 2)
    np.testing.assert_allclose(traj[-1], [1.0, 0.0], atol=1e-8)
    t = np.arange(1001) * 2 * math.pi / 1000
    np.testing.assert_allclose(traj, np.stack([np.cos(t), -np.sin(t)], 1), atol=1e-8)


def test_rk4_trivial_fields():
    zero = VectorField(3, lambda z: np.zeros(3))
    np.testing.assert_array_equal(rk4_step(zero, [1.0, -2.0, 3.0], 0.7), [1.0, -2.0, 3.0])
    const = VectorField(2, lambda z: np.array([1.0, 2.0]))
    np.testing.assert_allclose(rk4_step(const, [0.0, 0.0], 0.5), [0.5, 1.0], atol=0)


def test_rk4_non_finite_velocity_reports_stage_point():
    field = VectorField(1, lambda z: np.array([math.inf if z[0] > 0.9 else 1.0]))
    with pytest.raises(IntegrationError) as info:
        rk4_step(field, [0.5], 1.0)
    assert info.value.point is not None
    assert float(np.ravel(info.value.point)[0]) > 0.9


def test_hamiltonian_gaussian_product_gives_rotation():
    phi = lambda t: math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)  # noqa: E731
    ham = Hamiltonian(1, 1, lambda x, y: -phi(x[0]) * phi(y[0]))
    field = hamiltonian_field(ham, DensityModel(2, lambda z: phi(z[0]) * phi(z[1])))
    dev = 0.0
    for x in np.linspace(-2, 2, 5):
        for y in np.linspace(-2, 2, 5):
            dev = max(dev, float(np.max(np.abs(field([x, y]) - np.array([y, -x])))))
    assert dev < 1e-5


def test_hamiltonian_constant_is_zero_field():
    field = hamiltonian_field(Hamiltonian(1, 1, lambda x, y: 3.0), GAUSS2)
    np.testing.assert_array_equal(field([0.4, -1.1]), [0.0, 0.0])


def test_hamiltonian_bilinear_on_box():
    box = DensityModel(2, lambda z: 1.0, lower=[-1, -1], upper=[1, 1])
    field = hamiltonian_field(Hamiltonian(1, 1, lambda x, y: x[0] * y[0]), box)
    for x in np.linspace(-0.8, 0.8, 5):
        for y in np.linspace(-0.8, 0.8, 5):
            np.testing.assert_allclose(field([x, y]), [x, -y], atol=1e-8)
            assert abs(finite_diff_divergence(field, box, [x, y])) < 1e-6


def test_hamiltonian_zero_density():
    box = DensityModel(2, lambda z: 0.0 if z[0] > 0 else 1.0)
    field = hamiltonian_field(Hamiltonian(1, 1, lambda x, y: x[0] * y[0]), box)
    with pytest.raises(DomainError):
        field([0.5, 0.5])


def test_hmc_gaussian_energy_conserved_over_period():
    ham = Hamiltonian(1, 1, lambda x, y: 0.5 * (x[0] ** 2 + y[0] ** 2))
    field = hamiltonian_field(ham, GAUSS2)
    # p * v = (y, -x) has unit angular speed only after multiplying by p; fold p back in
    unit = field.scaled(gauss2)
    traj = integrate(unit, [1.0, 0.5], 2 * math.pi / 1000, 1000)
    h = 0.5 * (traj[:, 0] ** 2 + traj[:, 1] ** 2)
    assert np.max(np.abs(h / h[0] - 1.0)) < 1e-6


def test_hamiltonian_divergence_on_grid():
    ham = Hamiltonian(1, 1, lambda x, y: 0.5 * (x[0] ** 2 + y[0] ** 2))
    field = hamiltonian_field(ham, GAUSS2)
    for x in np.linspace(-2, 2, 17):
        for y in np.linspace(-2, 2, 17):
            assert abs(finite_diff_divergence(field, GAUSS2, [x, y])) < 1e-5


def test_sqrt_primes_examples():
    assert sqrt_prime_coefficients(1).values == (math.sqrt(2),)
    assert sqrt_prime_coefficients(3).values == (math.sqrt(2), math.sqrt(3), math.sqrt(5))
    assert sqrt_prime_coefficients(10)[9] == math.sqrt(29)
    with pytest.raises(ValueError):
        sqrt_prime_coefficients(0)


def _naive_primes(n):
    out, k = [], 2
    while len(out) < n:
        if all(k % p for p in out if p * p <= k):
            out.append(k)
        k += 1
    return out


@given(st.integers(min_value=1, max_value=3000))
@settings(max_examples=30, deadline=None)
def test_sieve_matches_trial_division(n):
    assert first_primes(n).tolist() == _naive_primes(n)


def test_sqrt_primes_strictly_increasing():
    c = np.asarray(sqrt_prime_coefficients(5000))
    assert np.all(np.diff(c) > 0)


def test_coefficients_validation():
    with pytest.raises(ValueError):
        Coefficients((1.0, 0.0))
    with pytest.raises(ValueError):
        Coefficients((1.0, math.inf))
    with pytest.raises(ValueError):
        as_coefficients([1.0, 2.0], 3)
    assert len(as_coefficients([1.0, 2.0])) == 2


def _circle(n, r=1.0):
    t = np.linspace(0, 2 * math.pi, n)
    return np.stack([r * np.cos(t), r * np.sin(t)], 1)


def test_phase_curve_distance_examples():
    a = _circle(360)
    assert phase_curve_distance(a, a) == 0.0
    assert phase_curve_distance(a, _circle(97)) < 1e-3
    assert phase_curve_distance(a, _circle(360, 2.0)) == pytest.approx(1.0, abs=1e-2)
    with pytest.raises(ValueError):
        phase_curve_distance(a, np.empty((0, 2)))


@given(st.floats(-5, 5), st.floats(-5, 5))
@settings(max_examples=30, deadline=None)
def test_phase_curve_distance_symmetric_translation(dx, dy):
    a = _circle(50)
    b = a + np.array([dx, dy])
    d1 = phase_curve_distance(a, b)
    assert d1 == pytest.approx(phase_curve_distance(b, a))
    assert d1 <= math.hypot(dx, dy) + 1e-12


def test_scaling_lemma_same_phase_curve():
    v = VectorField(2, lambda z: np.array([z[1], -z[0]]))
    sv = v.scaled(lambda z: 1.0 + z[0] ** 2 + z[1] ** 2)
    a = integrate(v, [1.0, 0.0], 2 * math.pi / 2000, 2000)
    b = integrate(sv, [1.0, 0.0], math.pi / 2000, 2000)
    assert phase_curve_distance(a, b) < 1e-3
