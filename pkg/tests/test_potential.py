import math

import numpy as np
import pytest

from msbridge.exceptions import ConfigurationError, UnsupportedNormalizationError
from msbridge.fokker_planck import marginal_path, stationary_density
from msbridge.potential import (PotentialSpec, PotentialTerm, TimeCoeff, benchmark_potential,
                                bound_prefactor, constant_c1, constant_c2, cosine_potential,
                                psi_dt, psi_eval, psi_grad, psi_laplacian, u_derivatives, u_eval)
from msbridge.torus import make_grid, uniform_density, von_mises_density

ZERO = PotentialSpec(1, ())


def random_spec(rng, dim=1):
    terms = []
    for _ in range(3):
        k = tuple(int(v) for v in rng.integers(-3, 4, size=dim))
        if not any(k):
            k = (1,) + k[1:]
        coeff = (TimeCoeff("polynomial", tuple(rng.normal(size=3))) if rng.random() < 0.5
                 else TimeCoeff.harmonic(*rng.normal(size=3)))
        terms.append(PotentialTerm(k, "cos" if rng.random() < 0.5 else "sin", coeff))
    return PotentialSpec(dim, tuple(terms))


def test_zero_spec():
    x = np.linspace(0, 6, 5)
    for f in (psi_eval, psi_dt, psi_laplacian):
        assert np.all(f(ZERO, 0.3, x) == 0)
    assert np.all(psi_grad(ZERO, 0.3, x) == 0)
    assert np.all(u_eval(ZERO, 0.3, x) == 0)
    for part in u_derivatives(ZERO, 0.3, x):
        assert np.all(np.asarray(part) == 0)


def test_benchmark_examples():
    spec = benchmark_potential()
    assert psi_grad(spec, 0.0, np.pi / 2)[0] == pytest.approx(-0.5, abs=1e-15)
    # the a(t) cos x part alone has d_t = 0.3 at (0, 0); the second term adds 0.2
    a_only = PotentialSpec(1, spec.terms[:2])
    assert psi_dt(a_only, 0.0, 0.0) == pytest.approx(0.3, abs=1e-15)
    assert psi_dt(spec, 0.0, 0.0) == pytest.approx(0.5, abs=1e-15)


def test_u_cosine():
    spec = cosine_potential(1.0)
    x = np.linspace(0, 2 * np.pi, 9)
    assert u_eval(spec, 0.0, 0.0) == pytest.approx(-0.5, abs=1e-15)
    assert np.allclose(u_eval(spec, 0.7, x), -0.5 * np.cos(x) + 0.5 * np.sin(x) ** 2, atol=1e-14)
    assert np.all(u_derivatives(spec, 0.7, x)[0] == 0)


def test_u_requires_unit_tau():
    with pytest.raises(UnsupportedNormalizationError):
        u_eval(cosine_potential(), 0.0, 0.0, tau=0.5)


@pytest.mark.parametrize("dim", [1, 2])
def test_derivatives_match_finite_differences(rng, dim):
    h = 1e-5
    for _ in range(4):
        spec = random_spec(rng, dim)
        for _ in range(25):
            t = rng.uniform(0, 1)
            x = rng.uniform(0, 2 * np.pi, size=dim)
            xs = x[0] if dim == 1 else x
            e = np.eye(dim)
            shift = (lambda a, s: x[0] + s * h) if dim == 1 else (lambda a, s: x + s * h * e[a])
            grad = spec.grad(t, xs)
            lap = 0.0
            for a in range(dim):
                fd = (spec.value(t, shift(a, 1)) - spec.value(t, shift(a, -1))) / (2 * h)
                assert fd == pytest.approx(grad[a], rel=1e-6, abs=1e-8)
                lap += (spec.grad(t, shift(a, 1))[a] - spec.grad(t, shift(a, -1))[a]) / (2 * h)
            assert lap == pytest.approx(spec.laplacian(t, xs), rel=1e-6, abs=1e-8)
            fd_t = (spec.value(t + h, xs) - spec.value(t - h, xs)) / (2 * h)
            assert fd_t == pytest.approx(spec.dt(t, xs), rel=1e-6, abs=1e-8)


def test_u_derivatives_match_finite_differences(rng):
    h = 1e-5
    for _ in range(3):
        spec = random_spec(rng)
        for _ in range(30):
            t, x = rng.uniform(0, 1), rng.uniform(0, 2 * np.pi)
            du_t, du_x, lap_u = u_derivatives(spec, t, x)
            fd_t = (u_eval(spec, t + h, x) - u_eval(spec, t - h, x)) / (2 * h)
            fd_x = (u_eval(spec, t, x + h) - u_eval(spec, t, x - h)) / (2 * h)
            grad_p = np.ravel(u_derivatives(spec, t, x + h)[1])[0]
            grad_m = np.ravel(u_derivatives(spec, t, x - h)[1])[0]
            fd_xx = (grad_p - grad_m) / (2 * h)
            assert fd_t == pytest.approx(du_t, rel=1e-6, abs=1e-7)
            assert fd_x == pytest.approx(np.ravel(du_x)[0], rel=1e-6, abs=1e-7)
            assert fd_xx == pytest.approx(lap_u, rel=1e-6, abs=1e-7)


def test_periodicity(rng):
    spec = random_spec(rng)
    x = rng.uniform(0, 2 * np.pi, 20)
    assert np.abs(spec.value(0.4, x) - spec.value(0.4, x + 2 * np.pi)).max() < 1e-12


def test_time_coeff_validation():
    with pytest.raises(ConfigurationError):
        TimeCoeff("polynomial", tuple(range(6)))
    with pytest.raises(ConfigurationError):
        TimeCoeff("exponential", (1.0,))
    c = TimeCoeff.harmonic(0.3)
    assert TimeCoeff.from_dict(c.to_dict()) == c


def test_records_roundtrip():
    spec = benchmark_potential()
    assert PotentialSpec.from_records(spec.to_records()) == spec


def test_c1_zero_and_cosine():
    grid = make_grid(1, 256)
    assert constant_c1(ZERO, grid) == 0.0
    spec = cosine_potential(1.0)
    # dense-sampling oracle at 10x resolution with U = -cos x / 2 + sin^2 x / 2
    x = np.linspace(0, 2 * np.pi, 2560, endpoint=False)
    grad_u = 0.5 * np.sin(x) + np.sin(x) * np.cos(x)
    lap_u = 0.5 * np.cos(x) + np.cos(2 * x)
    oracle = np.max(0.5 * np.abs(lap_u) + np.abs(grad_u * -np.sin(x)) + grad_u**2)
    assert constant_c1(spec, grid, 1.0, 64) == pytest.approx(oracle, rel=1e-3)


def test_c1_grows_with_amplitude():
    grid = make_grid(1, 64)
    assert constant_c1(cosine_potential(2.0), grid) >= constant_c1(cosine_potential(1.0), grid)


def test_c1_resolution_guard():
    with pytest.raises(ConfigurationError):
        constant_c1(cosine_potential(1.0, k=20), make_grid(1, 64))


def test_c1_monotone_under_refinement():
    spec = benchmark_potential()
    grid = make_grid(1, 64)
    assert constant_c1(spec, grid, 1.0, 128) >= constant_c1(spec, grid, 1.0, 16) - 1e-12


def test_c2_examples():
    grid = make_grid(1, 256)
    times = np.linspace(0, 1, 9)
    path = marginal_path(uniform_density(grid), ZERO, 1.0, times)
    assert constant_c2(ZERO, path) == pytest.approx(0.0, abs=1e-10)
    path = marginal_path(von_mises_density(grid, 1.0), ZERO, 1.0, times)
    assert constant_c2(ZERO, path) == pytest.approx(1.0, rel=0.02)
    spec = cosine_potential(1.0)
    path = marginal_path(stationary_density(grid, spec, 1.0), spec, 1.0, times)
    assert constant_c2(spec, path) == pytest.approx(2.0, rel=1e-6)


def test_bound_prefactor():
    assert bound_prefactor(2.0, 1.0) == pytest.approx(3 + math.sqrt(5))
    assert bound_prefactor(0.0, 3.0) == 0.0
