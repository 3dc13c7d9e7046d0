import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sint

from msbridge.exceptions import ConfigurationError, DomainError, ResolutionError
from msbridge.torus import (GridDensity, fourier_heat, gradient, heat_kernel, heat_semigroup,
                            integrate, kl_coupling, kl_divergence, make_grid, uniform_density,
                            von_mises_density, wrapped_gaussian, wrapped_gaussian_density)


def test_make_grid_n8():
    grid = make_grid(1, 8)
    assert np.allclose(grid.nodes, np.arange(8) * np.pi / 4)
    assert grid.spacing == pytest.approx(np.pi / 4)


def test_make_grid_spacing():
    grid = make_grid(1, 256)
    assert grid.spacing * grid.points_per_axis == pytest.approx(2 * np.pi, abs=1e-14)
    assert np.all(np.diff(grid.nodes) > 0) and grid.nodes[-1] < 2 * np.pi


@pytest.mark.parametrize("n", [7, 2, 0])
def test_make_grid_rejects_bad_n(n):
    with pytest.raises(ConfigurationError):
        make_grid(1, n)


def test_grid_density_checks(grid64):
    with pytest.raises(DomainError):
        GridDensity(grid64, np.full(64, 2.0))
    with pytest.raises(DomainError):
        GridDensity(grid64, -uniform_density(grid64).values)
    with pytest.raises(ConfigurationError):
        GridDensity(grid64, np.ones(32))
    assert uniform_density(grid64).mass == pytest.approx(1.0, abs=1e-12)


def test_heat_kernel_large_time_is_uniform():
    grid = make_grid(1, 32)
    K = heat_kernel(grid, 60.0, 1.0).entries
    assert np.abs(K - 1 / (2 * np.pi)).max() < 1e-12


def test_heat_kernel_symmetric_positive():
    K = heat_kernel(make_grid(1, 128), 0.05, 1.0).entries
    assert np.abs(K - K.T).max() <= 1e-12
    assert K.min() > 0


@pytest.mark.parametrize("s", [0.01, 0.1, 0.9, 1.1, 4.0])
def test_dual_representations_agree(s):
    delta = np.linspace(-7, 7, 301)
    assert np.abs(wrapped_gaussian(delta, s) - fourier_heat(delta, s)).max() <= 1e-12


def test_chapman_kolmogorov_n128():
    grid = make_grid(1, 128)
    k = heat_kernel(grid, 0.05, 1.0).entries
    assert np.abs(k @ k * grid.spacing - heat_kernel(grid, 0.1, 1.0).entries).max() <= 1e-10


def test_heat_kernel_2d_is_product():
    grid = make_grid(2, 8)
    K = heat_kernel(grid, 3.0, 1.0).entries
    one = heat_kernel(make_grid(1, 8), 3.0, 1.0).entries
    assert K.shape == (64, 64)
    assert K[9, 18] == pytest.approx(one[1, 2] * one[1, 2], rel=1e-14)
    assert np.abs(K.sum(axis=1) * grid.cell_volume - 1).max() < 1e-8


def test_resolution_guard():
    with pytest.raises(ResolutionError):
        heat_kernel(make_grid(1, 64), 1e-4, 1.0)
    with pytest.raises(DomainError):
        heat_kernel(make_grid(1, 64), 0.0, 1.0)


def test_heat_semigroup_matches_kernel():
    grid = make_grid(1, 128)
    rho = von_mises_density(grid, 2.0).values
    K = heat_kernel(grid, 0.2, 1.0).entries
    assert np.abs(heat_semigroup(grid, rho, 0.2, 1.0) - K @ rho * grid.spacing).max() < 1e-12


def test_gradient_examples():
    grid = make_grid(1, 64)
    x = grid.nodes
    assert np.abs(gradient(grid, np.full(64, 3.0))).max() < 1e-12
    assert np.abs(gradient(grid, np.sin(x))[0] - np.cos(x)).max() < 1e-12
    assert np.abs(gradient(grid, np.sin(3 * x))[0] - 3 * np.cos(3 * x)).max() < 1e-12


def test_central_gradient_second_order():
    errs = []
    for n in (64, 128):
        grid = make_grid(1, n)
        errs.append(np.abs(gradient(grid, np.sin(grid.nodes), "central")[0] - np.cos(grid.nodes)).max())
    assert math.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.05)


def test_gradient_2d():
    grid = make_grid(2, 16)
    X, Y = grid.mesh()
    g = gradient(grid, np.sin(X) * np.cos(2 * Y))
    assert np.abs(g[0] - np.cos(X) * np.cos(2 * Y)).max() < 1e-12
    assert np.abs(g[1] + 2 * np.sin(X) * np.sin(2 * Y)).max() < 1e-12


def test_integration_by_parts():
    grid = make_grid(1, 64)
    x = grid.nodes
    f = np.sin(x) + 0.3 * np.cos(4 * x)
    g = np.exp(np.cos(x))
    lhs = integrate(grid, gradient(grid, f)[0] * g)
    rhs = -integrate(grid, f * gradient(grid, g)[0])
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_integrate_examples():
    grid = make_grid(1, 64)
    assert integrate(grid, np.ones(64)) == pytest.approx(2 * np.pi, abs=1e-14)
    assert abs(integrate(grid, np.sin(grid.nodes))) < 1e-14
    assert integrate(grid, np.sin(grid.nodes) ** 2) == pytest.approx(np.pi, abs=1e-12)


def test_kl_identity_and_support():
    grid = make_grid(1, 16)
    p = von_mises_density(grid, 1.0)
    assert kl_divergence(p, p) == 0.0
    vals = p.values.copy()
    vals[3] = 0.0
    q = GridDensity.normalized(grid, vals)
    assert kl_divergence(p, q) == math.inf
    with pytest.raises(ConfigurationError):
        kl_divergence(p, uniform_density(make_grid(1, 8)))


def test_kl_uniform_vs_von_mises_fine_quadrature():
    grid = make_grid(1, 256)
    p, q = uniform_density(grid), von_mises_density(grid, 1.0)
    # q = exp(cos x) / (2 pi I0(1)); KL = int (1/2pi) log((1/2pi)/q) dx
    log_z = math.log(2 * math.pi * np.i0(1.0))
    oracle = sint.quad(lambda x: (-math.log(2 * math.pi) - math.cos(x) + log_z) / (2 * math.pi),
                       0, 2 * math.pi, epsabs=1e-14)[0]
    assert kl_divergence(p, q) == pytest.approx(oracle, abs=1e-8)


def test_kl_coupling_two_node_toy():
    P = np.array([[0.4, 0.1], [0.1, 0.4]])
    Q = np.full((2, 2), 0.25)
    expected = 0.4 * math.log(1.6) * 2 + 0.1 * math.log(0.4) * 2
    assert kl_coupling(P, Q) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.19274, abs=1e-5)


def test_kl_coupling_permutation_invariance(rng):
    p = rng.random(6)
    q = rng.random(5)
    P = np.outer(p / p.sum(), q / q.sum())
    perm = rng.permutation(6)
    assert kl_coupling(P, P) == 0.0
    assert kl_coupling(P[perm][np.argsort(perm)], P) == 0.0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.01, 10.0), min_size=16, max_size=16),
       st.lists(st.floats(0.01, 10.0), min_size=16, max_size=16))
def test_kl_nonnegative(a, b):
    grid = make_grid(1, 16)
    p = GridDensity.normalized(grid, a)
    q = GridDensity.normalized(grid, b)
    assert kl_divergence(p, q) >= 0.0


def test_wrapped_gaussian_density_mass():
    grid = make_grid(1, 128)
    rho = wrapped_gaussian_density(grid, np.pi, 0.05)
    assert rho.mass == pytest.approx(1.0, abs=1e-12)
    assert np.argmax(rho.values) == 64
