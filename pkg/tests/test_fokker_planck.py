import math

import numpy as np
import pytest

from msbridge.exceptions import CFLError, ConfigurationError, MissingTimeError
from msbridge.fokker_planck import (bin_masses, evolve, histogram_tv, marginal_path, min_steps,
                                    simulate_particles, stationary_density)
from msbridge.potential import PotentialSpec, benchmark_potential, cosine_potential
from msbridge.torus import (GridDensity, kl_divergence, make_grid, uniform_density,
                            von_mises_density, wrapped_gaussian_density)

ZERO = PotentialSpec(1, ())


def test_uniform_is_fixed_point():
    grid = make_grid(1, 64)
    rho = evolve(uniform_density(grid), ZERO, 1.0, 0.0, 0.7)
    assert np.abs(rho.values - 1 / (2 * np.pi)).max() < 1e-14


def test_wrapped_gaussian_heat_n200():
    grid = make_grid(1, 256)
    rho = evolve(wrapped_gaussian_density(grid, np.pi, 0.05), ZERO, 1.0, 0.0, 0.1, n_steps=200)
    assert np.abs(rho.values - wrapped_gaussian_density(grid, np.pi, 0.15).values).max() <= 1e-8


@pytest.mark.parametrize("amp,k", [(0.8, 1), (0.3, 2)])
def test_stationary_density_preserved(amp, k):
    grid = make_grid(1, 128)
    spec = cosine_potential(amp, k)
    pi = stationary_density(grid, spec, 1.0)
    assert np.abs(evolve(pi, spec, 1.0, 0.0, 1.0).values - pi.values).max() <= 1e-6


def test_second_order_in_time():
    grid = make_grid(1, 128)
    spec = benchmark_potential()
    rho0 = wrapped_gaussian_density(grid, np.pi, 0.3)
    ref = evolve(rho0, spec, 1.0, 0.0, 0.5, n_steps=800).values
    errs = [np.abs(evolve(rho0, spec, 1.0, 0.0, 0.5, n_steps=n).values - ref).max() for n in (25, 50)]
    assert math.log2(errs[0] / errs[1]) >= 1.8


def test_grid_refinement_consistency():
    spec = benchmark_potential()
    out = {}
    for n in (32, 64, 128):
        grid = make_grid(1, n)
        rho = evolve(wrapped_gaussian_density(grid, np.pi, 0.3), spec, 1.0, 0.0, 0.3, n_steps=300)
        out[n] = rho.values
    # spectral in space, so the coarse grids already agree at nodes shared with the fine one
    assert np.abs(out[64] - out[128][::2]).max() <= np.abs(out[32] - out[128][::4]).max() + 1e-14
    assert np.abs(out[64] - out[128][::2]).max() < 1e-8


def test_cfl_error():
    grid = make_grid(1, 256)
    spec = cosine_potential(5.0)
    need = min_steps(spec, grid, 0.0, 1.0)
    with pytest.raises(CFLError) as info:
        evolve(von_mises_density(grid), spec, 1.0, 0.0, 1.0, n_steps=need - 1)
    assert info.value.min_steps == need


def test_mass_conserved():
    grid = make_grid(1, 64)
    rho = evolve(von_mises_density(grid, 2.0), benchmark_potential(), 1.0, 0.0, 1.0)
    assert rho.mass == pytest.approx(1.0, abs=1e-12)


def test_h_theorem_zero_drift():
    grid = make_grid(1, 128)
    path = marginal_path(wrapped_gaussian_density(grid, 1.0, 0.1), ZERO, 1.0, np.linspace(0, 1, 21))
    u = uniform_density(grid)
    kls = [kl_divergence(rho, u) for rho in path.densities]
    assert all(b <= a + 1e-10 for a, b in zip(kls, kls[1:]))


def test_marginal_path_composition():
    grid = make_grid(1, 64)
    spec = benchmark_potential()
    rho0 = von_mises_density(grid, 1.0)
    path = marginal_path(rho0, spec, 1.0, [0.0, 0.5, 1.0])
    assert path.at(0.0) is rho0
    mid = evolve(rho0, spec, 1.0, 0.0, 0.5)
    end = evolve(mid, spec, 1.0, 0.5, 1.0)
    assert np.array_equal(path.at(0.5).values, mid.values)
    assert np.array_equal(path.at(1.0).values, end.values)
    with pytest.raises(MissingTimeError):
        path.at(0.25)
    assert 0.5 in path and 0.25 not in path


def test_marginal_path_zero_only_and_uniform():
    grid = make_grid(1, 32)
    rho0 = von_mises_density(grid)
    assert marginal_path(rho0, benchmark_potential(), 1.0, [0.0]).at(0.0) is rho0
    path = marginal_path(uniform_density(grid), ZERO, 1.0, [0.1, 0.2, 0.9])
    for rho in path.densities:
        assert np.abs(rho.values - 1 / (2 * np.pi)).max() < 1e-14
    with pytest.raises(ConfigurationError):
        marginal_path(rho0, ZERO, 1.0, [-0.1])


def test_marginal_path_csv(tmp_path):
    grid = make_grid(1, 8)
    path = marginal_path(uniform_density(grid), ZERO, 1.0, [0.0, 1.0])
    path.to_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_bytes().split(b"\n")
    assert lines[0] == b"t,node_index,x,density"
    assert len(lines) == 2 * 8 + 2 and lines[-1] == b""


def test_bin_masses_exact():
    grid = make_grid(1, 64)
    rho = von_mises_density(grid, 1.0)
    masses = bin_masses(rho, 16)
    assert masses.sum() == pytest.approx(1.0, abs=1e-14)
    # exp(cos x) is not band-limited, but 64 nodes resolve it to roundoff
    from scipy.integrate import quad
    z = 2 * np.pi * np.i0(1.0)
    oracle = quad(lambda x: math.exp(math.cos(x)) / z, 0, 2 * np.pi / 16)[0]
    assert masses[0] == pytest.approx(oracle, abs=1e-13)


def test_particles_uniform_tv():
    grid = make_grid(1, 64)
    ens = simulate_particles(uniform_density(grid), ZERO, 1.0, [0.1], 100_000, dt=0.05, seed=3)
    assert histogram_tv(ens[0].positions, uniform_density(grid)) <= 0.02


def test_particles_frozen():
    grid = make_grid(1, 64)
    ens = simulate_particles(von_mises_density(grid), ZERO, 1e-12, [0.0, 1.0], 1, dt=0.1, seed=5)
    assert abs(ens[1].positions[0] - ens[0].positions[0]) < 1e-5


def test_particles_match_density_cosine():
    grid = make_grid(1, 128)
    spec = cosine_potential(1.0)
    rho0 = von_mises_density(grid, 1.0, np.pi)
    ens = simulate_particles(rho0, spec, 1.0, [0.5], 100_000, dt=1e-3, seed=11)
    rho = evolve(rho0, spec, 1.0, 0.0, 0.5)
    assert histogram_tv(ens[0].positions, rho) <= 0.05


def test_particles_deterministic():
    grid = make_grid(1, 32)
    a = simulate_particles(von_mises_density(grid), benchmark_potential(), 1.0, [0.2], 500, 1e-2, seed=9)
    b = simulate_particles(von_mises_density(grid), benchmark_potential(), 1.0, [0.2], 500, 1e-2, seed=9)
    c = simulate_particles(von_mises_density(grid), benchmark_potential(), 1.0, [0.2], 500, 1e-2, seed=10)
    assert np.array_equal(a[0].positions, b[0].positions)
    assert not np.array_equal(a[0].positions, c[0].positions)


def test_stationary_density_shape():
    grid = make_grid(1, 64)
    spec = cosine_potential(1.0)
    pi = stationary_density(grid, spec, 1.0)
    expected = GridDensity.normalized(grid, np.exp(2 * np.cos(grid.nodes)))
    assert np.abs(pi.values - expected.values).max() < 1e-14
