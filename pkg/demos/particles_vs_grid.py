"""Euler-Maruyama particles against the grid Fokker-Planck solver.

The grid solver is the ground truth used everywhere else; this script
shows the Monte Carlo cross-check and how its error shrinks with N.
"""

import numpy as np

from msbridge import benchmark_potential, make_grid, marginal_path, simulate_particles, von_mises_density
from msbridge.fokker_planck import histogram_tv

grid = make_grid(1, 256)
spec = benchmark_potential()
rho0 = von_mises_density(grid, 1.0)
times = [0.25, 0.5, 1.0]
path = marginal_path(rho0, spec, 1.0, times)

for n_particles in (1_000, 10_000, 100_000):
    ens = simulate_particles(rho0, spec, 1.0, times, n_particles, dt=1e-3, seed=0)
    tvs = [histogram_tv(e.positions, path.at(e.time)) for e in ens]
    print(f"N={n_particles:7d}  TV at t={times}: " + ", ".join(f"{v:.4f}" for v in tvs))

# the drift is +grad Psi, so mass collects near the maximum of Psi at x = 0
rho = path.at(1.0)
print(f"density at x=0: {rho.values[0]:.4f}, at x=pi: {rho.values[grid.points_per_axis // 2]:.4f}")
