"""Marginals of dZ = grad Psi(t, Z) dt + sqrt(tau) dB on the torus.

The grid solver evolves the Fokker-Planck equation

    d_t rho = -div(rho grad Psi) + (tau/2) Laplacian(rho)

with Strang splitting: exact spectral diffusion half-steps around a
pseudo-spectral advection step integrated by classical RK4.  The particle
simulator is an independent Euler-Maruyama cross-check.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import CFLError, ConfigurationError, MissingTimeError, ResolutionError
from .potential import PotentialSpec
from .torus import TWO_PI, GridDensity, TorusGrid, wavenumbers, _derivative_symbol, _fft, _ifft

log = logging.getLogger(__name__)

CFL_LIMIT = 0.5
DEFAULT_MAX_DT = 1e-3
# Clip mass above this means the grid does not resolve the solution.
MAX_CLIP_MASS = 1e-8


def stationary_density(grid: TorusGrid, spec: PotentialSpec, tau: float, t: float = 0.0) -> GridDensity:
    """Density proportional to exp(2 Psi(t, .) / tau)."""
    expo = 2.0 * spec.value(t, grid.mesh()) / tau
    return GridDensity.normalized(grid, np.exp(expo - expo.max()))


def min_steps(spec: PotentialSpec, grid: TorusGrid, t_from: float, t_to: float) -> int:
    """Smallest step count satisfying the advection CFL bound."""
    vmax = spec.max_gradient_norm(t_from, t_to, grid)
    if vmax == 0.0:
        return 1
    return max(1, math.ceil(vmax * abs(t_to - t_from) / (CFL_LIMIT * grid.spacing) - 1e-12))


def default_steps(spec, grid, t_from, t_to, max_dt=DEFAULT_MAX_DT) -> int:
    return max(min_steps(spec, grid, t_from, t_to), math.ceil(abs(t_to - t_from) / max_dt - 1e-9), 1)


def _advect_rhs(grid, spec, t, rho, x):
    # -div(rho grad Psi); rho may carry leading batch axes
    v = spec.grad(t, x)
    total = 0.0
    for a in range(grid.dim):
        total = total + _fft(grid, rho * v[a]) * _derivative_symbol(grid, a)
    return -_ifft(grid, total)


def _evolve_values(grid, values, spec, tau, t_from, t_to, n_steps):
    dt = (t_to - t_from) / n_steps
    k2 = sum(k**2 for k in wavenumbers(grid))
    half = np.exp(-0.25 * tau * dt * k2)
    x = grid.mesh()
    rho = np.array(values, dtype=float)
    if spec.is_zero:
        return _ifft(grid, _fft(grid, rho) * np.exp(-0.5 * tau * (t_to - t_from) * k2))
    for i in range(n_steps):
        t = t_from + i * dt
        rho = _ifft(grid, _fft(grid, rho) * half)
        k1 = _advect_rhs(grid, spec, t, rho, x)
        k2_ = _advect_rhs(grid, spec, t + dt / 2, rho + dt / 2 * k1, x)
        k3 = _advect_rhs(grid, spec, t + dt / 2, rho + dt / 2 * k2_, x)
        k4 = _advect_rhs(grid, spec, t + dt, rho + dt * k3, x)
        rho = rho + dt / 6 * (k1 + 2 * k2_ + 2 * k3 + k4)
        rho = _ifft(grid, _fft(grid, rho) * half)
    return rho


def _clip(grid, values, where=""):
    neg = values < 0
    if not neg.any():
        return values
    clip_mass = float(-values[neg].sum() * grid.cell_volume)
    if clip_mass > MAX_CLIP_MASS:
        raise ResolutionError(f"negative mass {clip_mass:.3g} after evolution{where}; refine the grid")
    log.debug("clipped negative mass %.3g%s", clip_mass, where)
    return np.where(neg, 0.0, values)


def evolve(rho0: GridDensity, spec: PotentialSpec, tau: float, t_from: float, t_to: float,
           n_steps: int | None = None, max_dt: float = DEFAULT_MAX_DT) -> GridDensity:
    """Evolve a density from ``t_from`` to ``t_to``.

    ``n_steps`` defaults to the larger of the CFL minimum and
    ``ceil((t_to - t_from) / max_dt)``.  An explicit ``n_steps`` below the
    CFL minimum raises :class:`CFLError`.
    """
    if tau <= 0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    if t_to < t_from:
        raise ConfigurationError("evolve only runs forward in time")
    grid = rho0.grid
    if t_to == t_from:
        return rho0
    need = min_steps(spec, grid, t_from, t_to)
    if n_steps is None:
        n_steps = default_steps(spec, grid, t_from, t_to, max_dt)
    elif n_steps < need:
        raise CFLError(f"n_steps={n_steps} violates the advection CFL limit; use n_steps >= {need}", need)
    values = _evolve_values(grid, rho0.values, spec, tau, t_from, t_to, n_steps)
    values = _clip(grid, values)
    return GridDensity.normalized(grid, values)


def evolve_batch(grid: TorusGrid, values, spec: PotentialSpec, tau: float, t_from: float, t_to: float,
                 n_steps: int | None = None, max_dt: float = DEFAULT_MAX_DT) -> np.ndarray:
    """Evolve a stack of 1-D densities (shape ``(batch, n)``) without renormalizing.

    Intermediate negative values are kept, so the result is the linear
    discrete propagator applied to each row.
    """
    if grid.dim != 1:
        raise ConfigurationError("evolve_batch supports d = 1 only")
    if n_steps is None:
        n_steps = default_steps(spec, grid, t_from, t_to, max_dt)
    return _evolve_values(grid, np.asarray(values, dtype=float), spec, tau, t_from, t_to, n_steps)


@dataclass(frozen=True, eq=False)
class MarginalPath:
    grid: TorusGrid
    times: np.ndarray
    densities: list = field(repr=False)
    spec: PotentialSpec = field(repr=False)
    tau: float = 1.0

    def index(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t - 1e-12 * max(1.0, abs(t))))
        if i < len(self.times) and abs(self.times[i] - t) <= 1e-12 * max(1.0, abs(t)):
            return i
        raise MissingTimeError(f"marginal path has no density at t={t!r}")

    def at(self, t: float) -> GridDensity:
        return self.densities[self.index(t)]

    def __contains__(self, t) -> bool:
        try:
            self.index(t)
        except MissingTimeError:
            return False
        return True

    def to_csv(self, path):
        """Write columns ``t, node_index, x, density`` (d = 1)."""
        x = self.grid.mesh().reshape(self.grid.dim, -1) if self.grid.dim > 1 else self.grid.nodes[None]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "node_index", "x", "density"])
            for t, rho in zip(self.times, self.densities):
                flat = rho.values.reshape(-1)
                for i in range(flat.size):
                    coord = ";".join(repr(float(v)) for v in x[:, i])
                    writer.writerow([repr(float(t)), i, coord, repr(float(flat[i]))])


def marginal_path(rho0: GridDensity, spec: PotentialSpec, tau: float, query_times,
                  t_start: float = 0.0, max_dt: float = DEFAULT_MAX_DT) -> MarginalPath:
    """Densities at sorted ``query_times`` by chaining :func:`evolve` calls.

    ``rho0`` is the density at ``t_start``; consecutive query times are
    joined by one ``evolve`` call each, with the default step policy.
    """
    times = np.unique(np.asarray(query_times, dtype=float))
    if times.size == 0:
        raise ConfigurationError("no query times")
    if times[0] < t_start - 1e-15:
        raise ConfigurationError("query times precede the initial time")
    densities = []
    current, t_cur = rho0, t_start
    for t in times:
        if t > t_cur:
            current = evolve(current, spec, tau, t_cur, t, max_dt=max_dt)
            t_cur = t
        densities.append(current)
    return MarginalPath(rho0.grid, times, densities, spec, tau)


# ---------------------------------------------------------------------------
# particles


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    positions: np.ndarray = field(repr=False)
    time: float
    seed: int


def sample_density(rho: GridDensity, size: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF sampling with each node owning the cell centred on it (d = 1)."""
    grid = rho.grid
    if grid.dim != 1:
        raise ConfigurationError("particle sampling supports d = 1 only")
    p = rho.values * grid.cell_volume
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    cells = np.searchsorted(cdf, rng.random(size), side="right")
    cells = np.minimum(cells, grid.points_per_axis - 1)
    x = grid.nodes[cells] + (rng.random(size) - 0.5) * grid.spacing
    return np.mod(x, TWO_PI)


def simulate_particles(rho0: GridDensity, spec: PotentialSpec, tau: float, times, n_particles: int,
                       dt: float = 1e-4, seed: int = 0, t_start: float = 0.0) -> list[ParticleEnsemble]:
    """Euler-Maruyama ensembles at each of the sorted ``times``.

    Steps between recorded times are shrunk uniformly so every time is hit.
    """
    if n_particles < 1 or dt <= 0:
        raise ConfigurationError("need n_particles >= 1 and dt > 0")
    rng = np.random.Generator(np.random.Philox(seed))
    z = sample_density(rho0, n_particles, rng)
    t_cur = t_start
    out = []
    for t in sorted(float(v) for v in times):
        if t < t_cur:
            raise ConfigurationError("requested times precede the start time")
        n = math.ceil((t - t_cur) / dt - 1e-9) if t > t_cur else 0
        h = (t - t_cur) / n if n else 0.0
        for i in range(n):
            s = t_cur + i * h
            drift = spec.grad(s, z)[0] if not spec.is_zero else 0.0
            z = np.mod(z + drift * h + math.sqrt(tau * h) * rng.standard_normal(n_particles), TWO_PI)
        t_cur = t
        out.append(ParticleEnsemble(z.copy(), t, seed))
    return out


def ensembles_to_csv(ensembles, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "particle_index", "x"])
        for ens in ensembles:
            for i, x in enumerate(ens.positions):
                writer.writerow([repr(float(ens.time)), i, repr(float(x))])


def bin_masses(rho: GridDensity, n_bins: int) -> np.ndarray:
    """Exact integrals of the trigonometric interpolant of ``rho`` over equal bins."""
    grid = rho.grid
    n = grid.points_per_axis
    c = np.fft.rfft(rho.values) / n
    edges = np.linspace(0.0, TWO_PI, n_bins + 1)
    k = np.arange(1, n // 2)
    # rho(x) = c0 + 2 Re sum_k c_k e^{ikx} + c_{n/2} cos(n x / 2)
    prim = c[0].real * edges
    prim = prim + 2.0 * ((np.exp(1j * np.outer(edges, k)) / (1j * k)) @ c[1:n // 2]).real
    prim = prim + c[n // 2].real * np.sin(n / 2 * edges) / (n / 2)
    return np.diff(prim)


def histogram_tv(positions, rho: GridDensity, n_bins: int = 64) -> float:
    """Total variation between the particle histogram and the binned density."""
    counts, _ = np.histogram(np.mod(positions, TWO_PI), bins=n_bins, range=(0.0, TWO_PI))
    return 0.5 * float(np.abs(counts / counts.sum() - bin_masses(rho, n_bins)).sum())
