"""Uniform grids on the flat torus [0, 2*pi)^d and the calculus on them.

Fields on a grid are plain numpy arrays of shape ``grid.shape``; vector
fields carry a leading axis of length ``grid.dim``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, DomainError, ResolutionError

TWO_PI = 2.0 * np.pi

# Positivity floor used only inside logarithms.
LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class TorusGrid:
    """Uniform discretization of the d-dimensional flat torus."""

    dim: int
    points_per_axis: int

    @property
    def spacing(self) -> float:
        return TWO_PI / self.points_per_axis

    @property
    def nodes(self) -> np.ndarray:
        """Coordinates ``2*pi*i/n`` of one axis."""
        return TWO_PI * np.arange(self.points_per_axis) / self.points_per_axis

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    def mesh(self) -> np.ndarray:
        """Node coordinates, shape ``(dim, *shape)``; for d=1 shape ``(n,)``."""
        if self.dim == 1:
            return self.nodes
        return np.stack(np.meshgrid(*([self.nodes] * self.dim), indexing="ij"))

    def resolves(self, s: float, tau: float) -> bool:
        """True when the heat-kernel width sqrt(tau*s) spans two cells."""
        return math.sqrt(tau * s) >= 2.0 * self.spacing


def make_grid(dim: int, n: int) -> TorusGrid:
    if dim < 1:
        raise ConfigurationError(f"dim must be >= 1, got {dim}")
    if n < 4 or n % 2:
        raise ConfigurationError(f"points per axis must be even and >= 4, got {n}")
    return TorusGrid(int(dim), int(n))


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Probability density sampled at the nodes of a grid.

    The constructor checks nonnegativity and unit mass; use
    :meth:`normalized` to build one from unnormalized values.
    """

    grid: TorusGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ConfigurationError(
                f"density has shape {values.shape}, grid expects {self.grid.shape}"
            )
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise DomainError("density values must be finite and nonnegative")
        mass = values.sum() * self.grid.cell_volume
        if abs(mass - 1.0) > 1e-12:
            raise DomainError(f"density has mass {mass!r}, expected 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def normalized(cls, grid: TorusGrid, values) -> "GridDensity":
        values = np.asarray(values, dtype=float)
        return cls(grid, values / (values.sum() * grid.cell_volume))

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)


def uniform_density(grid: TorusGrid) -> GridDensity:
    return GridDensity(grid, np.full(grid.shape, 1.0 / grid.cell_volume / grid.size))


def von_mises_density(grid: TorusGrid, kappa: float = 1.0, center=0.0) -> GridDensity:
    """Density proportional to ``exp(kappa * sum_a cos(x_a - center_a))``."""
    x = grid.mesh().reshape((grid.dim,) + grid.shape)
    center = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    expo = sum(kappa * np.cos(x[a] - center[a]) for a in range(grid.dim))
    return GridDensity.normalized(grid, np.exp(expo - np.max(expo)))


def wrapped_gaussian_density(grid: TorusGrid, center=np.pi, variance: float = 0.05) -> GridDensity:
    """Wrapped normal density with isotropic variance, evaluated exactly."""
    x = grid.mesh().reshape((grid.dim,) + grid.shape)
    center = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    values = np.ones(grid.shape)
    for a in range(grid.dim):
        values = values * wrapped_gaussian(x[a] - center[a], variance)
    return GridDensity.normalized(grid, values)


# ---------------------------------------------------------------------------
# heat kernel


def _wrap_displacement(delta):
    return np.mod(np.asarray(delta, dtype=float) + np.pi, TWO_PI) - np.pi


def wrapped_gaussian(delta, variance: float) -> np.ndarray:
    """1-D wrapped normal density of the displacement ``delta``.

    Images are summed until the Gaussian tail drops below 1e-16.
    """
    delta = _wrap_displacement(delta)
    # |delta + 2 pi k| >= pi (2|k| - 1) for |delta| <= pi
    K = 1 + math.ceil(math.sqrt(2.0 * variance * 37.0) / TWO_PI + 0.5)
    total = np.zeros_like(delta)
    for k in range(-K, K + 1):
        total += np.exp(-((delta + TWO_PI * k) ** 2) / (2.0 * variance))
    return total / math.sqrt(TWO_PI * variance)


def fourier_heat(delta, variance: float) -> np.ndarray:
    """1-D heat kernel as the Fourier series ``(2pi)^-1 sum_k exp(-v k^2/2) cos(k delta)``.

    Modes with ``exp(-v k^2/2) < 1e-18`` are dropped.
    """
    delta = np.asarray(delta, dtype=float)
    kmax = math.ceil(math.sqrt(2.0 * 41.5 / variance))
    total = np.full_like(delta, 1.0)
    for k in range(1, kmax + 1):
        total += 2.0 * math.exp(-variance * k * k / 2.0) * np.cos(k * delta)
    return total / TWO_PI


def heat_kernel_values(delta, s: float, tau: float, method: str = "auto") -> np.ndarray:
    """Transition density of Brownian motion with temperature ``tau`` on T^1.

    ``method`` is ``"wrapped"``, ``"fourier"`` or ``"auto"`` (wrapped for
    tau*s <= 1, Fourier otherwise).
    """
    if s <= 0 or tau <= 0:
        raise DomainError(f"heat kernel needs s > 0 and tau > 0, got s={s}, tau={tau}")
    variance = tau * s
    if method == "auto":
        method = "wrapped" if variance <= 1.0 else "fourier"
    if method == "wrapped":
        return wrapped_gaussian(delta, variance)
    if method == "fourier":
        return fourier_heat(delta, variance)
    raise ConfigurationError(f"unknown heat kernel method {method!r}")


@dataclass(frozen=True, eq=False)
class HeatKernelMatrix:
    grid: TorusGrid
    time: float
    temperature: float
    entries: np.ndarray = field(repr=False)

    def row_mass(self) -> np.ndarray:
        return self.entries.sum(axis=1) * self.grid.cell_volume


def check_resolution(grid: TorusGrid, s: float, tau: float):
    if not grid.resolves(s, tau):
        raise ResolutionError(
            f"sqrt(tau*s) = {math.sqrt(tau * s):.4g} is below two grid spacings "
            f"({2 * grid.spacing:.4g}); refine the grid or lengthen the time"
        )


def heat_kernel(grid: TorusGrid, s: float, tau: float, method: str = "auto",
                check: bool = True) -> HeatKernelMatrix:
    """Matrix ``p_s(x_i, x_j)`` over all pairs of nodes (flattened C order).

    The multi-dimensional kernel is the Kronecker product of 1-D kernels.
    Rows are not renormalized.
    """
    if s <= 0 or tau <= 0:
        raise DomainError(f"heat kernel needs s > 0 and tau > 0, got s={s}, tau={tau}")
    if check:
        check_resolution(grid, s, tau)
    x = grid.nodes
    one = heat_kernel_values(x[:, None] - x[None, :], s, tau, method)
    one = 0.5 * (one + one.T)
    entries = one
    for _ in range(grid.dim - 1):
        entries = np.kron(entries, one)
    return HeatKernelMatrix(grid, float(s), float(tau), entries)


# ---------------------------------------------------------------------------
# spectral operators


def wavenumbers(grid: TorusGrid) -> list[np.ndarray]:
    """Integer wavenumbers for ``np.fft.rfftn`` over all axes, broadcastable."""
    n = grid.points_per_axis
    ks = []
    for a in range(grid.dim):
        k = np.fft.rfftfreq(n, 1.0 / n) if a == grid.dim - 1 else np.fft.fftfreq(n, 1.0 / n)
        shape = [1] * grid.dim
        shape[a] = k.size
        ks.append(k.reshape(shape))
    return ks


def _fft(grid, values):
    return np.fft.rfftn(values, axes=tuple(range(-grid.dim, 0)))


def _ifft(grid, coeffs):
    return np.fft.irfftn(coeffs, s=grid.shape, axes=tuple(range(-grid.dim, 0)))


def _derivative_symbol(grid, axis):
    k = wavenumbers(grid)[axis]
    n = grid.points_per_axis
    return np.where(np.abs(k) == n // 2, 0.0, k) * 1j


def heat_semigroup(grid: TorusGrid, values, s: float, tau: float) -> np.ndarray:
    """Apply exp(s*tau/2*Laplacian) to the trigonometric interpolant of ``values``.

    Works on trailing grid axes, so a batch of fields can be passed.
    """
    if s < 0:
        raise DomainError(f"semigroup time must be >= 0, got {s}")
    if s == 0:
        return np.array(values, dtype=float)
    k2 = sum(k**2 for k in wavenumbers(grid))
    return _ifft(grid, _fft(grid, values) * np.exp(-0.5 * tau * s * k2))


def spectral_gradient(grid: TorusGrid, values) -> np.ndarray:
    coeffs = _fft(grid, values)
    return np.stack([_ifft(grid, coeffs * _derivative_symbol(grid, a)) for a in range(grid.dim)])


def central_gradient(grid: TorusGrid, values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    h = grid.spacing
    axes = range(values.ndim - grid.dim, values.ndim)
    return np.stack([(np.roll(values, -1, ax) - np.roll(values, 1, ax)) / (2 * h) for ax in axes])


def gradient(grid: TorusGrid, values, method: str = "spectral") -> np.ndarray:
    """Periodic gradient; returns shape ``(dim, *values.shape)``."""
    if method == "spectral":
        return spectral_gradient(grid, values)
    if method == "central":
        return central_gradient(grid, values)
    raise ConfigurationError(f"unknown differentiation method {method!r}")


def divergence(grid: TorusGrid, flux) -> np.ndarray:
    """Spectral divergence of a vector field with leading axis ``dim``."""
    flux = np.asarray(flux, dtype=float)
    total = 0.0
    for a in range(grid.dim):
        total = total + _fft(grid, flux[a]) * _derivative_symbol(grid, a)
    return _ifft(grid, total)


def integrate(grid: TorusGrid, values) -> float:
    """Rectangle rule over the torus (spectrally accurate for smooth periodic data)."""
    return float(np.sum(values) * grid.cell_volume)


# ---------------------------------------------------------------------------
# divergences


def _kl_terms(p, q, weight):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any((q <= 0) & (p > 0)):
        return math.inf
    mask = p > 0
    terms = p[mask] * (np.log(p[mask]) - np.log(np.maximum(q[mask], LOG_FLOOR)))
    return max(float(np.sum(terms) * weight), 0.0)


def kl_divergence(p: GridDensity, q: GridDensity) -> float:
    """Discrete KL(p || q) with 0 log 0 = 0; ``inf`` when p is not dominated by q."""
    if p.grid != q.grid:
        raise ConfigurationError("densities live on different grids")
    return _kl_terms(p.values, q.values, p.grid.cell_volume)


def kl_coupling(P, Q, weight: float = 1.0) -> float:
    """KL between two discrete couplings with joint quadrature weight ``weight``.

    Pass ``weight=1`` for probability-mass matrices and ``spacing**(2*dim)``
    for joint densities.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != Q.shape:
        raise ConfigurationError(f"coupling shapes differ: {P.shape} vs {Q.shape}")
    if np.any(P < 0) or np.any(Q < 0):
        raise DomainError("couplings must be nonnegative")
    return _kl_terms(P, Q, weight)
