"""Time-dependent potentials as real trigonometric polynomials.

A potential is a finite sum of terms ``a(t) * cos(k.x)`` or ``a(t) * sin(k.x)``
with integer wave vectors ``k``.  Every space-time derivative is therefore
available in closed form, which the constant evaluators rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .exceptions import ConfigurationError, UnsupportedNormalizationError
from .torus import LOG_FLOOR, TorusGrid, gradient

__all__ = [
    "TimeCoeff", "PotentialTerm", "PotentialSpec",
    "psi_eval", "psi_grad", "psi_laplacian", "psi_dt",
    "u_eval", "u_derivatives", "constant_c1", "constant_c2",
    "benchmark_potential", "cosine_potential",
]


@dataclass(frozen=True)
class TimeCoeff:
    """Time profile of one term.

    ``polynomial``: ``sum_j c_j t^j`` (degree <= 4).
    ``harmonic``: ``amplitude * sin(frequency * t + phase)``.
    """

    kind: str = "polynomial"
    coefficients: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if self.kind == "polynomial":
            if not 1 <= len(self.coefficients) <= 5:
                raise ConfigurationError("polynomial time coefficient needs 1..5 coefficients")
        elif self.kind == "harmonic":
            if len(self.coefficients) != 3:
                raise ConfigurationError("harmonic time coefficient is (amplitude, frequency, phase)")
        else:
            raise ConfigurationError(f"unknown time coefficient kind {self.kind!r}")

    @classmethod
    def constant(cls, value: float) -> "TimeCoeff":
        return cls("polynomial", (value,))

    @classmethod
    def harmonic(cls, amplitude: float, frequency: float = 1.0, phase: float = 0.0) -> "TimeCoeff":
        return cls("harmonic", (amplitude, frequency, phase))

    def __call__(self, t, order: int = 0):
        """Value of the ``order``-th time derivative at ``t``."""
        t = np.asarray(t, dtype=float)
        if self.kind == "polynomial":
            c = np.polynomial.polynomial.polyder(self.coefficients, order) if order else self.coefficients
            return np.polynomial.polynomial.polyval(t, c)
        amp, freq, phase = self.coefficients
        # d^j/dt^j sin(w t + p) = w^j sin(w t + p + j pi/2)
        return amp * freq**order * np.sin(freq * t + phase + order * np.pi / 2)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "coefficients": list(self.coefficients)}

    @classmethod
    def from_dict(cls, data) -> "TimeCoeff":
        if isinstance(data, (int, float)):
            return cls.constant(float(data))
        return cls(data.get("kind", "polynomial"), tuple(data["coefficients"]))


@dataclass(frozen=True)
class PotentialTerm:
    k: tuple[int, ...]
    phase: str
    coeff: TimeCoeff

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(int(v) for v in np.atleast_1d(self.k)))
        if self.phase not in ("cos", "sin"):
            raise ConfigurationError(f"phase must be 'cos' or 'sin', got {self.phase!r}")


@dataclass(frozen=True)
class PotentialSpec:
    dim: int = 1
    terms: tuple[PotentialTerm, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        for term in self.terms:
            if len(term.k) != self.dim:
                raise ConfigurationError(f"wave vector {term.k} does not match dim={self.dim}")

    @property
    def k_max(self) -> int:
        return max((max(abs(v) for v in term.k) for term in self.terms), default=0)

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def scaled(self, factor: float) -> "PotentialSpec":
        terms = []
        for term in self.terms:
            c = term.coeff
            coeffs = list(c.coefficients)
            if c.kind == "polynomial":
                coeffs = [factor * v for v in coeffs]
            else:
                coeffs[0] *= factor
            terms.append(PotentialTerm(term.k, term.phase, TimeCoeff(c.kind, tuple(coeffs))))
        return PotentialSpec(self.dim, tuple(terms))

    def partial(self, t, x, alpha=None, time_order: int = 0) -> np.ndarray:
        """Mixed derivative ``d_t^time_order d_x^alpha Psi`` at (t, x).

        For ``dim == 1`` ``x`` is any array of coordinates; otherwise its
        leading axis has length ``dim``.  ``alpha`` is a tuple of per-axis
        orders (default: no space derivative).
        """
        x = np.asarray(x, dtype=float)
        xs = x[None] if self.dim == 1 else x
        alpha = tuple(alpha) if alpha is not None else (0,) * self.dim
        out = np.zeros(xs.shape[1:])
        for term in self.terms:
            amp = term.coeff(t, time_order)
            if np.all(amp == 0):
                continue
            # (ik)^alpha e^{ik.x} = prod(k^alpha) * i^|alpha| * e^{ik.x}
            factor = float(np.prod([float(kv) ** av for kv, av in zip(term.k, alpha)]))
            if factor == 0:
                continue
            arg = sum(kv * xs[a] for a, kv in enumerate(term.k) if kv)
            quarter = (sum(alpha) + (0 if term.phase == "cos" else 3)) % 4
            wave = np.cos(arg) if quarter % 2 == 0 else np.sin(arg)
            sign = -1.0 if quarter in (1, 2) else 1.0
            out = out + (amp * sign * factor) * wave
        return out

    def _unit(self, *axes):
        alpha = [0] * self.dim
        for a in axes:
            alpha[a] += 1
        return tuple(alpha)

    def value(self, t, x):
        return self.partial(t, x)

    def grad(self, t, x, time_order: int = 0):
        return np.stack([self.partial(t, x, self._unit(a), time_order) for a in range(self.dim)])

    def laplacian(self, t, x, time_order: int = 0, extra=()):
        return sum(self.partial(t, x, self._unit(a, a, *extra), time_order) for a in range(self.dim))

    def dt(self, t, x):
        return self.partial(t, x, time_order=1)

    def hessian(self, t, x):
        return [[self.partial(t, x, self._unit(a, b)) for b in range(self.dim)]
                for a in range(self.dim)]

    def max_gradient_norm(self, t_from: float, t_to: float, grid: TorusGrid, n_t: int = 17) -> float:
        """Sampled sup of |grad Psi| over [t_from, t_to] x grid."""
        if self.is_zero:
            return 0.0
        x = grid.mesh()
        best = 0.0
        for t in np.linspace(t_from, t_to, n_t):
            g = self.grad(t, x)
            best = max(best, float(np.sqrt((g**2).sum(axis=0)).max()))
        return best

    def to_records(self) -> list[dict]:
        return [{"k": list(term.k), "phase": term.phase, "time_coeff": term.coeff.to_dict()}
                for term in self.terms]

    @classmethod
    def from_records(cls, records, dim: int = 1) -> "PotentialSpec":
        terms = tuple(
            PotentialTerm(tuple(np.atleast_1d(r["k"])), r.get("phase", "cos"),
                          TimeCoeff.from_dict(r.get("time_coeff", 1.0)))
            for r in records or ()
        )
        return cls(dim, terms)


def cosine_potential(amplitude: float = 1.0, k: int = 1) -> PotentialSpec:
    """Time-independent ``amplitude * cos(k x)`` on T^1."""
    return PotentialSpec(1, (PotentialTerm((k,), "cos", TimeCoeff.constant(amplitude)),))


def benchmark_potential() -> PotentialSpec:
    """``(0.5 + 0.3 sin t) cos x + 0.2 sin t cos 2x``."""
    return PotentialSpec(1, (
        PotentialTerm((1,), "cos", TimeCoeff.constant(0.5)),
        PotentialTerm((1,), "cos", TimeCoeff.harmonic(0.3)),
        PotentialTerm((2,), "cos", TimeCoeff.harmonic(0.2)),
    ))


def psi_eval(spec: PotentialSpec, t, x):
    return spec.value(t, x)


def psi_grad(spec: PotentialSpec, t, x):
    return spec.grad(t, x)


def psi_laplacian(spec: PotentialSpec, t, x):
    return spec.laplacian(t, x)


def psi_dt(spec: PotentialSpec, t, x):
    return spec.dt(t, x)


def _require_unit_tau(tau):
    if tau != 1:
        raise UnsupportedNormalizationError(
            f"U and the bound constants are defined for tau = 1 only (got tau={tau}); "
            "rescale time so that tau = 1"
        )


def u_eval(spec: PotentialSpec, t, x, tau: float = 1.0):
    """``U = d_t Psi + Laplacian(Psi)/2 + |grad Psi|^2/2``."""
    _require_unit_tau(tau)
    g = spec.grad(t, x)
    return spec.dt(t, x) + 0.5 * spec.laplacian(t, x) + 0.5 * (g**2).sum(axis=0)


def u_derivatives(spec: PotentialSpec, t, x, tau: float = 1.0):
    """Return ``(d_t U, grad U, Laplacian U)`` from term-by-term differentiation."""
    _require_unit_tau(tau)
    d = spec.dim
    g = spec.grad(t, x)
    g_t = spec.grad(t, x, time_order=1)
    hess = spec.hessian(t, x)
    # third-order: d_a Laplacian(Psi)
    grad_lap = np.stack([spec.laplacian(t, x, extra=(a, )) for a in range(d)]) \
        if d > 1 else np.stack([spec.partial(t, x, (3,))])

    du_dt = (spec.partial(t, x, time_order=2)
             + 0.5 * spec.laplacian(t, x, time_order=1)
             + (g * g_t).sum(axis=0))
    grad_u = np.stack([
        g_t[a] + 0.5 * grad_lap[a] + sum(g[b] * hess[a][b] for b in range(d))
        for a in range(d)
    ])
    bilap = sum(spec.partial(t, x, spec._unit(a, a, b, b)) for a, b in product(range(d), repeat=2))
    lap_u = (spec.laplacian(t, x, time_order=1)
             + 0.5 * bilap
             + sum(hess[a][b] ** 2 for a, b in product(range(d), repeat=2))
             + (g * grad_lap).sum(axis=0))
    return du_dt, grad_u, lap_u


def _c1_integrand(spec, t, x):
    du_dt, grad_u, lap_u = u_derivatives(spec, t, x)
    g = spec.grad(t, x)
    return (np.abs(du_dt) + 0.5 * np.abs(lap_u)
            + np.abs((grad_u * g).sum(axis=0)) + (grad_u**2).sum(axis=0))


def constant_c1(spec: PotentialSpec, grid: TorusGrid, T: float = 1.0, n_t: int = 64) -> float:
    """Sampled maximum of |d_t U| + |Lap U|/2 + |grad U . grad Psi| + |grad U|^2.

    The sup runs over ``n_t`` equispaced times in [0, T] (endpoints
    included) and all grid nodes.  Requires tau = 1 scaling.
    """
    if spec.is_zero:
        return 0.0
    if grid.points_per_axis < 4 * spec.k_max:
        raise ConfigurationError(
            f"grid with n={grid.points_per_axis} under-samples k_max={spec.k_max}; need n >= {4 * spec.k_max}"
        )
    if n_t < 16:
        raise ConfigurationError(f"need at least 16 time samples, got {n_t}")
    x = grid.mesh()
    return max(float(_c1_integrand(spec, t, x).max()) for t in np.linspace(0.0, T, n_t))


def constant_c2(spec: PotentialSpec, marginal_path) -> float:
    """Sampled sup over the path of max(|grad Psi|, |grad log rho_t|)."""
    grid = marginal_path.grid
    x = grid.mesh()
    best = 0.0
    for t, rho in zip(marginal_path.times, marginal_path.densities):
        values = rho.values
        if values.min() < LOG_FLOOR:
            raise ConfigurationError(f"density at t={t} falls below the positivity floor")
        score = gradient(grid, values) / values
        best = max(best, float(np.sqrt((score**2).sum(axis=0)).max()))
        if not spec.is_zero:
            g = spec.grad(t, x)
            best = max(best, float(np.sqrt((g**2).sum(axis=0)).max()))
    return best


def bound_prefactor(c1: float, c2: float) -> float:
    """``3 C1/2 + sqrt(5 C1/2) C2``."""
    return 1.5 * c1 + math.sqrt(2.5 * c1) * c2
