"""Two-marginal Schrodinger bridge against the heat-kernel reference.

The static problem is entropic optimal transport with Gibbs kernel
``K_ij = p_dt(x_i, x_j) h^d``; Sinkhorn runs on log duals ``(f, g)`` so the
coupling is ``pi_ij = exp(f_i + g_j) K_ij``.  Time-``t`` quantities (h-transform
drift, entropic interpolation, current velocity) come from heat extensions
of ``exp(f)`` and ``exp(g)`` applied spectrally, which agree with the
kernel sums at resolved times and stay accurate as ``t`` approaches the
endpoints.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .exceptions import ConfigurationError, ConvergenceError, DomainError, ResolutionError
from .potential import PotentialSpec
from .torus import (LOG_FLOOR, GridDensity, check_resolution, heat_kernel, heat_semigroup,
                    spectral_gradient)

log = logging.getLogger(__name__)

__all__ = [
    "BridgeProblem", "BridgeSolution", "solve_bridge", "bridge_drift",
    "entropic_interpolation", "current_velocity", "midpoint_nodes",
    "girsanov_interval_kl", "kl_vs_wiener", "benamou_terms", "benamou_objective",
    "reference_benamou_terms", "reference_benamou_objective",
]


@dataclass(frozen=True, eq=False)
class BridgeProblem:
    rho_a: GridDensity
    rho_b: GridDensity
    t_a: float
    t_b: float
    tau: float = 1.0
    check_resolution: bool = True

    def __post_init__(self):
        if self.rho_a.grid != self.rho_b.grid:
            raise ConfigurationError("bridge marginals live on different grids")
        if not self.t_b > self.t_a:
            raise ConfigurationError(f"need t_a < t_b, got [{self.t_a}, {self.t_b}]")
        if self.tau <= 0:
            raise ConfigurationError(f"tau must be positive, got {self.tau}")
        if self.check_resolution:
            check_resolution(self.grid, self.duration, self.tau)

    @property
    def grid(self):
        return self.rho_a.grid

    @property
    def duration(self) -> float:
        return self.t_b - self.t_a


@dataclass(eq=False)
class BridgeSolution:
    problem: BridgeProblem
    log_dual_a: np.ndarray = field(repr=False)
    log_dual_b: np.ndarray = field(repr=False)
    marginal_residual: float
    iterations: int
    kernel: np.ndarray = field(repr=False, default=None)
    residual_history: list = field(repr=False, default_factory=list)

    @property
    def grid(self):
        return self.problem.grid

    @property
    def tau(self):
        return self.problem.tau

    def coupling(self) -> np.ndarray:
        """Probability masses ``pi_ij`` over flattened node pairs."""
        f = self.log_dual_a.reshape(-1)
        g = self.log_dual_b.reshape(-1)
        return np.exp(f[:, None] + g[None, :]) * self.kernel

    def with_duals(self, f, g) -> "BridgeSolution":
        return BridgeSolution(self.problem, np.asarray(f, dtype=float), np.asarray(g, dtype=float),
                              self.marginal_residual, self.iterations, self.kernel,
                              list(self.residual_history))

    def schrodinger_potentials(self):
        """Density-relative potentials ``(phi, psi) / dt`` with ``sum(phi) = 0``.

        ``pi`` density = ``exp((phi(x) + psi(y))/dt) p(x, y) rho_a(x) rho_b(y)``.
        """
        h = self.grid.cell_volume
        phi = self.log_dual_a - np.log(self.problem.rho_a.values * h)
        psi = self.log_dual_b - np.log(self.problem.rho_b.values * h) + math.log(h)
        shift = phi.mean()
        return phi - shift, psi + shift

    def dump_text(self, path):
        with open(path, "w") as fh:
            p = self.problem
            fh.write(f"t_a {p.t_a!r}\nt_b {p.t_b!r}\ntau {p.tau!r}\n")
            fh.write(f"n {self.grid.points_per_axis}\ndim {self.grid.dim}\n")
            fh.write(f"iterations {self.iterations}\nmarginal_residual {self.marginal_residual!r}\n")
            fh.write("log_dual_a " + " ".join(repr(float(v)) for v in self.log_dual_a.reshape(-1)) + "\n")
            fh.write("log_dual_b " + " ".join(repr(float(v)) for v in self.log_dual_b.reshape(-1)) + "\n")

    def coupling_to_csv(self, path, max_nodes: int = 64):
        if self.grid.size > max_nodes:
            raise ConfigurationError(f"coupling export is limited to {max_nodes} nodes")
        pi = self.coupling()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            for row in pi:
                writer.writerow([repr(float(v)) for v in row])


# Marginal masses below this fraction of the largest one are roundoff from
# the marginal solver; their duals carry no information.
UNRESOLVED_MASS = 1e-14


def _fill_unresolved(grid, dual, dead):
    """Give unresolved nodes the mean dual of their resolved neighbours.

    Left alone, those duals sit near log(1e-300) and the jump rings through
    every spectral heat extension.  Filling adds coupling mass of order
    ``UNRESOLVED_MASS`` and keeps the dual smooth.
    """
    if not dead.any() or dead.all():
        return dual
    dual = dual.reshape(grid.shape).copy()
    dead = dead.reshape(grid.shape).copy()
    while dead.any():
        total = np.zeros(grid.shape)
        count = np.zeros(grid.shape)
        for ax in range(grid.dim):
            for step in (1, -1):
                live = ~np.roll(dead, step, ax)
                total += np.where(live, np.roll(dual, step, ax), 0.0)
                count += live
        newly = dead & (count > 0)
        dual[newly] = total[newly] / count[newly]
        dead &= ~newly
    return dual.reshape(-1)


def _log_matvec(K, logK, v):
    # log(K @ exp(v)), shifting by max(v); falls back to a full log-sum-exp
    vm = v.max()
    s = K @ np.exp(v - vm)
    if np.all(s > 0) and np.all(np.isfinite(s)):
        return np.log(s) + vm
    return logsumexp(logK + v[None, :], axis=1)


def solve_bridge(problem: BridgeProblem, tol: float = 1e-10, max_iter: int = 100_000) -> BridgeSolution:
    """Log-domain Sinkhorn; stops once the L1 row-marginal error is <= ``tol``.

    The gauge is fixed by ``sum(f) = 0``.  Raises :class:`ConvergenceError`
    when ``max_iter`` is exhausted.
    """
    grid = problem.grid
    h = grid.cell_volume
    K = heat_kernel(grid, problem.duration, problem.tau, check=problem.check_resolution).entries * h
    with np.errstate(divide="ignore"):
        logK = np.log(K)
    a = problem.rho_a.values.reshape(-1) * h
    b = problem.rho_b.values.reshape(-1) * h
    log_a, log_b = np.log(np.maximum(a, LOG_FLOOR)), np.log(np.maximum(b, LOG_FLOOR))
    KT = np.ascontiguousarray(K.T)
    logKT = np.ascontiguousarray(logK.T)

    f = np.zeros_like(a)
    g = np.zeros_like(b)
    history = []
    residual = math.inf
    it = 0
    while True:
        log_row = _log_matvec(K, logK, g)
        if it > 0:
            residual = float(np.abs(np.exp(f + log_row) - a).sum())
            if it % 10 == 0:
                history.append(residual)
            if residual <= tol:
                break
        if it >= max_iter:
            raise ConvergenceError(
                f"Sinkhorn did not reach tol={tol:g} in {max_iter} iterations (residual {residual:.3e})",
                residual, it)
        f = log_a - log_row
        g = log_b - _log_matvec(KT, logKT, f)
        it += 1

    f = _fill_unresolved(grid, f, a <= UNRESOLVED_MASS * a.max())
    g = _fill_unresolved(grid, g, b <= UNRESOLVED_MASS * b.max())
    residual = float(np.abs(np.exp(f + _log_matvec(K, logK, g)) - a).sum())
    shift = f.mean()
    f, g = f - shift, g + shift
    log.debug("bridge [%g, %g] converged in %d iterations, residual %.3e",
              problem.t_a, problem.t_b, it, residual)
    return BridgeSolution(problem, f.reshape(grid.shape), g.reshape(grid.shape), residual, it, K, history)


# ---------------------------------------------------------------------------
# dynamic quantities


# relative levels for the spectral heat extension of exp(dual)
EXTENSION_FLOOR = 1e-13
NEGATIVE_TOL = 1e-10


def _check_time(sol, t):
    p = sol.problem
    if not p.t_a <= t <= p.t_b:
        raise DomainError(f"t={t} lies outside the bridge interval [{p.t_a}, {p.t_b}]")


def _heat_extension(sol, log_dual, s):
    # Values below EXTENSION_FLOOR (relative to the max) are FFT roundoff and
    # are floored; anything clearly negative means the grid is too coarse.
    grid = sol.grid
    field = heat_semigroup(grid, np.exp(log_dual - log_dual.max()), s, sol.tau)
    if field.min() < -NEGATIVE_TOL:
        raise ResolutionError("heat extension of the dual lost positivity; refine the grid")
    return np.maximum(field, EXTENSION_FLOOR), spectral_gradient(grid, field)


def _backward(sol, t):
    return _heat_extension(sol, sol.log_dual_b, sol.problem.t_b - t)


def _forward(sol, t):
    return _heat_extension(sol, sol.log_dual_a, t - sol.problem.t_a)


def bridge_drift(sol: BridgeSolution, t: float) -> np.ndarray:
    """Doob h-transform drift ``tau * grad log H(t, .)``, shape ``(dim, *grid.shape)``.

    ``H(t, x) = sum_j p_{t_b - t}(x, x_j) exp(g_j)`` is evaluated as the heat
    semigroup acting on the interpolant of ``exp(g)``.
    """
    _check_time(sol, t)
    H, dH = _backward(sol, t)
    return sol.tau * dH / H


def _interpolation_parts(sol, t):
    Hf, dHf = _forward(sol, t)
    Hb, dHb = _backward(sol, t)
    mu = Hf * Hb
    return mu, dHf / Hf, dHb / Hb


def entropic_interpolation(sol: BridgeSolution, t: float) -> GridDensity:
    """Time-``t`` marginal of the bridge, proportional to ``H_fwd * H_bwd``."""
    _check_time(sol, t)
    mu, _, _ = _interpolation_parts(sol, t)
    return GridDensity.normalized(sol.grid, mu)


def current_velocity(sol: BridgeSolution, t: float) -> np.ndarray:
    """Velocity ``v`` with ``d_t mu + div(mu v) = 0``: ``(tau/2)(grad log H_bwd - grad log H_fwd)``."""
    _check_time(sol, t)
    _, sf, sb = _interpolation_parts(sol, t)
    return 0.5 * sol.tau * (sb - sf)


def midpoint_nodes(t_a: float, t_b: float, n_t: int) -> np.ndarray:
    return t_a + (np.arange(n_t) + 0.5) * (t_b - t_a) / n_t


def girsanov_interval_kl(sol: BridgeSolution, spec: PotentialSpec, marginal_path, n_t: int = 32) -> float:
    """KL(R* || bridge) on one interval via the drift difference.

    ``(1/(2 tau)) int E_{rho_t} |grad Psi(t, Z) - v(t, Z)|^2 dt`` with composite
    midpoint quadrature in time, so the endpoint ``t_b`` is never evaluated.
    """
    p = sol.problem
    grid = sol.grid
    x = grid.mesh()
    h = grid.cell_volume
    w = p.duration / n_t
    total = 0.0
    for t in midpoint_nodes(p.t_a, p.t_b, n_t):
        rho = marginal_path.at(t).values
        diff = bridge_drift(sol, t)
        if not spec.is_zero:
            diff = spec.grad(t, x) - diff
        total += w * float(((diff**2).sum(axis=0) * rho).sum() * h)
    return max(total / (2.0 * p.tau), 0.0)


def kl_vs_wiener(spec: PotentialSpec, marginal_path, t_a: float, t_b: float, tau: float,
                 n_t: int = 32) -> float:
    """KL of the SDE law against Brownian motion started at ``rho_{t_a}``."""
    if spec.is_zero:
        return 0.0
    grid = marginal_path.grid
    x = grid.mesh()
    w = (t_b - t_a) / n_t
    total = 0.0
    for t in midpoint_nodes(t_a, t_b, n_t):
        rho = marginal_path.at(t).values
        total += w * float(((spec.grad(t, x) ** 2).sum(axis=0) * rho).sum() * grid.cell_volume)
    return total / (2.0 * tau)


def _weighted_sq(grid, vec, rho):
    return float(((vec**2).sum(axis=0) * rho).sum() * grid.cell_volume)


def benamou_terms(sol: BridgeSolution, n_t: int = 32) -> tuple[float, float]:
    """(kinetic, Fisher) parts of the dynamic objective on the rescaled interval.

    With ``eps = t_b - t_a`` and ``s in [0, 1]`` the objective is
    ``int_0^1 |v_s|^2/2 + (tau eps)^2/8 |grad log mu_s|^2 ds``.
    """
    p = sol.problem
    grid = sol.grid
    eps, tau = p.duration, p.tau
    kinetic = fisher = 0.0
    for t in midpoint_nodes(p.t_a, p.t_b, n_t):
        mu, sf, sb = _interpolation_parts(sol, t)
        mu = mu / (mu.sum() * grid.cell_volume)
        v = 0.5 * tau * (sb - sf)
        score = sf + sb
        kinetic += 0.5 * eps**2 * _weighted_sq(grid, v, mu) / n_t
        fisher += (tau * eps) ** 2 / 8.0 * _weighted_sq(grid, score, mu) / n_t
    return kinetic, fisher


def benamou_objective(sol: BridgeSolution, n_t: int = 32) -> float:
    return sum(benamou_terms(sol, n_t))


def reference_benamou_terms(spec: PotentialSpec, marginal_path, t_a: float, t_b: float, tau: float,
                            n_t: int = 32) -> tuple[float, float]:
    """Objective parts for the admissible pair ``(rho, grad Psi - (tau/2) grad log rho)``."""
    grid = marginal_path.grid
    x = grid.mesh()
    eps = t_b - t_a
    kinetic = fisher = 0.0
    for t in midpoint_nodes(t_a, t_b, n_t):
        rho = marginal_path.at(t).values
        score = spectral_gradient(grid, rho) / rho
        v = -0.5 * tau * score
        if not spec.is_zero:
            v = v + spec.grad(t, x)
        kinetic += 0.5 * eps**2 * _weighted_sq(grid, v, rho) / n_t
        fisher += (tau * eps) ** 2 / 8.0 * _weighted_sq(grid, score, rho) / n_t
    return kinetic, fisher


def reference_benamou_objective(spec, marginal_path, t_a, t_b, tau, n_t: int = 32) -> float:
    return sum(reference_benamou_terms(spec, marginal_path, t_a, t_b, tau, n_t))
