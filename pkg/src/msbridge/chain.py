"""Multi-marginal bridge as a chain of independent interval bridges."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bridge import BridgeProblem, BridgeSolution, girsanov_interval_kl, midpoint_nodes, solve_bridge
from .exceptions import ConfigurationError, IntervalError, MsbridgeError
from .fokker_planck import DEFAULT_MAX_DT, MAX_CLIP_MASS, MarginalPath, evolve, evolve_batch, marginal_path
from .potential import PotentialSpec, bound_prefactor
from .torus import GridDensity, kl_coupling

__all__ = [
    "TimeGrid", "SolverParams", "MsbSolution", "solve_msb",
    "theoretical_bound", "interval_bound", "pairwise_kl_diagnostic", "transition_matrix",
]


@dataclass(frozen=True, eq=False)
class TimeGrid:
    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ConfigurationError("a time grid needs at least two times")
        if np.any(np.diff(times) <= 0):
            raise ConfigurationError("time grid must be strictly increasing")
        if times[0] != 0.0:
            raise ConfigurationError("time grid must start at t = 0")
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, T: float, m: int) -> "TimeGrid":
        if m < 1:
            raise ConfigurationError(f"m must be >= 1, got {m}")
        return cls(T * np.arange(m + 1) / m)

    @property
    def m(self) -> int:
        return self.times.size - 1

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def delta(self) -> float:
        return float(np.diff(self.times).max())

    def intervals(self):
        return list(zip(self.times[:-1], self.times[1:]))

    def refine_largest(self) -> "TimeGrid":
        """Insert the midpoint of the (first) largest interval."""
        j = int(np.argmax(np.diff(self.times)))
        mid = 0.5 * (self.times[j] + self.times[j + 1])
        return TimeGrid(np.insert(self.times, j + 1, mid))


@dataclass(frozen=True)
class SolverParams:
    tol: float = 1e-10
    max_iter: int = 100_000
    n_t: int = 32
    max_dt: float = DEFAULT_MAX_DT
    check_resolution: bool = True


@dataclass(eq=False)
class MsbSolution:
    time_grid: TimeGrid
    bridges: list = field(repr=False)
    marginal_path: MarginalPath = field(repr=False)
    per_interval_kl: np.ndarray
    total_kl: float
    spec: PotentialSpec = field(repr=False, default=None)
    params: SolverParams = field(repr=False, default_factory=SolverParams)

    def summary(self, c1: float | None = None, c2: float | None = None) -> dict:
        out = {
            "m": self.time_grid.m,
            "delta_m": self.time_grid.delta,
            "per_interval_kl": [float(v) for v in self.per_interval_kl],
            "total_kl": float(self.total_kl),
            "bound": None,
            "c1": c1,
            "c2": c2,
            "solver_stats": {
                "iterations": [b.iterations for b in self.bridges],
                "marginal_residual": [b.marginal_residual for b in self.bridges],
            },
        }
        if c1 is not None and c2 is not None:
            out["bound"] = theoretical_bound(c1, c2, self.time_grid.T, self.time_grid.delta)
        return out

    def to_json(self, path, c1=None, c2=None):
        with open(path, "w") as fh:
            json.dump(self.summary(c1, c2), fh, indent=2, sort_keys=True)
            fh.write("\n")


def solve_msb(spec: PotentialSpec, rho0: GridDensity, tau: float, time_grid: TimeGrid,
              params: SolverParams = SolverParams(), dual_hook=None) -> MsbSolution:
    """Solve every interval bridge between consecutive SDE marginals.

    The marginal path is computed once at all grid times and time-quadrature
    nodes.  ``dual_hook(j, solution)`` may replace an interval solution
    before its KL is evaluated (used for fault injection).
    """
    query = [time_grid.times]
    for t_a, t_b in time_grid.intervals():
        query.append(midpoint_nodes(t_a, t_b, params.n_t))
    path = marginal_path(rho0, spec, tau, np.concatenate(query), max_dt=params.max_dt)

    bridges, kls = [], []
    for j, (t_a, t_b) in enumerate(time_grid.intervals()):
        try:
            problem = BridgeProblem(path.at(t_a), path.at(t_b), float(t_a), float(t_b), tau,
                                    params.check_resolution)
            sol = solve_bridge(problem, params.tol, params.max_iter)
            if dual_hook is not None:
                sol = dual_hook(j, sol)
            kl = girsanov_interval_kl(sol, spec, path, params.n_t)
        except MsbridgeError as exc:
            raise IntervalError(f"interval {j} [{t_a}, {t_b}] failed: {exc}", j) from exc
        bridges.append(sol)
        kls.append(kl)
    kls = np.asarray(kls)
    return MsbSolution(time_grid, bridges, path, kls, float(kls.sum()), spec, params)


def theoretical_bound(c1: float, c2: float, T: float, delta: float) -> float:
    """``T * delta * (3 C1'/2 + sqrt(5 C1'/2) C2')``."""
    if c1 < 0 or c2 < 0 or T <= 0:
        raise ConfigurationError("need c1, c2 >= 0 and T > 0")
    return T * delta * bound_prefactor(c1, c2)


def interval_bound(c1: float, c2: float, eps: float) -> float:
    """Single-interval estimate ``(3 C1'/2 + sqrt(5 C1'/2) C2') eps^2``."""
    return bound_prefactor(c1, c2) * eps**2


def transition_matrix(grid, spec, tau, t_a, t_b, max_dt=DEFAULT_MAX_DT, per_column=False) -> np.ndarray:
    """Row ``i``: Fokker-Planck density at ``t_b`` started from a point mass at ``x_i``."""
    n = grid.points_per_axis
    deltas = np.eye(n) / grid.spacing
    if per_column:
        return np.stack([evolve(GridDensity(grid, row), spec, tau, t_a, t_b, max_dt=max_dt).values
                         for row in deltas])
    return evolve_batch(grid, deltas, spec, tau, t_a, t_b, max_dt=max_dt)


def pairwise_kl_diagnostic(msb: MsbSolution, path: MarginalPath | None = None, max_nodes: int = 64,
                           per_column: bool = False) -> list[float]:
    """Two-time KL between the SDE pair law and each bridge coupling.

    A lower bound on each path-space interval KL.  Needs the dense
    transition matrix, so grids above ``max_nodes`` nodes are refused.
    """
    path = path or msb.marginal_path
    grid = path.grid
    if grid.dim != 1 or grid.size > max_nodes:
        raise ConfigurationError(
            f"pairwise diagnostic needs d = 1 and n <= {max_nodes}; use the Girsanov estimator instead")
    h = grid.spacing
    out = []
    for (t_a, t_b), sol in zip(msb.time_grid.intervals(), msb.bridges):
        P = transition_matrix(grid, msb.spec, path.tau, t_a, t_b, msb.params.max_dt, per_column)
        neg_mass = -np.minimum(P, 0.0).sum(axis=1).max() * h
        if neg_mass > MAX_CLIP_MASS:
            raise ConfigurationError(f"transition matrix on [{t_a}, {t_b}] is not resolved")
        P = np.maximum(P, 0.0)
        pair = path.at(t_a).values[:, None] * h * P * h
        out.append(kl_coupling(pair / pair.sum(), sol.coupling()))
    return out
