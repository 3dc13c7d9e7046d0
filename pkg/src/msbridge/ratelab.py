"""Rate sweeps, bound checks, log-log fits and report files."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from .bridge import BridgeProblem, girsanov_interval_kl, midpoint_nodes, solve_bridge
from .chain import SolverParams, TimeGrid, interval_bound, solve_msb, theoretical_bound
from .exceptions import ConfigurationError, IntervalError
from .fokker_planck import DEFAULT_MAX_DT, marginal_path, stationary_density
from .potential import PotentialSpec, benchmark_potential, constant_c1, constant_c2
from .torus import (TorusGrid, make_grid, uniform_density, von_mises_density,
                    wrapped_gaussian_density)

log = logging.getLogger(__name__)

M_SLOPE_WINDOW = (-2.2, -0.9)
EPS_SLOPE_WINDOW = (1.8, 2.6)
MIN_R_SQUARED = 0.95
MONOTONE_SLACK = 1e-6
ZERO_KL_LIMIT = 1e-6
# KL values at or below this are treated as zero by the fit.
KL_FLOOR = 1e-14

PASS, FAIL, INCONCLUSIVE, SKIPPED = "pass", "fail", "inconclusive", "skipped"


@dataclass
class SweepConfig:
    kind: str = "m_sweep"
    values: list = field(default_factory=lambda: [2, 4, 8, 16, 32])
    fit_window: list | None = None

    def __post_init__(self):
        if self.kind not in ("m_sweep", "eps_sweep", "bound_check"):
            raise ConfigurationError(f"unknown sweep kind {self.kind!r}")


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment.

    ``initial`` selects the initial density: ``{"kind": "von_mises", "kappa":
    1.0, "center": 0.0}``, ``{"kind": "uniform"}``, ``{"kind":
    "wrapped_gaussian", "center": pi, "variance": 0.05}`` or ``{"kind":
    "stationary"}`` (proportional to exp(2 Psi(0, .)/tau)).
    """

    spec: PotentialSpec = field(default_factory=benchmark_potential)
    initial: dict = field(default_factory=lambda: {"kind": "von_mises", "kappa": 1.0, "center": 0.0})
    tau: float = 1.0
    T: float = 1.0
    n: int = 256
    sweep: SweepConfig = field(default_factory=SweepConfig)
    tol: float = 1e-10
    max_iter: int = 100_000
    n_t: int = 32
    fp_max_dt: float = DEFAULT_MAX_DT
    constants_n_t: int = 64
    bound_tolerance: float = 1e-9
    seed: int = 0
    simulate: dict = field(default_factory=lambda: {"times": [0.0, 0.5, 1.0], "particles": 0, "dt": 1e-4})
    bridge: dict = field(default_factory=lambda: {"t_a": 0.0, "t_b": 0.1})
    output: dict = field(default_factory=lambda: {"dir": "out", "stem": None})

    @property
    def grid(self) -> TorusGrid:
        return make_grid(self.spec.dim, self.n)

    @property
    def solver_params(self) -> SolverParams:
        return SolverParams(self.tol, self.max_iter, self.n_t, self.fp_max_dt)

    def initial_density(self):
        grid = self.grid
        kind = self.initial.get("kind", "von_mises")
        if kind == "uniform":
            return uniform_density(grid)
        if kind == "von_mises":
            return von_mises_density(grid, self.initial.get("kappa", 1.0), self.initial.get("center", 0.0))
        if kind == "wrapped_gaussian":
            return wrapped_gaussian_density(grid, self.initial.get("center", math.pi),
                                            self.initial.get("variance", 0.05))
        if kind == "stationary":
            return stationary_density(grid, self.spec, self.tau)
        raise ConfigurationError(f"unknown initial density kind {kind!r}")

    def validate(self, kind: str | None = None):
        """Check guards before any computation."""
        kind = kind or self.sweep.kind
        grid = self.grid
        if self.tau <= 0 or self.T <= 0:
            raise ConfigurationError("tau and T must be positive")
        if kind == "bound_check" and self.tau != 1:
            raise ConfigurationError("bound check requires tau = 1")
        if kind in ("m_sweep", "bound_check"):
            ms = [int(v) for v in self.sweep.values]
            if any(m < 1 for m in ms) or len(set(ms)) != len(ms):
                raise ConfigurationError("m values must be distinct positive integers")
            for m in ms:
                if not grid.resolves(self.T / m, self.tau):
                    raise ConfigurationError(f"m={m}: interval {self.T / m:g} is not resolved by n={self.n}")
        if kind == "eps_sweep":
            for eps in self.sweep.values:
                if not 0 < eps <= self.T:
                    raise ConfigurationError(f"eps={eps} outside (0, T]")
                if not grid.resolves(eps, self.tau):
                    raise ConfigurationError(f"eps={eps} is not resolved by n={self.n}")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["spec"] = {"dim": self.spec.dim, "terms": self.spec.to_records()}
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data or {})
        kwargs = {}
        if "spec" in data:
            spec = data.pop("spec")
            if spec == "benchmark":
                kwargs["spec"] = benchmark_potential()
            else:
                kwargs["spec"] = PotentialSpec.from_records(spec.get("terms", []), spec.get("dim", 1))
        if "sweep" in data:
            kwargs["sweep"] = SweepConfig(**data.pop("sweep"))
        if "sinkhorn" in data:
            sk = data.pop("sinkhorn")
            kwargs["tol"] = float(sk.get("tol", 1e-10))
            kwargs["max_iter"] = int(sk.get("max_iter", 100_000))
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        defaults = cls()
        for key, value in data.items():
            if isinstance(getattr(defaults, key), dict):
                value = {**getattr(defaults, key), **(value or {})}
            kwargs[key] = value
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))


def benchmark_config(kind: str = "m_sweep") -> ExperimentConfig:
    values = {"m_sweep": [2, 4, 8, 16, 32], "bound_check": [1, 2, 4, 8, 16, 32],
              "eps_sweep": [0.4, 0.2, 0.1, 0.05]}[kind]
    return ExperimentConfig(sweep=SweepConfig(kind, values))


# ---------------------------------------------------------------------------
# fitting


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int
    flag: str = ""

    @property
    def degenerate(self) -> bool:
        return self.n_points < 2


def fit_loglog(xs, ys, window=None, floor: float = 0.0) -> LogLogFit:
    """Least-squares line through ``(log x, log y)``.

    Points outside ``window = (lo, hi)`` (inclusive, on ``x``) or with
    ``y <= floor`` are dropped; fewer than two survivors gives a degenerate
    fit with NaN coefficients instead of an exception.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    keep = np.ones(xs.shape, dtype=bool)
    if window is not None:
        lo, hi = window
        lo = -math.inf if lo is None else lo
        hi = math.inf if hi is None else hi
        keep &= (xs >= lo) & (xs <= hi)
    flags = []
    bad = keep & ~(ys > floor)
    if bad.any():
        flags.append(f"excluded {int(bad.sum())} nonpositive value(s)")
    keep &= ys > floor
    n = int(keep.sum())
    if n < 2:
        flags.append("degenerate: zero KL" if bad.any() else "degenerate: fewer than 2 points")
        return LogLogFit(math.nan, math.nan, math.nan, n, "; ".join(flags))
    lx, ly = np.log(xs[keep]), np.log(ys[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return LogLogFit(float(slope), float(intercept), min(max(r2, 0.0), 1.0), n, "; ".join(flags))


# ---------------------------------------------------------------------------
# reports


@dataclass
class RateReport:
    kind: str
    abscissae: list
    kl_values: list
    bounds: list
    slope: float
    intercept: float
    r_squared: float
    fit_flag: str = ""
    runtime_seconds: float = 0.0
    config: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    details: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return FAIL not in self.checks.values()

    def margins(self) -> list:
        return [b - k if b is not None else None for k, b in zip(self.kl_values, self.bounds)]


def _constants(config: ExperimentConfig, rho0):
    if config.tau != 1:
        return None, None
    grid = config.grid
    c1 = constant_c1(config.spec, grid, config.T, config.constants_n_t)
    times = np.linspace(0.0, config.T, config.constants_n_t)
    path = marginal_path(rho0, config.spec, config.tau, times, max_dt=config.fp_max_dt)
    return c1, constant_c2(config.spec, path)


def _slope_check(fit: LogLogFit, window) -> str:
    if fit.degenerate:
        return SKIPPED
    if fit.r_squared < MIN_R_SQUARED:
        return INCONCLUSIVE
    return PASS if window[0] <= fit.slope <= window[1] else FAIL


def _sweep_m(config, dual_hook=None):
    rho0 = config.initial_density()
    c1, c2 = _constants(config, rho0)
    details = []
    for m in sorted(int(v) for v in config.sweep.values):
        grid_t = TimeGrid.uniform(config.T, m)
        try:
            msb = solve_msb(config.spec, rho0, config.tau, grid_t, config.solver_params, dual_hook)
        except IntervalError as exc:
            raise IntervalError(f"m={m}: {exc}", exc.interval) from exc
        row = msb.summary(c1, c2)
        if c1 is not None:
            row["interval_bounds"] = [interval_bound(c1, c2, b - a) for a, b in grid_t.intervals()]
        details.append(row)
        log.info("m=%d total_kl=%.6e", m, msb.total_kl)
    return details, c1, c2


def run_m_sweep(config: ExperimentConfig, dual_hook=None) -> RateReport:
    """Total KL for uniform time grids with each ``m`` in the sweep values."""
    config.validate("m_sweep")
    start = time.perf_counter()
    details, c1, c2 = _sweep_m(config, dual_hook)
    ms = [d["m"] for d in details]
    kls = [d["total_kl"] for d in details]
    bounds = [d["bound"] for d in details]
    window = config.sweep.fit_window or (2, None)
    fit = fit_loglog(ms, kls, window, KL_FLOOR)

    checks = {"kl_nonnegative": PASS if min(kls) >= 0 else FAIL}
    if config.spec.is_zero:
        checks["zero_drift"] = PASS if max(kls) <= ZERO_KL_LIMIT else FAIL
        checks["slope_window"] = SKIPPED
        fit = LogLogFit(math.nan, math.nan, math.nan, 0, "degenerate: zero KL")
    else:
        checks["slope_window"] = _slope_check(fit, M_SLOPE_WINDOW)
    checks["monotone_in_m"] = PASS if all(b <= a + MONOTONE_SLACK for a, b in zip(kls, kls[1:])) else FAIL
    if c1 is not None:
        ok = all(b - k >= -config.bound_tolerance for k, b in zip(kls, bounds))
        checks["bound_holds"] = PASS if ok else FAIL
    return RateReport("m_sweep", [float(m) for m in ms], kls, bounds, fit.slope, fit.intercept,
                      fit.r_squared, fit.flag, time.perf_counter() - start, config.to_dict(), checks,
                      details)


def run_eps_sweep(config: ExperimentConfig) -> RateReport:
    """Single-interval KL on [0, eps] for each eps in the sweep values."""
    config.validate("eps_sweep")
    start = time.perf_counter()
    rho0 = config.initial_density()
    c1, c2 = _constants(config, rho0)
    eps_values = sorted(float(v) for v in config.sweep.values)
    kls, bounds, details = [], [], []
    for eps in eps_values:
        times = np.concatenate([[0.0, eps], midpoint_nodes(0.0, eps, config.n_t)])
        path = marginal_path(rho0, config.spec, config.tau, times, max_dt=config.fp_max_dt)
        sol = solve_bridge(BridgeProblem(path.at(0.0), path.at(eps), 0.0, eps, config.tau),
                           config.tol, config.max_iter)
        kl = girsanov_interval_kl(sol, config.spec, path, config.n_t)
        kls.append(kl)
        bounds.append(interval_bound(c1, c2, eps) if c1 is not None else None)
        details.append({"eps": eps, "kl": kl, "iterations": sol.iterations,
                        "marginal_residual": sol.marginal_residual})
        log.info("eps=%g kl=%.6e", eps, kl)
    fit = fit_loglog(eps_values, kls, config.sweep.fit_window, KL_FLOOR)
    checks = {"kl_nonnegative": PASS if min(kls) >= 0 else FAIL}
    if config.spec.is_zero:
        checks["zero_drift"] = PASS if max(kls) <= ZERO_KL_LIMIT else FAIL
        checks["slope_window"] = SKIPPED
        fit = LogLogFit(math.nan, math.nan, math.nan, 0, "degenerate: zero KL")
    else:
        checks["slope_window"] = _slope_check(fit, EPS_SLOPE_WINDOW)
    if c1 is not None:
        ok = all(b - k >= -config.bound_tolerance for k, b in zip(kls, bounds))
        checks["interval_bound_holds"] = PASS if ok else FAIL
    return RateReport("eps_sweep", eps_values, kls, bounds, fit.slope, fit.intercept, fit.r_squared,
                      fit.flag, time.perf_counter() - start, config.to_dict(), checks, details)


def run_bound_check(config: ExperimentConfig, dual_hook=None) -> RateReport:
    """Compare the total KL with the explicit bound for every m.

    Each detail row also lists the intervals whose KL exceeds the
    single-interval estimate, which localizes a failure.
    """
    config.validate("bound_check")
    start = time.perf_counter()
    details, c1, c2 = _sweep_m(config, dual_hook)
    # with Psi = 0 the bound is 0 and only solver noise remains
    tol = ZERO_KL_LIMIT if config.spec.is_zero else config.bound_tolerance
    checks = {}
    for row in details:
        margin = row["bound"] - row["total_kl"]
        row["margin"] = margin
        row["looseness"] = row["bound"] / row["total_kl"] if row["total_kl"] > 0 else math.inf
        row["violating_intervals"] = [
            j for j, (k, b) in enumerate(zip(row["per_interval_kl"], row["interval_bounds"]))
            if k > b + tol
        ]
        checks[f"m={row['m']}"] = PASS if margin >= -tol else FAIL
    ms = [float(d["m"]) for d in details]
    kls = [d["total_kl"] for d in details]
    fit = fit_loglog(ms, kls, config.sweep.fit_window or (2, None), KL_FLOOR)
    return RateReport("bound_check", ms, kls, [d["bound"] for d in details], fit.slope, fit.intercept,
                      fit.r_squared, fit.flag, time.perf_counter() - start, config.to_dict(), checks,
                      details)


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.generic):
        return _json_safe(value.item())
    return value


def _fmt(value):
    return "" if value is None else repr(float(value))


def emit_report(report: RateReport, out_dir, stem: str | None = None):
    """Write ``<stem>.csv`` (abscissa, kl, bound, margin) and ``<stem>.json``."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or report.kind
    csv_path = out / f"{stem}.csv"
    json_path = out / f"{stem}.json"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["abscissa", "kl", "bound", "margin"])
        for x, k, b, mgn in zip(report.abscissae, report.kl_values, report.bounds, report.margins()):
            writer.writerow([_fmt(x), _fmt(k), _fmt(b), _fmt(mgn)])
    with open(json_path, "w") as fh:
        json.dump(_json_safe(asdict(report)), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path
