"""Multi-marginal Schrodinger bridges with SDE marginals on the flat torus."""

from .bridge import (BridgeProblem, BridgeSolution, benamou_objective, bridge_drift,
                     current_velocity, entropic_interpolation, girsanov_interval_kl, kl_vs_wiener,
                     reference_benamou_objective, solve_bridge)
from .chain import (MsbSolution, SolverParams, TimeGrid, pairwise_kl_diagnostic, solve_msb,
                    theoretical_bound)
from .fokker_planck import (MarginalPath, evolve, marginal_path, simulate_particles,
                            stationary_density)
from .potential import (PotentialSpec, PotentialTerm, TimeCoeff, benchmark_potential,
                        constant_c1, constant_c2, cosine_potential, u_derivatives, u_eval)
from .ratelab import (ExperimentConfig, RateReport, emit_report, fit_loglog, run_bound_check,
                      run_eps_sweep, run_m_sweep)
from .torus import (GridDensity, TorusGrid, gradient, heat_kernel, integrate, kl_coupling,
                    kl_divergence, make_grid, uniform_density, von_mises_density,
                    wrapped_gaussian_density)

__version__ = "0.1.0"
