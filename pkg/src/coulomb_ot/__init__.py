"""Multimarginal Coulomb transport on grids and semiclassical recovery wavefunctions."""

from .dgf1 import read_density, read_dgf1, read_field, write_density, write_dgf1, write_field
from .estimators import CoulombTransport, PlanSmoother, RecoverySweep
from .exceptions import (CapExceededError, ConvergenceError, CoulombOTError, InputMismatchError,
                         InvalidDataError, InvalidExponentError, InvalidGridError, InvalidInputError,
                         InvalidProfileError, PreconditionError, TruncationError, UnderResolvedKernelError)
from .fermion import (AuxiliaryPair, SpinWaveFunction, aux_pair, build_bosonic, build_fermionic, g_factors,
                      verify_statistics)
from .gamma_limit import (AlphaProfile, RecoveryContext, SweepReport, epsilon_schedule, hbar_schedule,
                          hk_upper_bound, sweep, vee_of)
from .grid import (DiscreteDensity, GridSpec, ProductField, build_grid, gaussian, ingest_density, marginal,
                   mixture, sqrt_density_h1, uniform)
from .smoothing import (MollifierSpec, SmoothedPlan, kinetic_bound, kinetic_energy, mollifier,
                        mollifier_constant, mollify_plan, regularize_general, restore_marginals, smooth_plan)
from .transport import (PlanSolution, concentration_profile, coulomb_cost, cost_of_plan, diagonal_mass,
                        finite_cost_bound, offdiag_radius, product_plan, solve_mmot, symmetrize,
                        truncated_cost)

__version__ = "0.1.0"
