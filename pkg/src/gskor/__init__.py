"""Two-sided Skorokhod reflection with nonlinear constraints and reflected SDEs under volatility uncertainty."""
from .constraints import (ConstraintFunction, ConstraintPair, inverse_at_zero, make_band_pair, make_link_pair,
                          make_pair, make_rho_pair, validate_separation)
from .errors import (ConfigError, FunctionalError, GridMismatch, GskorError, InvalidArgument, NumericFailure,
                     RootNotFound, SeparationViolation)
from .gexp import (GBMPath, ScenarioControl, SublinearEstimate, VolatilityBounds, lower_expectation,
                   quadratic_variation_bounds_check, scenario_family, simulate_batch, simulate_path,
                   sublinear_expectation)
from .gsde import ReflectedSDESolution, SDECoefficients, ensemble_solve, euler_functional, solve_reflected, solve_unreflected
from .path_core import (MonotonePath, SampledPath, TimeGrid, dual_envelope, gamma_envelope, make_grid, running_inf,
                        running_sup, stieltjes_integral, sup_distance)
from .skorokhod import SkorokhodSolution, flat_off_residuals, solve, solve_oracle

__version__ = "0.1.0"
