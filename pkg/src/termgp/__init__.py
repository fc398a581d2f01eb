"""Term-structure curves and surfaces as constrained Gaussian processes.

Build discount, forward and survival curves that reproduce market quotes
exactly (linear market-fit constraints) while staying monotone everywhere
(no-arbitrage shape constraints), with the most likely curve, simulated
sample paths and pointwise confidence bands.
"""

from .basis import (Cone, Curve1D, FiniteModel1D, FiniteModel2D, KnotGrid1D,
                    Surface2D, basis_matrix, basis_matrix_2d, build_model_1d,
                    build_model_2d, cone_constraints, eval_path_1d,
                    hat_integral, hat_value)
from .curves import (CurveBand, ParametricCurve, annuity_pv, bands,
                     forward_rate, parametric_eval, parametric_fit, spot_rate)
from .errors import TermGPError
from .estimation import (EstimationConfig, estimate_sigma, estimate_theta,
                         loo_objective)
from .gp import (GaussianPosterior, MarketFitSystem, posterior_interpolation,
                 posterior_linear)
from .instruments import (DiscountInput, Quote, Schedule, assemble_system,
                          bond_row, cds_system, interp_discount,
                          irs_forward_row, ois_row, read_discount_csv,
                          read_quotes_csv)
from .kernels import KernelSpec, eval_corr, eval_cov_derivs, eval_tensor_cov
from .solver import (ConstrainedProblem, ModeSolution, SampleResult,
                     conditional_moments, mode_curve, mode_surface,
                     sample_paths, solve_mode)

__version__ = "0.1.0"

__all__ = [
    "Cone", "ConstrainedProblem", "Curve1D", "CurveBand", "DiscountInput",
    "EstimationConfig", "FiniteModel1D", "FiniteModel2D", "GaussianPosterior",
    "KernelSpec", "KnotGrid1D", "MarketFitSystem", "ModeSolution",
    "ParametricCurve", "Quote", "SampleResult", "Schedule", "Surface2D",
    "TermGPError", "annuity_pv", "assemble_system", "bands", "basis_matrix",
    "basis_matrix_2d", "bond_row", "build_model_1d", "build_model_2d",
    "cds_system", "conditional_moments", "cone_constraints", "estimate_sigma",
    "estimate_theta", "eval_corr", "eval_cov_derivs", "eval_path_1d",
    "eval_tensor_cov", "forward_rate", "hat_integral", "hat_value",
    "interp_discount", "irs_forward_row", "loo_objective", "mode_curve",
    "mode_surface", "ois_row", "parametric_eval", "parametric_fit",
    "posterior_interpolation", "posterior_linear", "read_discount_csv",
    "read_quotes_csv", "sample_paths", "solve_mode", "spot_rate",
]
