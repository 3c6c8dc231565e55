"""Risk-constrained MMSE estimation, its chi-square robust form and a skew-shifted sample mean."""

from .empirical import DominationReport, EmpiricalEstimate, cross_term_closed_form, domination_report, empirical_estimate, lambda_opt
from .estimator import (
    EstimatorResult,
    InfeasibleRiskLevel,
    dual_solve,
    eigen_decomposed_estimator,
    gamma_star,
    population_estimator,
    reweight_density,
    scalar_estimator,
    worstcase_density,
)
from .experiments import ExperimentSpec, MseCurve, identity_battery, reproduce_fig1, run_mse_curve
from .moments import DiscreteDistribution, MomentSet, moments_from_discrete, moments_from_sample
from .oracle import SaddleReport, constrained_solve, inner_sup, quadratic_reformulation_check, saddle_check

__version__ = "0.1.0"
