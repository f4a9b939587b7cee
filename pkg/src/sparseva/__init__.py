"""Hankel nuclear-norm regularized FIR/ARX identification with SPARSEVA tuning."""

__version__ = "0.1.0"

from .estimators import (
    EpsilonRule,
    EstimateResult,
    LambdaSearch,
    ReweightOptions,
    cv_nuclear,
    epsilon,
    least_squares,
    sparseva_nuclear,
    sparseva_reweighted,
)
from .hankel import HankelSpec, WeightPair, hankel, hankel_adjoint, nuclear_norm, svt
from .metrics import fit, numerical_rank, summarize
from .solver import SolverOptions, solve_constrained, solve_penalized
from .system import (
    DataRecord,
    LinearSystem,
    ModelStructure,
    RegressionData,
    build_regression,
    calibrate_noise,
    generate_random_system,
    impulse_response,
    lowpass_input,
    simulate,
)

__all__ = [
    "DataRecord",
    "EpsilonRule",
    "EstimateResult",
    "HankelSpec",
    "LambdaSearch",
    "LinearSystem",
    "ModelStructure",
    "RegressionData",
    "ReweightOptions",
    "SolverOptions",
    "WeightPair",
    "build_regression",
    "calibrate_noise",
    "cv_nuclear",
    "epsilon",
    "fit",
    "generate_random_system",
    "hankel",
    "hankel_adjoint",
    "impulse_response",
    "least_squares",
    "lowpass_input",
    "nuclear_norm",
    "numerical_rank",
    "simulate",
    "solve_constrained",
    "solve_penalized",
    "sparseva_nuclear",
    "sparseva_reweighted",
    "summarize",
    "svt",
]
