"""Transductive learning with abstention: certified min-max abstention against
a version space, for classification and bounded linear regression."""
from .bounds import (
    classification_bound_expected,
    classification_bound_highprob,
    generalization_bound,
    generalize_abstainer,
    pq_metrics,
)
from .cdt import CdtProblem, Ellipsoid, cdt_solve, cdt_solve_approx, trust_region_solve
from .core import (
    CapacityError,
    InfeasibleError,
    InvalidInputError,
    LabeledDataset,
    NumericError,
    abstention_loss,
    avg_loss,
    point_loss,
)
from .hypothesis import (
    FiniteClass,
    Linear,
    LinearClass,
    Threshold,
    ThresholdFamily,
    erm_weighted,
    vc_dimension,
    version_space_membership,
)
from .maximizers import brute_force_maximize_classification, cdt_maximize_regression, flip_maximize
from .mma import MmaResult, grid_search_min, joint_selective_prediction, mma
from .regression import regression_pipeline, vs_radius
from .shift import DiscreteDistribution, best_k_bound, dk_coupling, dk_divergence, tv_coupling, tv_distance

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "CdtProblem",
    "DiscreteDistribution",
    "Ellipsoid",
    "FiniteClass",
    "InfeasibleError",
    "InvalidInputError",
    "LabeledDataset",
    "Linear",
    "LinearClass",
    "MmaResult",
    "NumericError",
    "Threshold",
    "ThresholdFamily",
    "abstention_loss",
    "avg_loss",
    "best_k_bound",
    "brute_force_maximize_classification",
    "cdt_maximize_regression",
    "cdt_solve",
    "cdt_solve_approx",
    "classification_bound_expected",
    "classification_bound_highprob",
    "dk_coupling",
    "dk_divergence",
    "erm_weighted",
    "flip_maximize",
    "generalization_bound",
    "generalize_abstainer",
    "grid_search_min",
    "joint_selective_prediction",
    "mma",
    "point_loss",
    "pq_metrics",
    "regression_pipeline",
    "trust_region_solve",
    "tv_coupling",
    "tv_distance",
    "vc_dimension",
    "version_space_membership",
    "vs_radius",
]
