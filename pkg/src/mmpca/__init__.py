"""Penalized multi-view matrix factorization with orthonormal loadings.

Several data matrices that share row or column "views" are approximated
jointly as ``X_ij ~ V_i D_i D_j V_j'`` where every ``V_i`` is a k-frame
parametrized by Givens angles and the diagonal ``D_i`` carry the joint
structure. Sparsity penalties on D decide which components each view
takes part in, and penalty weights are chosen by element hold-out
cross-validation.
"""
from .analysis import (
    Bicluster,
    Solution,
    bicluster,
    component_importance,
    directed_r2,
    directed_r2_matrix,
    effective_rank,
    impute,
    joint_components,
    matrix_rank,
    r2_matrix,
    r2_table,
)
from .data import (
    Dataset,
    MaskedMatrix,
    NormalizationPolicy,
    NormalizationRecord,
    ViewGraph,
    denormalize,
    holdout_split,
    normalize,
    rescale_to_pi2,
)
from .fitting import fit
from .initialize import init_global
from .kframe import KFrameError, build_kframe, frame_from_vector, invert_kframe, n_angles
from .objective import ModelParams, Penalties, objective_value, penalty_terms, reconstruction_loss
from .optimizer import OptimizationError, OptimizerConfig, OptimizerReport, minimize
from .selection import CvFailure, CvResult, LambdaGrid, cross_validate, parse_grid

__version__ = "0.1.0"

__all__ = [
    "Bicluster", "Solution", "bicluster", "component_importance", "directed_r2", "directed_r2_matrix",
    "effective_rank", "impute", "joint_components", "matrix_rank", "r2_matrix", "r2_table",
    "Dataset", "MaskedMatrix", "NormalizationPolicy", "NormalizationRecord", "ViewGraph", "denormalize",
    "holdout_split", "normalize", "rescale_to_pi2",
    "fit", "init_global",
    "KFrameError", "build_kframe", "frame_from_vector", "invert_kframe", "n_angles",
    "ModelParams", "Penalties", "objective_value", "penalty_terms", "reconstruction_loss",
    "OptimizationError", "OptimizerConfig", "OptimizerReport", "minimize",
    "CvFailure", "CvResult", "LambdaGrid", "cross_validate", "parse_grid",
]
