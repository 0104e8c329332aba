"""Desparsified multi-task Lasso inference with spatial clustering ensembles."""

__version__ = "0.1.0"

from .core import (CoefMatrix, ConstantColumn, DesignMatrix, DesparseError, Disconnected,
                   Geometry, MultiResponse, NotPositiveDefinite, SolverInfo, ToeplitzAR1,
                   geodesic_distance, standardize, toeplitz_quadform)
from .solvers import (CVConfig, LassoConfig, MaxIterExceeded, cross_validate, fit_mtlasso_cv,
                      lambda_max_mtl, solve_lasso, solve_mtlasso)
from .desparsify import (DegenerateScore, InferenceConfig, InferenceResult, NodewiseConfig,
                         ScoreVectors, d_lasso, d_mtlasso, debias, estimate_noise,
                         nodewise_scores)
from .cluster import (Clustering, CompressionMap, InvalidC, cd_mtlasso, compress, expand_pvalues,
                      ward_cluster)
from .ensemble import EnsembleConfig, aggregate_pvalues, ecd_mtlasso
from .baselines import RidgeKernel, dspm, ridge_kernel, sloreta
from .metrics import SupportSpec, delta_fwer, delta_precision_recall, ple, spatial_dispersion
from .sim import SimConfig, make_gain, make_geometry, make_noise, make_sources, simulate

__all__ = [
    "aggregate_pvalues",
    "cd_mtlasso",
    "Clustering",
    "CoefMatrix",
    "compress",
    "CompressionMap",
    "ConstantColumn",
    "cross_validate",
    "CVConfig",
    "d_lasso",
    "d_mtlasso",
    "debias",
    "DegenerateScore",
    "delta_fwer",
    "delta_precision_recall",
    "DesignMatrix",
    "DesparseError",
    "Disconnected",
    "dspm",
    "ecd_mtlasso",
    "EnsembleConfig",
    "estimate_noise",
    "expand_pvalues",
    "fit_mtlasso_cv",
    "geodesic_distance",
    "Geometry",
    "InferenceConfig",
    "InferenceResult",
    "InvalidC",
    "lambda_max_mtl",
    "LassoConfig",
    "make_gain",
    "make_geometry",
    "make_noise",
    "make_sources",
    "MaxIterExceeded",
    "MultiResponse",
    "nodewise_scores",
    "NodewiseConfig",
    "NotPositiveDefinite",
    "ple",
    "ridge_kernel",
    "RidgeKernel",
    "ScoreVectors",
    "SimConfig",
    "simulate",
    "sloreta",
    "solve_lasso",
    "solve_mtlasso",
    "SolverInfo",
    "spatial_dispersion",
    "standardize",
    "SupportSpec",
    "toeplitz_quadform",
    "ToeplitzAR1",
    "ward_cluster",
]
