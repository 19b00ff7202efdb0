"""Kernel Fisher discriminant metric learning toolkit.

Learns a Mahalanobis matching metric from labeled features via kernel
Fisher discriminant analysis, optionally over a learned combination of
multiple kernels, and evaluates it on probe/gallery retrieval with
rank-K / CMC reporting.
"""

from .config import RunConfig
from .data import ClassIndex, Dataset, SplitPlan, index_classes, load_features, make_split
from .errors import InputError, NumericError
from .evaluation import CmcReport, RankedResult, cmc, dimension_sweep, rank_probe, run_trials
from .kernels import (
    KernelBank,
    KernelMatrix,
    KernelSpec,
    combine_convex,
    combine_sm,
    eval_kernel,
    gram,
    rms_width,
    width_grid,
)
from .kfda import KfdaModel, ScatterPair, build_scatter, load_model, save_model, solve_kfda, train
from .metric import Projection, embed, embed_batch, euclidean_score, score
from .mkl import KernelAccuracies, MklConfig, cv_kernel_accuracies, np_weights, select_sm_pair
from .synthetic import make_synthetic

__version__ = "0.1.0"

__all__ = [
    "ClassIndex",
    "CmcReport",
    "Dataset",
    "InputError",
    "KernelAccuracies",
    "KernelBank",
    "KernelMatrix",
    "KernelSpec",
    "KfdaModel",
    "MklConfig",
    "NumericError",
    "Projection",
    "RankedResult",
    "RunConfig",
    "ScatterPair",
    "SplitPlan",
    "build_scatter",
    "cmc",
    "combine_convex",
    "combine_sm",
    "cv_kernel_accuracies",
    "dimension_sweep",
    "embed",
    "embed_batch",
    "euclidean_score",
    "eval_kernel",
    "gram",
    "index_classes",
    "load_features",
    "load_model",
    "make_split",
    "make_synthetic",
    "np_weights",
    "rank_probe",
    "rms_width",
    "run_trials",
    "save_model",
    "score",
    "select_sm_pair",
    "solve_kfda",
    "train",
    "width_grid",
]
