"""Gradient-boosted-trees classifier with up-sampling, CV, and selection."""

from .backend import backend_name
from .binning import BinnedDataset
from .boosting import GbmModel, Hyperparams, Tree, load_model, predict, save_model, train
from .metrics import (
    CvResult,
    EvalReport,
    SplitSpec,
    cross_validate,
    evaluate,
    evaluate_probabilities,
    split_indices,
    upsample_minority,
    wilson_interval,
)
from .selection import (
    EliminationResult,
    GcvError,
    gcv_backward_eliminate,
    gcv_statistic,
    split_gain_importance,
)

__all__ = [
    "backend_name",
    "BinnedDataset",
    "GbmModel",
    "Hyperparams",
    "Tree",
    "load_model",
    "predict",
    "save_model",
    "train",
    "CvResult",
    "EvalReport",
    "SplitSpec",
    "cross_validate",
    "evaluate",
    "evaluate_probabilities",
    "split_indices",
    "upsample_minority",
    "wilson_interval",
    "EliminationResult",
    "GcvError",
    "gcv_backward_eliminate",
    "gcv_statistic",
    "split_gain_importance",
]
