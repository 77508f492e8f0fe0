"""Adapting a linear classifier to unlabeled target features through a learned map between principal subspaces.

The classifier (primary task) and a linear map between source and target
subspaces (auxiliary task) are trained in alternation on pre-extracted features.
"""
from .data import FeatureDataset, ShiftSpec, generate_shift_pair, load_csv, save_csv
from .errors import SaltError
from .losses import LossValue, LossWeights
from .model import AdaptedModel, SoftmaxClassifier
from .subspace import AlignmentMap, Subspace, closed_form_alignment, fit_subspace
from .trainer import MODES, RunReport, TrainConfig, predict, train, train_ensemble

__all__ = [
    "AdaptedModel",
    "AlignmentMap",
    "FeatureDataset",
    "LossValue",
    "LossWeights",
    "MODES",
    "RunReport",
    "SaltError",
    "ShiftSpec",
    "SoftmaxClassifier",
    "Subspace",
    "TrainConfig",
    "closed_form_alignment",
    "fit_subspace",
    "generate_shift_pair",
    "load_csv",
    "predict",
    "save_csv",
    "train",
    "train_ensemble",
]
__version__ = "0.1.0"
