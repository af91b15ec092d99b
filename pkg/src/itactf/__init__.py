"""Time-series augmentation by DTW warping to soft class prototypes, followed by
a contrastive CP tensor factorisation whose coefficients feed a classifier.
"""

from .baseline_aug import BaselineAugConfig, augment_baseline
from .classifier import MlpConfig, MlpModel, predict, predict_proba, train_mlp
from .ctf import CtfConfig, fit, transform
from .config import RunConfig, load_config, parse_config
from .data import load_dataset, save_dataset, synth_dataset, zscore_normalize
from .dtw import DtwVariant, dtw_distance, warp_to_reference
from .errors import ItaCtfError
from .ita import ItaConfig, augment_dataset
from .metrics import balanced_accuracy, evaluate, mmae, weighted_f1
from .pipeline import run_pipeline, sweep
from .tensor_core import FactorModel, SampleMatrix, TensorDataset

__version__ = "0.1.0"

__all__ = [
    "BaselineAugConfig", "augment_baseline", "MlpConfig", "MlpModel", "predict", "predict_proba", "train_mlp",
    "evaluate",
    "CtfConfig", "fit", "transform", "RunConfig", "load_config", "parse_config", "load_dataset", "save_dataset",
    "synth_dataset", "zscore_normalize", "DtwVariant", "dtw_distance", "warp_to_reference", "ItaCtfError",
    "ItaConfig", "augment_dataset", "balanced_accuracy", "mmae", "weighted_f1", "run_pipeline", "sweep",
    "FactorModel", "SampleMatrix", "TensorDataset",
]
