"""Multimodal attention-level estimation from face-analysis feature streams.

Per-frame features from face-analysis modules are cut into one-minute
windows, labeled High/Low from EEG attention percentiles, classified per
module with a linear SVM, and fused at score level. Evaluation is
leave-one-user-out with EER, maximum accuracy, ROC and score densities.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("attnfuse")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0.0.0"

from .errors import AttnFuseError
from .fusion import FusionConfig, WeightedSumFusion, enumerate_combinations, fuse, fuse_matrix, subset_key
from .ingest import (
    ModuleId,
    SessionRecord,
    assemble_session,
    load_sessions,
    parse_attention,
    parse_frame_features,
    session_integrity_report,
)
from .metrics import eer, evaluate_scores, kde, max_accuracy, roc
from .protocol import ExperimentConfig, ExperimentResult, check_leakage, loo_split, run_experiment, write_results
from .svm import FeatureScaler, LogisticCalibrator, ModalityClassifier, TrainConfig, decision, train_svm
from .synthgen import SynthParams, generate_sessions, preset
from .windowing import LabeledDataset, Thresholds, WindowLabeler, build_dataset, compute_thresholds

__all__ = [
    "AttnFuseError",
    "ExperimentConfig",
    "ExperimentResult",
    "FeatureScaler",
    "FusionConfig",
    "LabeledDataset",
    "LogisticCalibrator",
    "ModalityClassifier",
    "ModuleId",
    "SessionRecord",
    "SynthParams",
    "Thresholds",
    "TrainConfig",
    "WeightedSumFusion",
    "WindowLabeler",
    "assemble_session",
    "build_dataset",
    "check_leakage",
    "compute_thresholds",
    "decision",
    "eer",
    "enumerate_combinations",
    "evaluate_scores",
    "fuse",
    "fuse_matrix",
    "generate_sessions",
    "kde",
    "load_sessions",
    "loo_split",
    "max_accuracy",
    "parse_attention",
    "parse_frame_features",
    "preset",
    "roc",
    "run_experiment",
    "session_integrity_report",
    "subset_key",
    "train_svm",
    "write_results",
]
