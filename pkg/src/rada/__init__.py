"""Relationship-aware adversarial domain adaptation at desk scale.

A label predictor and a single multi-branch domain discriminator each imply a
closed-form inter-class precision matrix through their output-layer weights;
a KL-based regularizer aligns the two structures during domain-adversarial
training. Includes a synthetic domain-shift generator, a deterministic SGD
trainer, evaluation metrics, and a CLI.
"""

__version__ = "0.1.0"

from .adversarial import (
    BatchAssignment,
    RadaModel,
    build_model,
    class_weighted_domain_loss,
    lambda_adv_schedule,
    lr_schedule,
    total_objective,
)
from .autonet import NetworkParams, backward, finite_diff_grad, forward
from .datagen import GenConfig, LabeledDataset, generate_pair, load_dataset, save_dataset
from .evaluation import (
    ConfusionMatrix,
    PadReport,
    accuracy,
    confusion,
    proxy_a_distance,
    structure_report,
)
from .structure import (
    PrecisionMatrix,
    StructureDirection,
    kl_precision,
    partial_correlations,
    precision_from_weights,
    precision_oracle,
    structure_loss,
)
from .trainer import TrainConfig, TrainReport, fit, grad_check

__all__ = [
    "BatchAssignment",
    "ConfusionMatrix",
    "GenConfig",
    "LabeledDataset",
    "NetworkParams",
    "PadReport",
    "PrecisionMatrix",
    "RadaModel",
    "StructureDirection",
    "TrainConfig",
    "TrainReport",
    "accuracy",
    "backward",
    "build_model",
    "class_weighted_domain_loss",
    "confusion",
    "finite_diff_grad",
    "fit",
    "forward",
    "generate_pair",
    "grad_check",
    "kl_precision",
    "lambda_adv_schedule",
    "load_dataset",
    "lr_schedule",
    "partial_correlations",
    "precision_from_weights",
    "precision_oracle",
    "proxy_a_distance",
    "save_dataset",
    "structure_loss",
    "structure_report",
    "total_objective",
]
