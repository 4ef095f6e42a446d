"""Metrics and diagnostics: accuracy, confusion, proxy A-distance, structure reports.

CSV export only; plot rendering is out of scope.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import adversarial, structure
from .errors import DimensionError, EvalError
from .structure import StructureDirection


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts indexed by (true class, predicted class)."""

    counts: np.ndarray

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def accuracy(self):
        return float(np.trace(self.counts)) / self.total


@dataclass(frozen=True)
class PadReport:
    """Domain-classifier error and the proxy A-distance 2*(1 - 2*epsilon)."""

    epsilon: float
    d_a: float


def pad_from_epsilon(epsilon):
    eps = min(max(float(epsilon), 0.0), 0.5)
    return PadReport(epsilon=eps, d_a=2.0 * (1.0 - 2.0 * eps))


def _predictions(model, ds):
    if ds.labels is None:
        raise EvalError("dataset carries no labels")
    logits = adversarial.predict_logits(model, ds.features)
    return np.argmax(logits, axis=1)


def accuracy(model, ds):
    """Fraction of argmax predictions matching labels (ties go to the lowest class)."""
    return float(np.mean(_predictions(model, ds) == ds.labels))


def confusion(model, ds):
    """K x K count matrix, rows true class, columns predicted."""
    preds = _predictions(model, ds)
    k = ds.class_count
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (ds.labels, preds), 1)
    return ConfusionMatrix(counts)


def _logistic_error(train_x, train_y, test_x, test_y, steps=200, lr=0.1, l2=1e-3):
    """Held-out 0/1 error of a fixed-budget linear logistic domain classifier."""
    n, f = train_x.shape
    w = np.zeros(f)
    b = 0.0
    for _ in range(steps):
        gz = (expit(train_x @ w + b) - train_y) / n
        w -= lr * (train_x.T @ gz + l2 * w)
        b -= lr * float(np.sum(gz))
    preds = (test_x @ w + b) > 0
    return float(np.mean(preds != test_y))


def proxy_a_distance(source_feats, target_feats, folds=5):
    """Proxy A-distance from k-fold cross-validated domain classification error."""
    source_feats = np.asarray(source_feats, dtype=np.float64)
    target_feats = np.asarray(target_feats, dtype=np.float64)
    if source_feats.size == 0 or target_feats.size == 0:
        raise EvalError("both feature sets must be nonempty")
    if folds < 2:
        raise EvalError(f"need at least 2 folds, got {folds}")
    x = np.vstack([source_feats, target_feats])
    y = np.concatenate([np.ones(len(source_feats)), np.zeros(len(target_feats))])
    fold_of = np.arange(len(x)) % folds
    errors = []
    for f in range(folds):
        test = fold_of == f
        if test.sum() <= 1 or (~test).sum() <= 1:
            raise EvalError(f"fold {f} is degenerate ({int(test.sum())} samples)")
        errors.append(_logistic_error(x[~test], y[~test], x[test], y[test]))
    return pad_from_epsilon(float(np.mean(errors)))


@dataclass(frozen=True)
class StructureReport:
    """Precision matrices, partial correlations, and both discrepancy flavors."""

    omega_y: structure.PrecisionMatrix
    omega_d: structure.PrecisionMatrix
    rho_y: np.ndarray
    rho_d: np.ndarray
    kl_d_to_y: float
    kl_y_to_d: float
    loss_d_to_y: float
    loss_y_to_d: float


def structure_report(model, eps0=1e-6):
    """All structure diagnostics for a trained model's two output layers."""
    if model.branches != model.class_count:
        raise DimensionError(
            "structure diagnostics need a discriminator branch per class"
        )
    w_y = model.g_y.layers[-1]
    w_d = model.g_d.layers[-1]
    omega_y = structure.precision_from_weights(w_y, eps0)
    omega_d = structure.precision_from_weights(w_d, eps0)
    return StructureReport(
        omega_y=omega_y,
        omega_d=omega_d,
        rho_y=structure.partial_correlations(omega_y),
        rho_d=structure.partial_correlations(omega_d),
        kl_d_to_y=structure.kl_precision(omega_y, omega_d, StructureDirection.D_TO_Y),
        kl_y_to_d=structure.kl_precision(omega_y, omega_d, StructureDirection.Y_TO_D),
        loss_d_to_y=structure.structure_loss(w_y, w_d, StructureDirection.D_TO_Y, eps0)[0],
        loss_y_to_d=structure.structure_loss(w_y, w_d, StructureDirection.Y_TO_D, eps0)[0],
    )


def combined_heatmap(rho_y, rho_d):
    """Upper triangle from the label predictor, lower from the discriminator."""
    k = rho_y.shape[0]
    out = np.where(np.triu(np.ones((k, k), dtype=bool), 1), rho_y, rho_d)
    np.fill_diagonal(out, 1.0)
    return out


def _fmt(v):
    return f"{v:.17g}"


def write_matrix_csv(matrix, path, integer=False):
    lines = []
    for row in np.asarray(matrix):
        if integer:
            lines.append(",".join(str(int(v)) for v in row))
        else:
            lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_confusion_csv(cm, path):
    write_matrix_csv(cm.counts, path, integer=True)


def write_heatmap_csv(report, path):
    write_matrix_csv(combined_heatmap(report.rho_y, report.rho_d), path)


CURVE_COLUMNS = (
    "epoch", "loss_label", "loss_domain", "loss_structure", "kl_d_to_y",
    "kl_y_to_d", "lambda_adv", "lr_backbone", "lr_heads", "source_accuracy",
    "target_accuracy", "shrink_events",
)


def write_curves_csv(report, path):
    """One row per training epoch."""
    lines = [",".join(CURVE_COLUMNS)]
    for rec in report.records:
        row = []
        for col in CURVE_COLUMNS:
            v = getattr(rec, col)
            if v is None:
                row.append("")
            elif isinstance(v, int):
                row.append(str(v))
            else:
                row.append(_fmt(v))
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")
