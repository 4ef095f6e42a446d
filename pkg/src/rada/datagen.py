"""Synthetic domain-shift generator with shared inter-class structure.

Class means are drawn so that, coordinate by coordinate, their correlation
across classes follows a known ground-truth precision matrix. The target
domain applies one rigid transform (rotation and/or translation) to all class
means, so inter-class geometry — and with it the dependency structure — is
identical in both domains while the marginal feature distribution shifts.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from . import linalg
from .errors import DimensionError, FormatError, GenError, NotPositiveDefinite

SHIFT_KINDS = ("rotation", "translation", "both")


@dataclass
class LabeledDataset:
    """Feature matrix with optional class labels and a domain tag."""

    features: np.ndarray
    labels: np.ndarray | None
    domain: str
    class_count: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise DimensionError(f"features must be M x F, got {self.features.shape}")
        if self.domain not in ("source", "target"):
            raise ValueError(f"domain must be source or target, got {self.domain!r}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.features.shape[0],):
                raise DimensionError("labels must align with feature rows")
            if self.labels.min() < 0 or self.labels.max() >= self.class_count:
                raise ValueError(f"labels must lie in [0, {self.class_count})")

    @property
    def sample_count(self):
        return self.features.shape[0]

    @property
    def feature_dim(self):
        return self.features.shape[1]


@dataclass
class GenConfig:
    """Knobs for one synthetic source/target pair."""

    class_count: int = 6
    feature_dim: int = 16
    per_class: int = 100
    seed: int = 0
    shift_kind: str = "both"
    shift_magnitude: float = 4.0
    cov_scale: float = 3.0
    noise: float = 2.0
    pda_subset: tuple | None = None
    edge_prob: float = 0.35

    def validate(self):
        if self.class_count < 2:
            raise ValueError(f"class_count must be >= 2, got {self.class_count}")
        if self.feature_dim < 2:
            raise ValueError(f"feature_dim must be >= 2, got {self.feature_dim}")
        if self.per_class < 1:
            raise ValueError(f"per_class must be >= 1, got {self.per_class}")
        if self.shift_kind not in SHIFT_KINDS:
            raise ValueError(f"shift_kind must be one of {SHIFT_KINDS}")
        if self.shift_magnitude < 0:
            raise ValueError("shift_magnitude must be >= 0")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if self.pda_subset is not None:
            subset = sorted(set(int(c) for c in self.pda_subset))
            if not subset or any(c < 0 or c >= self.class_count for c in subset):
                raise ValueError(
                    f"pda_subset must be a nonempty subset of 0..{self.class_count - 1}"
                )
            self.pda_subset = tuple(subset)
        return self


def _random_sparse_precision(k, edge_prob, rng):
    """Symmetric sparse off-diagonal pattern made PD by diagonal dominance."""
    omega = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            if rng.random() < edge_prob:
                val = rng.uniform(0.3, 0.7) * (1.0 if rng.random() < 0.5 else -1.0)
                omega[i, j] = omega[j, i] = val
    row_mass = np.sum(np.abs(omega), axis=1)
    omega[np.diag_indices(k)] = row_mass + rng.uniform(0.5, 1.0, size=k)
    return omega


def _rigid_transform(cfg, rng):
    """Orthogonal map and offset applied to every class mean of the target."""
    f = cfg.feature_dim
    rot = np.eye(f)
    offset = np.zeros(f)
    if cfg.shift_kind in ("rotation", "both"):
        a = rng.standard_normal((f, f))
        skew = (a - a.T) / 2.0
        skew /= max(np.linalg.norm(skew), 1e-12)
        rot = expm(cfg.shift_magnitude * skew)
    if cfg.shift_kind in ("translation", "both"):
        direction = rng.standard_normal(f)
        direction /= max(np.linalg.norm(direction), 1e-12)
        offset = cfg.shift_magnitude * direction
    return rot, offset


def _sample_domain(means, classes, per_class, noise, rng):
    feats, labels = [], []
    for c in classes:
        feats.append(means[c] + noise * rng.standard_normal((per_class, means.shape[1])))
        labels.append(np.full(per_class, c, dtype=np.int64))
    return np.vstack(feats), np.concatenate(labels)


def generate_pair(cfg):
    """Generate (source, target, ground-truth precision) for one config."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    omega_star = None
    for _ in range(10):
        candidate = _random_sparse_precision(cfg.class_count, cfg.edge_prob, rng)
        try:
            linalg.cholesky(candidate)
        except NotPositiveDefinite:
            continue
        omega_star = candidate
        break
    if omega_star is None:
        raise GenError("could not draw a positive definite ground-truth precision")

    sigma_star = linalg.inverse_pd(omega_star)
    chol = linalg.cholesky(sigma_star).lower
    # One feature coordinate per column: across classes it follows sigma_star.
    means = cfg.cov_scale * (chol @ rng.standard_normal((cfg.class_count, cfg.feature_dim)))
    rot, offset = _rigid_transform(cfg, rng)
    target_means = means @ rot.T + offset

    source_classes = range(cfg.class_count)
    target_classes = cfg.pda_subset if cfg.pda_subset else source_classes
    xs, ys = _sample_domain(means, source_classes, cfg.per_class, cfg.noise, rng)
    xt, yt = _sample_domain(target_means, target_classes, cfg.per_class, cfg.noise, rng)
    source = LabeledDataset(xs, ys, "source", cfg.class_count)
    target = LabeledDataset(xt, yt, "target", cfg.class_count)
    return source, target, omega_star


def save_dataset(ds, path):
    """Write header 'K F M domain' then one 'label f_1 ... f_F' record per sample."""
    lines = [f"{ds.class_count} {ds.feature_dim} {ds.sample_count} {ds.domain}"]
    labels = ds.labels if ds.labels is not None else np.full(ds.sample_count, -1)
    for label, row in zip(labels, ds.features):
        values = " ".join(f"{v:.17g}" for v in row)
        lines.append(f"{label} {values}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path):
    """Parse a dataset file, validating structure and label range."""
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("empty dataset file")
    header = lines[0].split()
    if len(header) != 4:
        raise FormatError("header must be 'K F M domain'", line=1)
    try:
        k, f, m = int(header[0]), int(header[1]), int(header[2])
    except ValueError:
        raise FormatError("header counts must be integers", line=1) from None
    domain = header[3]
    if domain not in ("source", "target"):
        raise FormatError(f"unknown domain {domain!r}", line=1)
    if len(lines) - 1 != m:
        raise FormatError(f"header promises {m} records, file has {len(lines) - 1}")
    features = np.empty((m, f))
    labels = np.empty(m, dtype=np.int64)
    for i, line in enumerate(lines[1:]):
        parts = line.split()
        if len(parts) != f + 1:
            raise FormatError(f"expected {f + 1} fields, got {len(parts)}", line=i + 2)
        try:
            labels[i] = int(parts[0])
            features[i] = [float(p) for p in parts[1:]]
        except ValueError:
            raise FormatError("unparsable record", line=i + 2) from None
        if labels[i] < -1 or labels[i] >= k:
            raise FormatError(f"label {labels[i]} outside [-1, {k})", line=i + 2)
        if not np.all(np.isfinite(features[i])):
            raise FormatError("non-finite feature value", line=i + 2)
    withheld = labels == -1
    if withheld.all():
        return LabeledDataset(features, None, domain, k)
    if withheld.any():
        raise FormatError("mixed withheld and present labels")
    return LabeledDataset(features, labels, domain, k)
