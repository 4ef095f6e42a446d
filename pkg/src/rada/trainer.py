"""Deterministic SGD training loop for the composite adversarial objective.

Momentum SGD (classic heavy-ball) with L2 weight decay folded into the
gradient, two learning-rate groups (feature extractor vs. the two heads),
epoch-constant schedules driven by progress p = epoch / epochs, optional
class-balanced source sampling, and a gradient checker that verifies the
analytic gradients of the full objective against central finite differences.
"""

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import adversarial, autonet, structure
from .adversarial import lambda_adv_schedule, lr_schedule, total_objective
from .errors import BatchError, DivergenceError
from .structure import StructureDirection

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    """Hyperparameters for one training run."""

    epochs: int = 150
    batch_size: int = 32
    lr_backbone: float = 0.0005
    lr_heads: float = 0.005
    momentum: float = 0.9
    weight_decay: float = 0.0005
    alpha: float = 10.0
    beta: float = 0.75
    lambda_adv_base: float = 1.0
    lambda_r: float = 0.01
    direction: StructureDirection = StructureDirection.D_TO_Y
    balanced_sampling: bool = True
    detach_target_weights: bool = True
    seed: int = 0
    eps0: float = 1e-6
    # Architecture sizes (the synthetic feature extractor is one hidden layer,
    # and each head has one hidden FC layer before its output). The narrow
    # discriminator makes its branch structure depend on cross-class sharing.
    gf_hidden: int = 32
    feature_width: int = 16
    gy_hidden: int = 32
    gd_hidden: int = 16

    def validate(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        for name in (
            "lr_backbone", "lr_heads", "momentum", "weight_decay",
            "lambda_adv_base", "lambda_r", "eps0",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        return self

    def to_dict(self):
        d = asdict(self)
        d["direction"] = self.direction.value
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        kwargs = {k: v for k, v in d.items() if k in known}
        if "direction" in kwargs:
            kwargs["direction"] = StructureDirection(kwargs["direction"])
        return cls(**kwargs)


@dataclass
class EpochRecord:
    """One row of the training report."""

    epoch: int
    loss_label: float
    loss_domain: float
    loss_structure: float
    kl_d_to_y: float
    kl_y_to_d: float
    lambda_adv: float
    lr_backbone: float
    lr_heads: float
    source_accuracy: float
    target_accuracy: float | None
    shrink_events: int


@dataclass
class TrainReport:
    records: list = field(default_factory=list)

    @property
    def final(self):
        return self.records[-1] if self.records else None


def _balanced_order(labels, batch_size, n_batches, rng):
    """Class-stratified sample order: per-class quotas differing by at most one."""
    classes = np.unique(labels)
    pools = {}
    for c in classes:
        idx = np.flatnonzero(labels == c)
        pools[c] = idx[rng.permutation(len(idx))]
    total = n_batches * batch_size
    base, rem = divmod(total, len(classes))
    order = []
    quotas = {c: base + (1 if i < rem else 0) for i, c in enumerate(classes)}
    for i in range(base + 1):
        for c in classes:
            if i < quotas[c]:
                pool = pools[c]
                order.append(pool[i % len(pool)])
    return np.asarray(order)


def _epoch_batches(source, target, batch_size, balanced, rng):
    m_s, m_t = source.sample_count, target.sample_count
    n_batches = -(-m_s // batch_size)
    if balanced:
        order = _balanced_order(source.labels, batch_size, n_batches, rng)
    else:
        order = rng.permutation(m_s)
    target_order = np.resize(rng.permutation(m_t), n_batches * batch_size)
    for b in range(n_batches):
        src_idx = order[b * batch_size : (b + 1) * batch_size]
        tgt_idx = target_order[b * batch_size : b * batch_size + len(src_idx)]
        yield src_idx, tgt_idx


def _sgd_step(params, grads, velocity, lr, momentum, weight_decay):
    for w, g, v in zip(params.layers, grads, velocity):
        v *= momentum
        v += g + weight_decay * w
        w -= lr * v


def _structure_diagnostics(model, eps0):
    """End-of-epoch structure summaries; zeros when branch counts differ."""
    if model.branches != model.class_count:
        return 0.0, 0.0, 0
    omega_y = structure.precision_from_weights(model.g_y.layers[-1], eps0)
    omega_d = structure.precision_from_weights(model.g_d.layers[-1], eps0)
    kl_dy = structure.kl_precision(omega_y, omega_d, StructureDirection.D_TO_Y)
    kl_yd = structure.kl_precision(omega_y, omega_d, StructureDirection.Y_TO_D)
    shrinks = int(omega_y.shrink_used > 0) + int(omega_d.shrink_used > 0)
    return kl_dy, kl_yd, shrinks


def _accuracy(model, ds):
    logits = adversarial.predict_logits(model, ds.features)
    return float(np.mean(np.argmax(logits, axis=1) == ds.labels))


def fit(model, source, target, cfg):
    """Train a copy of `model`; returns (trained model, per-epoch report)."""
    cfg.validate()
    if source.labels is None:
        raise BatchError("source dataset must be labeled")
    model = model.copy()
    report = TrainReport()
    rng = np.random.default_rng(cfg.seed)
    velocities = {
        "f": [np.zeros_like(w) for w in model.g_f.layers],
        "y": [np.zeros_like(w) for w in model.g_y.layers],
        "d": [np.zeros_like(w) for w in model.g_d.layers],
    }
    for epoch in range(cfg.epochs):
        p = epoch / cfg.epochs
        lam = lambda_adv_schedule(p, cfg.lambda_adv_base)
        lr_f = lr_schedule(cfg.lr_backbone, p, cfg.alpha, cfg.beta)
        lr_h = lr_schedule(cfg.lr_heads, p, cfg.alpha, cfg.beta)
        label_sum = domain_sum = 0.0
        n_batches = 0
        for step, (src_idx, tgt_idx) in enumerate(
            _epoch_batches(source, target, cfg.batch_size, cfg.balanced_sampling, rng)
        ):
            res = total_objective(
                model,
                source.features[src_idx],
                source.labels[src_idx],
                target.features[tgt_idx],
                lambda_adv=lam,
                lambda_r=cfg.lambda_r,
                direction=cfg.direction,
                eps0=cfg.eps0,
                detach_target_weights=cfg.detach_target_weights,
            )
            if not np.isfinite(res.total):
                raise DivergenceError(epoch, step, res.total)
            _sgd_step(model.g_f, res.grads_f, velocities["f"], lr_f,
                      cfg.momentum, cfg.weight_decay)
            _sgd_step(model.g_y, res.grads_y, velocities["y"], lr_h,
                      cfg.momentum, cfg.weight_decay)
            _sgd_step(model.g_d, res.grads_d, velocities["d"], lr_h,
                      cfg.momentum, cfg.weight_decay)
            label_sum += res.loss_label
            domain_sum += res.loss_domain
            n_batches += 1
        kl_dy, kl_yd, shrinks = _structure_diagnostics(model, cfg.eps0)
        if model.branches == model.class_count:
            loss_structure = structure.structure_loss(
                model.g_y.layers[-1], model.g_d.layers[-1], cfg.direction, cfg.eps0
            )[0]
        else:
            loss_structure = 0.0
        report.records.append(
            EpochRecord(
                epoch=epoch,
                loss_label=label_sum / n_batches,
                loss_domain=domain_sum / n_batches,
                loss_structure=loss_structure,
                kl_d_to_y=kl_dy,
                kl_y_to_d=kl_yd,
                lambda_adv=lam,
                lr_backbone=lr_f,
                lr_heads=lr_h,
                source_accuracy=_accuracy(model, source),
                target_accuracy=(
                    _accuracy(model, target) if target.labels is not None else None
                ),
                shrink_events=shrinks,
            )
        )
    return model, report


def grad_check(model, source_batch, target_batch, cfg, h=1e-5):
    """Compare analytic full-objective gradients with central finite differences.

    The target branch weights are frozen at their base-point values in every
    perturbed evaluation, matching the detached analytic gradient. Returns
    {'theta_f': err, 'theta_y': err, 'theta_d': err} using the max-norm
    relative error ||a - fd||_inf / max(1, ||fd||_inf).
    """
    source_x, source_y = source_batch
    target_x = np.asarray(target_batch, dtype=np.float64)
    if len(source_x) > 8 or len(target_x) > 8:
        raise BatchError("grad_check batches are capped at 8 samples")
    lam = cfg.lambda_adv_base
    frozen = autonet.softmax_probs(adversarial.predict_logits(model, target_x))

    def objective(m):
        return total_objective(
            m, source_x, source_y, target_x,
            lambda_adv=lam, lambda_r=cfg.lambda_r, direction=cfg.direction,
            eps0=cfg.eps0, frozen_target_weights=frozen,
        )

    base = objective(model)
    analytic = {
        "theta_f": base.objective_grads_f,
        "theta_y": base.objective_grads_y,
        "theta_d": base.objective_grads_d,
    }
    swap = {
        "theta_f": lambda p: adversarial.RadaModel(p, model.g_y, model.g_d, model.class_count),
        "theta_y": lambda p: adversarial.RadaModel(model.g_f, p, model.g_d, model.class_count),
        "theta_d": lambda p: adversarial.RadaModel(model.g_f, model.g_y, p, model.class_count),
    }
    subnets = {"theta_f": model.g_f, "theta_y": model.g_y, "theta_d": model.g_d}
    errors = {}
    for name, params in subnets.items():
        fd = autonet.finite_diff_grad(
            lambda p: objective(swap[name](p)).total, params, h
        )
        errors[name] = autonet.grad_relative_error(analytic[name], fd)
    return errors


def save_checkpoint(model, cfg, path):
    """Dump all weight matrices plus the config; round-trips bit-exactly."""
    arrays = {"version": np.array(CHECKPOINT_VERSION)}
    for tag, params in (("f", model.g_f), ("y", model.g_y), ("d", model.g_d)):
        for i, w in enumerate(params.layers):
            arrays[f"{tag}{i}"] = w
    arrays["class_count"] = np.array(model.class_count)
    arrays["config"] = np.frombuffer(
        json.dumps(cfg.to_dict()).encode(), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Restore (model, config) from a checkpoint file."""
    with np.load(path) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        cfg = TrainConfig.from_dict(json.loads(bytes(data["config"]).decode()))
        nets = {}
        for tag in ("f", "y", "d"):
            layers = []
            i = 0
            while f"{tag}{i}" in data:
                layers.append(data[f"{tag}{i}"])
                i += 1
            nets[tag] = autonet.NetworkParams(layers)
        model = adversarial.RadaModel(
            nets["f"], nets["y"], nets["d"], int(data["class_count"])
        )
    return model, cfg
