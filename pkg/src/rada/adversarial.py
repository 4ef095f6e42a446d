"""RADA network assembly and the composite adversarial objective.

Three subnetworks: a feature extractor, a label predictor with K outputs, and
a single domain discriminator whose output layer carries one branch per class.
Branch k judges source-vs-target membership for samples weighted toward class
k: source samples weight branches by their one-hot label, target samples by
the label predictor's current softmax output.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autonet
from .autonet import NetworkParams
from .errors import AssignmentError, BatchError, DimensionError
from .structure import StructureDirection, structure_loss


@dataclass
class RadaModel:
    """Feature extractor, label predictor, and multi-branch domain discriminator."""

    g_f: NetworkParams
    g_y: NetworkParams
    g_d: NetworkParams
    class_count: int

    def __post_init__(self):
        if self.class_count < 2:
            raise DimensionError(f"need at least 2 classes, got {self.class_count}")
        feat = self.g_f.output_width
        if self.g_y.input_width != feat or self.g_d.input_width != feat:
            raise DimensionError(
                f"feature width {feat} does not match head input widths "
                f"({self.g_y.input_width}, {self.g_d.input_width})"
            )
        if self.g_y.output_width != self.class_count:
            raise DimensionError(
                f"label predictor emits {self.g_y.output_width}, expected {self.class_count}"
            )
        if self.g_d.output_width not in (self.class_count, 1):
            raise DimensionError(
                f"discriminator emits {self.g_d.output_width} branches, "
                f"expected {self.class_count} (or 1 for the single-branch arm)"
            )

    @property
    def branches(self):
        return self.g_d.output_width

    def copy(self):
        return RadaModel(
            self.g_f.copy(), self.g_y.copy(), self.g_d.copy(), self.class_count
        )


def build_model(
    feature_dim,
    class_count,
    rng,
    gf_hidden=32,
    feature_width=16,
    gy_hidden=32,
    gd_hidden=64,
    branches=None,
):
    """Initialize the three subnetworks with Glorot-uniform weights."""
    if branches is None:
        branches = class_count
    g_f = autonet.init_params([feature_dim, gf_hidden, feature_width], rng)
    g_y = autonet.init_params([feature_width, gy_hidden, class_count], rng)
    g_d = autonet.init_params([feature_width, gd_hidden, branches], rng)
    return RadaModel(g_f, g_y, g_d, class_count)


@dataclass
class BatchAssignment:
    """Per-sample domain labels (source=1, target=0) and branch weights."""

    domain_labels: np.ndarray
    class_weights: np.ndarray

    def validate(self):
        labels = np.asarray(self.domain_labels, dtype=np.float64)
        weights = np.asarray(self.class_weights, dtype=np.float64)
        if weights.ndim != 2 or labels.shape != (weights.shape[0],):
            raise AssignmentError(
                f"shape mismatch: {labels.shape} labels, {weights.shape} weights"
            )
        if np.any((labels != 0.0) & (labels != 1.0)):
            raise AssignmentError("domain labels must be 0 or 1")
        if np.any(weights < 0) or np.any(weights > 1):
            raise AssignmentError("class weights must lie in [0, 1]")
        source = labels == 1.0
        if np.any(np.abs(weights.sum(axis=1) - 1.0) > 1e-9):
            raise AssignmentError("class weights must sum to 1 per sample")
        src_w = weights[source]
        if src_w.size and np.any((src_w != 0.0) & (src_w != 1.0)):
            raise AssignmentError("source samples must carry one-hot weights")
        return labels, weights


def one_hot(labels, class_count):
    out = np.zeros((len(labels), class_count))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def class_weighted_domain_loss(branch_logits, assignment):
    """Weighted sum over branches of per-branch domain BCE, averaged over the batch.

    A zero weight mutes its branch exactly: neither the loss value nor the
    gradient sees that branch for that sample. Returns (loss, d(loss)/d(logits)).
    """
    logits = np.asarray(branch_logits, dtype=np.float64)
    labels, weights = assignment.validate()
    if logits.shape != weights.shape:
        raise DimensionError(
            f"logits shape {logits.shape} != weights shape {weights.shape}"
        )
    m = logits.shape[0]
    losses, dlogit = autonet.sigmoid_bce_loss(logits, labels[:, None])
    loss = float(np.sum(weights * losses)) / m
    return loss, weights * dlogit / m


@dataclass
class ObjectiveResult:
    """Composite loss value, its components, and per-subnetwork gradients.

    `grads_*` are the training directions actually applied by SGD: the
    feature extractor's domain component is sign-flipped and scaled by
    lambda_adv through the gradient reversal rule, while the discriminator
    trains on the unscaled domain loss whenever the adversarial path is
    active. `objective_grads_*` are the plain gradients of `total` (target
    weights held constant), which is what finite differences can check.
    """

    total: float
    loss_label: float
    loss_domain: float
    loss_structure: float
    grads_f: list = field(repr=False, default=None)
    grads_y: list = field(repr=False, default=None)
    grads_d: list = field(repr=False, default=None)
    objective_grads_f: list = field(repr=False, default=None)
    objective_grads_y: list = field(repr=False, default=None)
    objective_grads_d: list = field(repr=False, default=None)
    # Domain-path gradient through the feature extractor with the reversal
    # replaced by identity; the training direction applies -lambda_adv to it.
    domain_grads_f: list = field(repr=False, default=None)


def _zeros_like(params):
    return [np.zeros_like(w) for w in params.layers]


def _combine(base, *scaled_terms):
    out = [g.copy() for g in base]
    for scale, grads in scaled_terms:
        if grads is None:
            continue
        for acc, g in zip(out, grads):
            acc += scale * g
    return out


def total_objective(
    model,
    source_x,
    source_y,
    target_x,
    lambda_adv,
    lambda_r,
    direction=StructureDirection.D_TO_Y,
    eps0=1e-6,
    detach_target_weights=True,
    frozen_target_weights=None,
):
    """Evaluate the full training objective on one source/target batch pair.

    total = L_y + lambda_r * L_R + lambda_adv * L_domain.

    Setting lambda_adv to zero switches the adversarial path off entirely
    (the discriminator receives no training gradient); lambda_r zero skips
    the structure term's gradients. `frozen_target_weights` overrides the
    label predictor's softmax as the target branch weighting, which the
    finite-difference checks use to hold those weights constant.
    """
    source_x = np.asarray(source_x, dtype=np.float64)
    target_x = np.asarray(target_x, dtype=np.float64)
    if source_x.shape[0] == 0 or target_x.shape[0] == 0:
        raise BatchError("source and target batches must be nonempty")
    source_y = np.asarray(source_y)
    m_s, m_t = source_x.shape[0], target_x.shape[0]

    # Label path on source.
    trace_f_s = autonet.forward(model.g_f, source_x)
    trace_y_s = autonet.forward(model.g_y, trace_f_s.output)
    loss_label, dlogits_y = autonet.softmax_ce_loss(trace_y_s.output, source_y)
    gy_ce, dfeat_s = autonet.backward(trace_y_s, dlogits_y)
    gf_ce, _ = autonet.backward(trace_f_s, dfeat_s)

    # Target forward and branch weights.
    trace_f_t = autonet.forward(model.g_f, target_x)
    trace_y_t = autonet.forward(model.g_y, trace_f_t.output)
    if frozen_target_weights is not None:
        target_weights = np.asarray(frozen_target_weights, dtype=np.float64)
        detach_target_weights = True
    else:
        target_weights = autonet.softmax_probs(trace_y_t.output)
    if model.branches == model.class_count:
        source_weights = one_hot(source_y, model.class_count)
        tgt_branch_weights = target_weights
    else:  # single-branch discriminator: every sample weights the lone branch fully
        source_weights = np.ones((m_s, 1))
        tgt_branch_weights = np.ones((m_t, 1))
    assignment = BatchAssignment(
        domain_labels=np.concatenate([np.ones(m_s), np.zeros(m_t)]),
        class_weights=np.vstack([source_weights, tgt_branch_weights]),
    )

    # Domain path through the discriminator.
    feats = np.vstack([trace_f_s.output, trace_f_t.output])
    trace_d = autonet.forward(model.g_d, feats)
    loss_domain, dlogits_d = class_weighted_domain_loss(trace_d.output, assignment)
    gd_dom, dfeats = autonet.backward(trace_d, dlogits_d)
    gf_dom_s, _ = autonet.backward(trace_f_s, dfeats[:m_s])
    gf_dom_t, _ = autonet.backward(trace_f_t, dfeats[m_s:])
    gf_dom = [a + b for a, b in zip(gf_dom_s, gf_dom_t)]

    # Optional gradient through the target weighting itself (default: detached).
    gy_dom = gf_dom_y = None
    if not detach_target_weights and model.branches == model.class_count:
        branch_losses, _ = autonet.sigmoid_bce_loss(
            trace_d.output[m_s:], np.zeros((m_t, 1))
        )
        v = branch_losses / (m_s + m_t)
        dot = np.sum(target_weights * v, axis=1, keepdims=True)
        dlogits_tw = target_weights * (v - dot)
        gy_dom, dfeat_t = autonet.backward(trace_y_t, dlogits_tw)
        gf_dom_y, _ = autonet.backward(trace_f_t, dfeat_t)

    # Structure regularizer between the two output layers.
    loss_structure = 0.0
    grad_wy = grad_wd = None
    if model.branches == model.class_count:
        loss_structure, grad_wy, grad_wd = structure_loss(
            model.g_y.layers[-1], model.g_d.layers[-1], direction, eps0
        )

    total = loss_label
    if lambda_r != 0.0:
        total += lambda_r * loss_structure
    if lambda_adv != 0.0:
        total += lambda_adv * loss_domain

    def reg_grads(params, grad_last):
        grads = _zeros_like(params)
        grads[-1] = grad_last
        return grads

    reg_y = reg_grads(model.g_y, grad_wy) if grad_wy is not None else None
    reg_d = reg_grads(model.g_d, grad_wd) if grad_wd is not None else None

    adv_on = lambda_adv != 0.0
    grads_f = _combine(
        gf_ce,
        (-lambda_adv, gf_dom if adv_on else None),
        (lambda_adv, gf_dom_y if adv_on else None),
    )
    grads_y = _combine(
        gy_ce,
        (lambda_r, reg_y if lambda_r != 0.0 else None),
        (lambda_adv, gy_dom if adv_on else None),
    )
    grads_d = _combine(
        gd_dom if adv_on else _zeros_like(model.g_d),
        (lambda_r, reg_d if lambda_r != 0.0 else None),
    )

    objective_grads_f = _combine(
        gf_ce, (lambda_adv, gf_dom), (lambda_adv, gf_dom_y)
    )
    objective_grads_y = _combine(gy_ce, (lambda_r, reg_y), (lambda_adv, gy_dom))
    objective_grads_d = _combine(
        _zeros_like(model.g_d), (lambda_adv, gd_dom), (lambda_r, reg_d)
    )

    return ObjectiveResult(
        total=total,
        loss_label=loss_label,
        loss_domain=loss_domain,
        loss_structure=loss_structure,
        grads_f=grads_f,
        grads_y=grads_y,
        grads_d=grads_d,
        objective_grads_f=objective_grads_f,
        objective_grads_y=objective_grads_y,
        objective_grads_d=objective_grads_d,
        domain_grads_f=gf_dom,
    )


def predict_logits(model, x):
    """Class logits of the label-prediction head G_y(G_f(x))."""
    feats = autonet.forward(model.g_f, x).output
    return autonet.forward(model.g_y, feats).output


def extract_features(model, x):
    """Feature-extractor outputs G_f(x)."""
    return autonet.forward(model.g_f, x).output


def lambda_adv_schedule(p, base=1.0):
    """Adversarial weight ramp (1 - e^{-10p}) / (1 + e^{-10p}) on progress p in [0, 1]."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"progress must lie in [0, 1], got {p}")
    e = np.exp(-10.0 * p)
    return base * (1.0 - e) / (1.0 + e)


def lr_schedule(lr0, p, alpha=10.0, beta=0.75):
    """Learning-rate decay lr0 / (1 + alpha*p)^beta on progress p in [0, 1]."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"progress must lie in [0, 1], got {p}")
    return lr0 / (1.0 + alpha * p) ** beta
