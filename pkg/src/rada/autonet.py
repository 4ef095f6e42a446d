"""Minimal feedforward engine with exact reverse-mode gradients.

Layer l holds one unified weight matrix of shape (n_{l-1}+1, n_l): the last
row is the bias, and a constant-1 coordinate is appended to every layer input.
Hidden layers apply the configured activation; the final layer emits raw
logits.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DimensionError, LabelError

ACTIVATIONS = ("relu", "identity")


@dataclass
class NetworkParams:
    """Ordered per-layer unified weight matrices (bias row absorbed)."""

    layers: list

    def __post_init__(self):
        if not self.layers:
            raise DimensionError("network needs at least one layer")
        self.layers = [np.asarray(w, dtype=np.float64) for w in self.layers]
        for i, w in enumerate(self.layers):
            if w.ndim != 2:
                raise DimensionError(f"layer {i} is not a matrix")
            if not np.all(np.isfinite(w)):
                raise ValueError(f"layer {i} contains non-finite entries")
            if i > 0 and self.layers[i - 1].shape[1] + 1 != w.shape[0]:
                raise DimensionError(
                    f"layer {i} expects input width {w.shape[0] - 1}, "
                    f"previous layer emits {self.layers[i - 1].shape[1]}"
                )

    @property
    def input_width(self):
        return self.layers[0].shape[0] - 1

    @property
    def output_width(self):
        return self.layers[-1].shape[1]

    def copy(self):
        return NetworkParams([w.copy() for w in self.layers])


@dataclass
class ForwardTrace:
    """Everything backward() needs: per-layer biased inputs and pre-activations."""

    params: NetworkParams
    inputs: list
    preacts: list
    output: np.ndarray
    activation: str


def init_params(widths, rng):
    """Glorot-uniform weights with zero bias rows for the given layer widths."""
    if len(widths) < 2:
        raise DimensionError("need at least input and output widths")
    layers = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = np.zeros((fan_in + 1, fan_out))
        w[:fan_in, :] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append(w)
    return NetworkParams(layers)


def _append_bias(x):
    out = np.empty((x.shape[0], x.shape[1] + 1))
    out[:, :-1] = x
    out[:, -1] = 1.0
    return out


def forward(params, x, activation="relu"):
    """Run a batch through the network, recording the trace for backward()."""
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"input must be batch x features, got shape {x.shape}")
    if x.shape[1] != params.input_width:
        raise DimensionError(
            f"input width {x.shape[1]} != network input width {params.input_width}"
        )
    inputs, preacts = [], []
    a = x
    last = len(params.layers) - 1
    for l, w in enumerate(params.layers):
        ab = _append_bias(a)
        z = ab @ w
        inputs.append(ab)
        preacts.append(z)
        if l == last or activation == "identity":
            a = z
        else:
            a = np.maximum(z, 0.0)
    return ForwardTrace(params, inputs, preacts, a, activation)


def backward(trace, upstream):
    """Exact reverse-mode pass; returns per-layer gradients and d(loss)/d(input)."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != trace.output.shape:
        raise DimensionError(
            f"upstream shape {upstream.shape} != output shape {trace.output.shape}"
        )
    layers = trace.params.layers
    grads = [None] * len(layers)
    dz = upstream
    for l in range(len(layers) - 1, -1, -1):
        grads[l] = trace.inputs[l].T @ dz
        da = (dz @ layers[l].T)[:, :-1]
        if l > 0:
            if trace.activation == "relu":
                dz = da * (trace.preacts[l - 1] > 0)
            else:
                dz = da
        else:
            dx = da
    return grads, dx


def softmax_ce_loss(logits, labels):
    """Batch-mean cross entropy and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    batch, k = logits.shape
    if labels.shape != (batch,):
        raise DimensionError(f"labels shape {labels.shape} != ({batch},)")
    if labels.min() < 0 or labels.max() >= k:
        raise LabelError(f"labels must lie in [0, {k})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.sum(np.exp(shifted), axis=1))
    rows = np.arange(batch)
    loss = float(np.mean(logz - shifted[rows, labels]))
    probs = np.exp(shifted - logz[:, None])
    dlogits = probs
    dlogits[rows, labels] -= 1.0
    return loss, dlogits / batch


def softmax_probs(logits):
    """Row-wise softmax (max-shifted)."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def sigmoid_bce_loss(logit, domain_label):
    """Numerically stable binary cross entropy on a logit; returns (loss, d/dlogit).

    Works elementwise on arrays as well as on scalars.
    """
    z = np.asarray(logit, dtype=np.float64)
    y = np.asarray(domain_label, dtype=np.float64)
    loss = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    dz = expit(z) - y
    if loss.ndim == 0:
        return float(loss), float(dz)
    return loss, dz


def grl_backward(upstream, lambda_adv):
    """Gradient-reversal backward rule: identity forward, -lambda_adv scaling here."""
    if lambda_adv < 0:
        raise ValueError(f"lambda_adv must be nonnegative, got {lambda_adv}")
    return -lambda_adv * np.asarray(upstream, dtype=np.float64)


def finite_diff_grad(loss_fn, params, h):
    """Central-difference gradient of loss_fn over every scalar parameter."""
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    work = params.copy()
    grads = []
    for w in work.layers:
        g = np.zeros_like(w)
        it = np.nditer(w, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = w[idx]
            w[idx] = orig + h
            up = loss_fn(work)
            w[idx] = orig - h
            down = loss_fn(work)
            w[idx] = orig
            g[idx] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def grad_relative_error(analytic, reference):
    """max-norm relative error between two gradient lists: ||a-r||_inf / max(1, ||r||_inf)."""
    diff = max(float(np.max(np.abs(a - r))) for a, r in zip(analytic, reference))
    ref = max(float(np.max(np.abs(r))) for r in reference)
    return diff / max(1.0, ref)
