"""Dense ReLU network with hand-written backpropagation.

Parameters are stored as ``(out, in)`` weight matrices and bias vectors;
inputs are batches of row vectors, so a layer computes ``a @ W.T + b``.
Everything is float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyArchitecture
from .io import atomic_write_text

CE = "ce"
KL = "kl"


@dataclass(frozen=True)
class MlpParams:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise EmptyArchitecture("need at least one layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape[0] != b.shape[0]:
                raise DimensionMismatch(f"layer {k}: weight rows {w.shape[0]} != bias size {b.shape[0]}")
            if k and w.shape[1] != self.weights[k - 1].shape[0]:
                raise DimensionMismatch(f"layer {k}: input size does not chain")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[0]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray]) -> "MlpParams":
        return cls(tuple(arrays[0::2]), tuple(arrays[1::2]))


@dataclass(frozen=True)
class ForwardTrace:
    """Per-layer pre-activations and activations; ``acts[0]`` is the input."""

    pre: list[np.ndarray]
    acts: list[np.ndarray]
    logits: np.ndarray
    log_probs: np.ndarray
    probs: np.ndarray

    @property
    def embedding(self) -> np.ndarray:
        """Input to the output layer (last hidden activation, or the input itself)."""
        return self.acts[-1]


def init(layer_sizes: Sequence[int], seed: int) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise EmptyArchitecture("layer_sizes needs an input and an output size")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        s = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-s, s, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(tuple(weights), tuple(biases))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def forward(params: MlpParams, x: np.ndarray) -> ForwardTrace:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != params.weights[0].shape[1]:
        raise DimensionMismatch(f"input has {x.shape[1]} features, network expects {params.weights[0].shape[1]}")
    acts, pre = [x], []
    a = x
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        pre.append(z)
        if k < last:
            a = np.maximum(z, 0.0)
            acts.append(a)
    logits = pre[-1]
    lp = log_softmax(logits)
    return ForwardTrace(pre, acts, logits, lp, np.exp(lp))


def predict(params: MlpParams, x: np.ndarray) -> np.ndarray:
    return forward(params, x).logits.argmax(axis=1)


def _check_labels(trace: ForwardTrace, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (trace.logits.shape[0],):
        raise DimensionMismatch(f"{y.shape} labels for {trace.logits.shape[0]} examples")
    return y


def ce_per_example(trace: ForwardTrace, y: np.ndarray) -> np.ndarray:
    y = _check_labels(trace, y)
    return -trace.log_probs[np.arange(y.shape[0]), y]


def kl_per_example(trace_clean: ForwardTrace, trace_adv: ForwardTrace) -> np.ndarray:
    """KL(f(x) || f(x + delta)) for each row."""
    if trace_clean.probs.shape != trace_adv.probs.shape:
        raise DimensionMismatch("clean and adversarial traces differ in shape")
    return (trace_clean.probs * (trace_clean.log_probs - trace_adv.log_probs)).sum(axis=1)


def loss_ce(trace: ForwardTrace, y: np.ndarray) -> float:
    return float(ce_per_example(trace, y).mean())


def loss_kl(trace_clean: ForwardTrace, trace_adv: ForwardTrace) -> float:
    return float(kl_per_example(trace_clean, trace_adv).mean())


def ce_logit_grad(trace: ForwardTrace, y: np.ndarray) -> np.ndarray:
    """d(-log p_y)/d logits, per row."""
    y = _check_labels(trace, y)
    g = trace.probs.copy()
    g[np.arange(y.shape[0]), y] -= 1.0
    return g


def kl_logit_grads(trace_clean: ForwardTrace, trace_adv: ForwardTrace) -> tuple[np.ndarray, np.ndarray]:
    """Per-row gradients of KL(p_clean || p_adv) w.r.t. (clean logits, adversarial logits)."""
    pc = trace_clean.probs
    r = trace_clean.log_probs - trace_adv.log_probs
    d_clean = pc * (r - (pc * r).sum(axis=1, keepdims=True))
    d_adv = trace_adv.probs - pc
    return d_clean, d_adv


def backward(params: MlpParams, trace: ForwardTrace, dlogits: np.ndarray, need_params: bool = True):
    """Backpropagate ``dlogits`` (already scaled per row).

    Returns ``(grads, dx)`` where ``grads`` is an MlpParams of gradients, or
    None when ``need_params`` is false.
    """
    delta = dlogits
    gw, gb = [], []
    for k in range(len(params.weights) - 1, -1, -1):
        if need_params:
            gw.append(delta.T @ trace.acts[k])
            gb.append(delta.sum(axis=0))
        delta = delta @ params.weights[k]
        if k > 0:
            delta = delta * (trace.pre[k - 1] > 0)
    grads = MlpParams(tuple(reversed(gw)), tuple(reversed(gb))) if need_params else None
    return grads, delta


def add_grads(a: MlpParams, b: MlpParams) -> MlpParams:
    return MlpParams.from_arrays([x + y for x, y in zip(a.arrays(), b.arrays())])


def grad_params(params: MlpParams, x: np.ndarray, target, loss_kind: str = CE) -> MlpParams:
    """Gradient of the batch-mean loss with respect to the parameters.

    For ``ce`` the target is a label vector.  For ``kl`` the target is the
    clean ForwardTrace, ``x`` is the adversarial input, and only the
    adversarial branch is differentiated.
    """
    trace = forward(params, x)
    n = trace.logits.shape[0]
    if loss_kind == CE:
        dl = ce_logit_grad(trace, target)
    elif loss_kind == KL:
        _, dl = kl_logit_grads(target, trace)
    else:
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    grads, _ = backward(params, trace, dl / n)
    return grads


def grad_input(params: MlpParams, x: np.ndarray, target, loss_kind: str = CE) -> np.ndarray:
    """Gradient of each example's own loss with respect to its input row."""
    trace = forward(params, x)
    if loss_kind == CE:
        dl = ce_logit_grad(trace, target)
    elif loss_kind == KL:
        _, dl = kl_logit_grads(target, trace)
    else:
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    _, dx = backward(params, trace, dl, need_params=False)
    return dx


def sgd_step(params: MlpParams, grads: MlpParams, lr: float, weight_decay: float = 0.0) -> MlpParams:
    """theta <- theta - lr * (grad + weight_decay * theta)."""
    if lr < 0:
        raise ValueError("lr must be >= 0")
    return MlpParams.from_arrays(
        [p - lr * (g + weight_decay * p) for p, g in zip(params.arrays(), grads.arrays())]
    )


def momentum_step(
    params: MlpParams,
    grads: MlpParams,
    velocity: MlpParams | None,
    lr: float,
    weight_decay: float = 0.0,
    momentum: float = 0.9,
) -> tuple[MlpParams, MlpParams]:
    """Heavy-ball SGD: v <- momentum*v + grad + wd*theta; theta <- theta - lr*v."""
    ps, gs = params.arrays(), grads.arrays()
    vs = velocity.arrays() if velocity is not None else [np.zeros_like(p) for p in ps]
    new_v = [momentum * v + g + weight_decay * p for p, g, v in zip(ps, gs, vs)]
    new_p = [p - lr * v for p, v in zip(ps, new_v)]
    return MlpParams.from_arrays(new_p), MlpParams.from_arrays(new_v)


def save_checkpoint(params: MlpParams, path):
    """Flat CSV: an architecture comment line, then (layer,row,col,value).

    The bias of output unit ``r`` is stored at ``col = fan_in``.
    """
    lines = ["# layers " + ",".join(str(s) for s in params.layer_sizes), "layer,row,col,value"]
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        aug = np.hstack([w, b[:, None]])
        for r in range(aug.shape[0]):
            for c in range(aug.shape[1]):
                lines.append(f"{k},{r},{c},{float(aug[r, c])!r}")
    return atomic_write_text(path, "\n".join(lines) + "\n")


def load_checkpoint(path) -> MlpParams:
    with open(path) as fh:
        lines = fh.read().splitlines()
    sizes = [int(s) for s in lines[0].split()[-1].split(",")]
    mats = [np.zeros((o, i + 1)) for i, o in zip(sizes[:-1], sizes[1:])]
    for line in lines[2:]:
        k, r, c, v = line.split(",")
        mats[int(k)][int(r), int(c)] = float(v)
    return MlpParams(tuple(m[:, :-1].copy() for m in mats), tuple(m[:, -1].copy() for m in mats))
