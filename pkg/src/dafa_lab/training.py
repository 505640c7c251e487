"""Adversarial training with a warm-up phase and one-shot DAFA class weights.

Epochs 1..tau train with uniform weights while the final warm-up epoch
accumulates the softmax outputs of the adversarial training examples.  At the
end of epoch tau the class weights are computed once and frozen.  Later
epochs scale the clean CE term by W_y and/or the attack radius by W_y; the
KL term's beta is never scaled.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import attack, dafa, nn
from .errors import ConfigError, EmptyClass
from .metrics import MetricsRecord
from .synthdata import LabeledDataset

log = logging.getLogger(__name__)

TRADES = "trades"
PGD = "pgd"
MODES = (TRADES, PGD)

OFF = "off"
LOSS_ONLY = "loss_only"
MARGIN_ONLY = "margin_only"
BOTH = "both"
DAFA_MODES = (OFF, LOSS_ONLY, MARGIN_ONLY, BOTH)

PROB = "prob"
EMBEDDING = "embedding"
EASY_REF = "easy_ref"
VARIANTS = (PROB, EMBEDDING, EASY_REF)

EVAL_CHUNK = 4096


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    warmup_tau: int | None = None
    lam: float = 1.0
    beta: float = 6.0
    base_epsilon: float = 0.5
    lr: float = 0.1
    lr_decay_epochs: tuple[int, ...] | None = None
    lr_decay_factor: float = 0.1
    batch_size: int = 128
    weight_decay: float = 5e-4
    momentum: float = 0.9
    hidden: tuple[int, ...] = (64, 64)
    seed: int = 0
    mode: str = TRADES
    dafa_mode: str | None = None
    variant: str = PROB
    clip_K: float = dafa.DEFAULT_CLIP
    fixed_margin_scale: tuple[float, ...] | None = None
    eval_every: int = 1
    eval_last: int | None = None

    def __post_init__(self):
        if self.warmup_tau is None:
            object.__setattr__(self, "warmup_tau", math.ceil(0.5 * self.epochs))
        if self.lr_decay_epochs is None:
            object.__setattr__(
                self, "lr_decay_epochs", (round(0.9 * self.epochs), round(0.95 * self.epochs))
            )
        else:
            object.__setattr__(self, "lr_decay_epochs", tuple(int(e) for e in self.lr_decay_epochs))
        if self.dafa_mode is None:
            object.__setattr__(self, "dafa_mode", LOSS_ONLY if self.mode == PGD else BOTH)
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.fixed_margin_scale is not None:
            object.__setattr__(self, "fixed_margin_scale", tuple(float(s) for s in self.fixed_margin_scale))
        self.validate()

    def validate(self) -> None:
        if self.epochs < 2:
            raise ConfigError("epochs must be >= 2")
        if not 0 < self.warmup_tau < self.epochs:
            raise ConfigError(f"need 0 < warmup_tau < epochs, got tau={self.warmup_tau}, epochs={self.epochs}")
        if self.beta < 0 or self.base_epsilon < 0 or self.lam < 0:
            raise ConfigError("beta, base_epsilon and lam must be >= 0")
        if not self.lr > 0 or self.batch_size < 1:
            raise ConfigError("lr must be > 0 and batch_size >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.dafa_mode not in DAFA_MODES:
            raise ConfigError(f"dafa_mode must be one of {DAFA_MODES}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
        if not self.clip_K > 0:
            raise ConfigError("clip_K must be > 0")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.eval_last is not None and self.eval_last < 1:
            raise ConfigError("eval_last must be >= 1")
        if self.fixed_margin_scale is not None and any(s < 0 for s in self.fixed_margin_scale):
            raise ConfigError("fixed_margin_scale entries must be >= 0")

    @property
    def scales_loss(self) -> bool:
        return self.dafa_mode in (LOSS_ONLY, BOTH)

    @property
    def scales_margin(self) -> bool:
        return self.dafa_mode in (MARGIN_ONLY, BOTH)

    def evaluates(self, epoch: int) -> bool:
        """Final epoch always; otherwise every ``eval_every``-th within the last ``eval_last``."""
        if epoch == self.epochs:
            return True
        if self.eval_last is not None and epoch <= self.epochs - self.eval_last:
            return False
        return epoch % self.eval_every == 0

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay_factor ** sum(epoch > e for e in self.lr_decay_epochs)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        if "lambda" in data:
            if "lam" in data:
                raise ConfigError("give either 'lambda' or 'lam', not both")
            data["lam"] = data.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown train keys: {sorted(unknown)}")
        return cls(**data)


class ProbAccumulator:
    """Per-class sums of softmax vectors (and embeddings) over adversarial examples."""

    def __init__(self, num_classes: int):
        self.num_classes = num_classes
        self.prob_sums = np.zeros((num_classes, num_classes))
        self.counts = np.zeros(num_classes, dtype=np.int64)
        self.emb_sums = None

    def add(self, probs: np.ndarray, labels: np.ndarray, embedding: np.ndarray | None = None) -> None:
        np.add.at(self.prob_sums, labels, probs)
        self.counts += np.bincount(labels, minlength=self.num_classes)
        if embedding is not None:
            if self.emb_sums is None:
                self.emb_sums = np.zeros((self.num_classes, embedding.shape[1]))
            np.add.at(self.emb_sums, labels, embedding)

    def _check(self):
        if np.any(self.counts == 0):
            raise EmptyClass(f"class {int(np.flatnonzero(self.counts == 0)[0])} never seen")

    def mean_embeddings(self) -> np.ndarray:
        self._check()
        return self.emb_sums / self.counts[:, None]


def collect_prob_matrix(acc: ProbAccumulator) -> dafa.ClassProbMatrix:
    """Average softmax per true class; rows renormalised against float drift."""
    acc._check()
    p = acc.prob_sums / acc.counts[:, None]
    return dafa.ClassProbMatrix(p / p.sum(axis=1, keepdims=True))


def compute_weights(config: TrainConfig, acc: ProbAccumulator) -> tuple[dafa.ClassWeights, dafa.ClassProbMatrix]:
    if config.variant == EMBEDDING:
        p = dafa.prob_from_embeddings(acc.mean_embeddings())
        w = dafa.weights_basic(p, 1.0, config.lam)
    elif config.variant == EASY_REF:
        p = collect_prob_matrix(acc)
        w = dafa.weights_easy_reference(p, config.lam)
    else:
        p = collect_prob_matrix(acc)
        w = dafa.weights_scaled(p, config.lam)
    return dafa.clip(w, config.clip_K), p


@dataclass
class TrainResult:
    params: nn.MlpParams
    history: list[MetricsRecord]
    weights: dafa.ClassWeights
    prob_matrix: dafa.ClassProbMatrix | None = None
    params_at_tau: nn.MlpParams | None = None
    eval_epochs: list[int] = field(default_factory=list)


def evaluate(params: nn.MlpParams, test_set: LabeledDataset, attack_config: attack.AttackConfig) -> MetricsRecord:
    """Clean and PGD-robust accuracy per class.

    A point counts as robust only if both x and x + delta are classified
    correctly (delta = 0 is always an admissible attack).
    """
    clean_ok = np.empty(len(test_set), dtype=bool)
    robust_ok = np.empty(len(test_set), dtype=bool)
    rng = np.random.default_rng(attack_config.seed)
    for start in range(0, len(test_set), EVAL_CHUNK):
        sl = slice(start, start + EVAL_CHUNK)
        x, y = test_set.points[sl], test_set.labels[sl]
        clean_ok[sl] = nn.predict(params, x) == y
        if attack_config.epsilon > 0:
            delta = attack.pgd(params, x, y, attack_config.epsilon, attack_config, rng)
            robust_ok[sl] = clean_ok[sl] & (nn.predict(params, x + delta) == y)
        else:
            robust_ok[sl] = clean_ok[sl]
    return MetricsRecord.from_correct(test_set.labels, clean_ok, robust_ok, test_set.num_classes)


def _check_data(train_set: LabeledDataset, test_set: LabeledDataset) -> None:
    if train_set.d != test_set.d or train_set.num_classes != test_set.num_classes:
        raise ConfigError("train and test sets differ in dimension or class count")


def train(
    config: TrainConfig,
    train_set: LabeledDataset,
    test_set: LabeledDataset,
    attack_train: attack.AttackConfig | None = None,
    attack_eval: attack.AttackConfig | None = None,
    weights_override: dafa.ClassWeights | None = None,
) -> TrainResult:
    """Run one training job; fully deterministic given ``config.seed``.

    ``weights_override`` replaces the weights computed at the warm-up
    boundary (the probability matrix is still collected).
    """
    _check_data(train_set, test_set)
    c = train_set.num_classes
    objective = nn.KL if config.mode == TRADES else nn.CE
    if attack_train is None:
        attack_train = attack.AttackConfig.training(config.base_epsilon, objective)
    else:
        attack_train = replace(attack_train, objective=objective)
    if attack_eval is None:
        attack_eval = attack.AttackConfig.evaluation(config.base_epsilon)
    if config.mode == PGD and config.scales_margin and config.fixed_margin_scale is None:
        warnings.warn("margin scaling is known to hurt worst-class accuracy under PGD training", RuntimeWarning, stacklevel=2)
    if config.fixed_margin_scale is not None and len(config.fixed_margin_scale) != c:
        raise ConfigError(f"fixed_margin_scale needs {c} entries")

    params = nn.init([train_set.d, *config.hidden, c], config.seed)
    velocity = None
    weights = dafa.ClassWeights.uniform(c)
    prob_matrix = None
    params_at_tau = None
    history, eval_epochs = [], []
    ones = np.ones(c)
    fixed = np.asarray(config.fixed_margin_scale) if config.fixed_margin_scale is not None else None
    n = len(train_set)

    for epoch in range(1, config.epochs + 1):
        post = epoch > config.warmup_tau
        loss_w = weights.w if (post and config.scales_loss) else ones
        if fixed is not None:
            margin_w = fixed
        else:
            margin_w = weights.w if (post and config.scales_margin) else ones
        acc = ProbAccumulator(c) if epoch == config.warmup_tau else None
        lr = config.lr_at(epoch)
        perm = np.random.default_rng([config.seed, epoch]).permutation(n)

        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start : start + config.batch_size]
            xb, yb = train_set.points[idx], train_set.labels[idx]
            m = yb.shape[0]
            rng = np.random.default_rng([config.seed, epoch, b, attack_train.seed])
            radius = config.base_epsilon * margin_w[yb]
            cw = loss_w[yb][:, None]
            if config.mode == TRADES:
                tr_c = nn.forward(params, xb)
                delta = attack.pgd(params, xb, tr_c, radius, attack_train, rng)
                tr_a = nn.forward(params, xb + delta)
                d_kl_c, d_kl_a = nn.kl_logit_grads(tr_c, tr_a)
                dl_c = (cw * nn.ce_logit_grad(tr_c, yb) + config.beta * d_kl_c) / m
                g_c, _ = nn.backward(params, tr_c, dl_c)
                g_a, _ = nn.backward(params, tr_a, config.beta * d_kl_a / m)
                grads = nn.add_grads(g_c, g_a)
            else:
                delta = attack.pgd(params, xb, yb, radius, attack_train, rng)
                tr_a = nn.forward(params, xb + delta)
                grads, _ = nn.backward(params, tr_a, cw * nn.ce_logit_grad(tr_a, yb) / m)
            if acc is not None:
                acc.add(tr_a.probs, yb, tr_a.embedding)
            params, velocity = nn.momentum_step(params, grads, velocity, lr, config.weight_decay, config.momentum)

        if epoch == config.warmup_tau:
            params_at_tau = params
            computed, prob_matrix = compute_weights(config, acc)
            if weights_override is not None:
                weights = weights_override
            elif config.dafa_mode != OFF and fixed is None:
                weights = computed
            log.info("epoch %d: class weights %s", epoch, weights.render())

        if config.evaluates(epoch):
            rng_eval = replace(attack_eval, seed=attack_eval.seed + epoch)
            history.append(evaluate(params, test_set, rng_eval))
            eval_epochs.append(epoch)

    return TrainResult(params, history, weights, prob_matrix, params_at_tau, eval_epochs)
