"""l_inf PGD with per-example radii and best-iterate return."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn

ZERO = "zero"
SMALL_RANDOM = "small_random"
INIT_SCALE = 1e-3


@dataclass(frozen=True)
class AttackConfig:
    """PGD settings.

    ``step_size`` is expressed for a radius of ``epsilon``; an example
    attacked at radius r uses ``step_size * r / epsilon``.
    """

    epsilon: float
    steps: int = 10
    step_size: float | None = None
    init: str = SMALL_RANDOM
    objective: str = nn.CE
    seed: int = 0

    def __post_init__(self):
        if self.step_size is None:
            object.__setattr__(self, "step_size", self.epsilon / 4.0 if self.epsilon > 0 else 1.0)
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.step_size > 0:
            raise ValueError("step_size must be > 0")
        if self.init not in (ZERO, SMALL_RANDOM):
            raise ValueError(f"unknown init {self.init!r}")
        if self.objective not in (nn.CE, nn.KL):
            raise ValueError(f"unknown objective {self.objective!r}")

    @classmethod
    def training(cls, epsilon: float, objective: str = nn.KL, seed: int = 0) -> "AttackConfig":
        """10 steps of radius/4."""
        return cls(epsilon, 10, epsilon / 4.0 if epsilon > 0 else 1.0, SMALL_RANDOM, objective, seed)

    @classmethod
    def evaluation(cls, epsilon: float, seed: int = 0) -> "AttackConfig":
        """20 CE steps of 2.5*radius/20."""
        return cls(epsilon, 20, 2.5 * epsilon / 20 if epsilon > 0 else 1.0, SMALL_RANDOM, nn.CE, seed)


def _objective(params, x, target, kind):
    trace = nn.forward(params, x)
    if kind == nn.CE:
        value = nn.ce_per_example(trace, target)
        dl = nn.ce_logit_grad(trace, target)
    else:
        value = nn.kl_per_example(target, trace)
        _, dl = nn.kl_logit_grads(target, trace)
    return trace, value, dl


def objective_value(params: nn.MlpParams, x: np.ndarray, target, kind: str) -> np.ndarray:
    """Per-example attack objective at ``x`` (CE against labels or KL against a clean trace)."""
    return _objective(params, x, target, kind)[1]


def pgd(
    params: nn.MlpParams,
    x: np.ndarray,
    target,
    radius,
    config: AttackConfig,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Return perturbations ``delta`` with ``|delta_i|_inf <= radius_i``.

    ``target`` is a label vector for the CE objective or the clean
    ForwardTrace for KL.  Each row keeps the iterate with the largest
    objective seen, the starting point included.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[0]
    r = np.broadcast_to(np.asarray(radius, dtype=float), (n,)).copy()
    if np.any(r < 0):
        raise ValueError("radius must be >= 0")
    if not np.any(r > 0):
        return np.zeros_like(x)
    rc = r[:, None]
    step = config.step_size * (rc / config.epsilon if config.epsilon > 0 else 1.0)
    if config.init == SMALL_RANDOM:
        if rng is None:
            rng = np.random.default_rng(config.seed)
        delta = INIT_SCALE * rc * rng.uniform(-1.0, 1.0, size=x.shape)
    else:
        delta = np.zeros_like(x)

    best = delta.copy()
    best_value = np.full(n, -np.inf)
    for t in range(config.steps + 1):
        trace, value, dl = _objective(params, x + delta, target, config.objective)
        better = value > best_value
        best[better] = delta[better]
        best_value = np.where(better, value, best_value)
        if t == config.steps:
            break
        _, g = nn.backward(params, trace, dl, need_params=False)
        delta = np.clip(delta + step * np.sign(g), -rc, rc)
    return best
