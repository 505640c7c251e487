"""Closed-form error analysis of the two-class Gaussian task.

Class +1 is drawn from N(eta*1, sigma^2 I) and class -1 from
N(-alpha*eta*1, I), optionally translated by a constant vector.  The
optimal linear classifier has w = 1/sqrt(d) in every coordinate; its bias is
the stationary point of the summed per-class error.  Everything here is
evaluated under l_inf perturbations, where a linear model loses exactly
eps*||w||_1 of margin.

Formulas are evaluated in the "centred" frame (class means at +-g per
coordinate).  ``optimal_classifier`` maps the result back to the task's own
coordinates.  The per-class z-scores are computed in a rationalised form that
is exact at sigma = 1 and free of the 1/(sigma^2 - 1) cancellation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import InvalidMargins, InvalidOrder, InvalidSigma, InvalidTask, NonPositiveMargin
from .io import write_csv

STANDARD = "standard"
ADVERSARIAL = "adversarial"
SETTINGS = (STANDARD, ADVERSARIAL)

TOL_SIGMA = 1e-9
COROLLARY1_RATIO = 10.0
CSV_SIG = 12


@dataclass(frozen=True)
class BinaryTaskSpec:
    """Parameters of the analytic binary task.

    ``shift`` translates both class means by the same vector (length d) and
    exists to exercise translation invariance; it defaults to zero.
    """

    d: int
    eta: float
    sigma: float
    alpha: float = 1.0
    epsilon: float = 0.0
    shift: tuple[float, ...] | None = None

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise InvalidTask(f"d must be a positive integer, got {self.d}")
        if not self.eta > 0:
            raise InvalidTask(f"eta must be positive, got {self.eta}")
        if not self.alpha >= 1:
            raise InvalidTask(f"alpha must be >= 1, got {self.alpha}")
        if not self.epsilon >= 0:
            raise InvalidTask(f"epsilon must be >= 0, got {self.epsilon}")
        if not self.sigma >= 1 - TOL_SIGMA:
            raise InvalidSigma(f"sigma must be >= 1, got {self.sigma}")
        if self.shift is not None and len(self.shift) != self.d:
            raise InvalidTask("shift must have length d")

    @property
    def degenerate(self) -> bool:
        return abs(self.sigma - 1.0) <= TOL_SIGMA

    def offset(self) -> np.ndarray:
        if self.shift is None:
            return np.zeros(self.d)
        return np.asarray(self.shift, dtype=float)

    def mean(self, cls: int) -> np.ndarray:
        base = self.eta if cls == 1 else -self.alpha * self.eta
        return np.full(self.d, base) + self.offset()

    def std(self, cls: int) -> float:
        return float(self.sigma) if cls == 1 else 1.0

    def with_alpha(self, alpha: float) -> "BinaryTaskSpec":
        return BinaryTaskSpec(self.d, self.eta, self.sigma, alpha, self.epsilon, self.shift)


@dataclass(frozen=True)
class ClosedFormContext:
    A: float
    g: float
    h: float


@dataclass(frozen=True)
class LinearClassifier:
    w: np.ndarray
    b: float

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))

    def score(self, x: np.ndarray) -> np.ndarray:
        return x @ self.w + self.b


class Corollary1Result(NamedTuple):
    holds: bool
    gap_alpha1: float
    gap_alpha2: float


class Theorem3Errors(NamedTuple):
    std_err_pos: float
    std_err_neg: float
    rob_err_pos: float
    rob_err_neg: float


class Corollary2Result(NamedTuple):
    holds: bool
    lhs: float
    rhs: float


class ScanRow(NamedTuple):
    alpha: float
    err_std_pos: float
    err_rob_pos: float
    disparity_std: float
    disparity_rob: float


def _check_setting(setting: str) -> None:
    if setting not in SETTINGS:
        raise ValueError(f"setting must be one of {SETTINGS}, got {setting!r}")


def _check_class(cls: int) -> None:
    if cls not in (1, -1):
        raise ValueError(f"class must be +1 or -1, got {cls!r}")


def margin(task: BinaryTaskSpec, setting: str) -> float:
    """Per-coordinate half distance between the (perturbed) centred means."""
    _check_setting(setting)
    g = (1.0 + task.alpha) / 2.0 * task.eta
    if setting == ADVERSARIAL:
        g -= task.epsilon
        if g <= 0:
            raise NonPositiveMargin(
                f"g = {g:.6g} <= 0: perturbed classes overlap (alpha={task.alpha}, eps={task.epsilon})"
            )
    return g


def context(task: BinaryTaskSpec, setting: str) -> ClosedFormContext:
    if task.degenerate:
        raise InvalidSigma("A and h are undefined at sigma = 1")
    s2 = task.sigma**2 - 1.0
    return ClosedFormContext(
        A=2.0 * math.sqrt(task.d) * task.sigma / s2,
        g=margin(task, setting),
        h=2.0 * task.sigma**2 * math.log(task.sigma) / s2,
    )


def _z_scores(d: int, sigma: float, g: float) -> tuple[float, float]:
    # z+ = -A g + sqrt((A/sigma)^2 g^2 + 2 log(sigma)/(sigma^2-1)), rationalised;
    # likewise z- = (A/sigma) g - sqrt(A^2 g^2 + h).
    log_s = math.log(sigma)
    root = math.sqrt(4.0 * d * g * g + 2.0 * (sigma * sigma - 1.0) * log_s)
    sd = math.sqrt(d)
    z_pos = (2.0 * log_s - 4.0 * d * g * g) / (2.0 * sd * sigma * g + root)
    z_neg = -(4.0 * d * g * g + 2.0 * sigma * sigma * log_s) / (2.0 * sd * g + sigma * root)
    return z_pos, z_neg


def optimal_bias(task: BinaryTaskSpec, setting: str) -> float:
    """Bias of the optimal classifier in the centred frame.

    Equals ((s^2+1)/(s^2-1)) sqrt(d) g - s sqrt(4 d g^2/(s^2-1)^2 + 2 log s/(s^2-1))
    with s = sigma, and 0 in the equal-variance limit.
    """
    g = margin(task, setting)
    if task.degenerate:
        return 0.0
    z_pos, _ = _z_scores(task.d, task.sigma, g)
    return -task.sigma * z_pos - math.sqrt(task.d) * g


def optimal_bias_literal(task: BinaryTaskSpec, setting: str) -> float:
    """Direct transcription of the bias formula (unstable as sigma -> 1)."""
    g = margin(task, setting)
    s, d = task.sigma, task.d
    s2 = s * s - 1.0
    return (s * s + 1.0) / s2 * math.sqrt(d) * g - s * math.sqrt(
        4.0 / s2**2 * d * g * g + 2.0 * math.log(s) / s2
    )


def combined_error(task: BinaryTaskSpec, setting: str, b: float) -> float:
    """R(+1) + R(-1) for w = 1/sqrt(d) and centred-frame bias ``b``."""
    g = margin(task, setting)
    sg = math.sqrt(task.d) * g
    return float(ndtr(-(sg + b) / task.sigma) + ndtr(b - sg))


def class_error(task: BinaryTaskSpec, setting: str, cls: int) -> float:
    """Error of the optimal (standard or robust) classifier on one class."""
    _check_class(cls)
    g = margin(task, setting)
    if task.degenerate:
        z = -math.sqrt(task.d) * g
    else:
        z_pos, z_neg = _z_scores(task.d, task.sigma, g)
        z = z_pos if cls == 1 else z_neg
    return float(ndtr(z))


def class_error_literal(task: BinaryTaskSpec, setting: str, cls: int) -> float:
    """Class error from the unsimplified A, g, h expressions."""
    _check_class(cls)
    ctx = context(task, setting)
    A, g, h, s = ctx.A, ctx.g, ctx.h, task.sigma
    if cls == 1:
        z = -A * g + math.sqrt((A / s) ** 2 * g * g + 2.0 * math.log(s) / (s * s - 1.0))
    else:
        z = (A / s) * g - math.sqrt(A * A * g * g + h)
    return float(ndtr(z))


def disparity(task: BinaryTaskSpec, setting: str) -> float:
    return class_error(task, setting, 1) - class_error(task, setting, -1)


def optimal_classifier(task: BinaryTaskSpec, setting: str) -> LinearClassifier:
    """Optimal classifier expressed in the task's own coordinates."""
    b = optimal_bias(task, setting)
    w = np.full(task.d, 1.0 / math.sqrt(task.d))
    midpoint = (task.mean(1) + task.mean(-1)) / 2.0
    return LinearClassifier(w=w, b=b - float(w @ midpoint))


def linear_errors(task: BinaryTaskSpec, clf: LinearClassifier, epsilon: float = 0.0) -> tuple[float, float]:
    """Exact per-class errors (class +1, class -1) of any linear classifier.

    ``epsilon`` is the l_inf attack radius; 0 gives standard errors.
    """
    wn2 = float(np.linalg.norm(clf.w))
    loss = epsilon * float(np.abs(clf.w).sum())
    m_pos = float(clf.w @ task.mean(1)) + clf.b
    m_neg = float(clf.w @ task.mean(-1)) + clf.b
    err_pos = ndtr((loss - m_pos) / (task.std(1) * wn2))
    err_neg = ndtr((loss + m_neg) / (task.std(-1) * wn2))
    return float(err_pos), float(err_neg)


def mc_error(
    task: BinaryTaskSpec,
    clf: LinearClassifier,
    setting: str,
    cls: int,
    n_samples: int,
    seed: int,
    chunk: int = 200_000,
) -> tuple[float, float]:
    """Monte Carlo estimate of a per-class error and its binomial standard error.

    Samples come from the task distribution itself; the robust error counts
    points with y*(w.x + b) < eps*||w||_1, the exact worst case of an l_inf
    attack on a linear model.  Chunk ``k`` draws from its own generator keyed
    by (seed, k), so the estimate does not depend on how chunks are scheduled.
    """
    _check_setting(setting)
    _check_class(cls)
    if n_samples < 10_000:
        raise ValueError("n_samples must be >= 1e4")
    eps = task.epsilon if setting == ADVERSARIAL else 0.0
    threshold = eps * float(np.abs(clf.w).sum())
    mean, std = task.mean(cls), task.std(cls)
    errors = 0
    for k, start in enumerate(range(0, n_samples, chunk)):
        n = min(chunk, n_samples - start)
        rng = np.random.default_rng([seed, k])
        x = mean + std * rng.standard_normal((n, task.d))
        errors += int(np.count_nonzero(cls * clf.score(x) < threshold))
    p = errors / n_samples
    return p, math.sqrt(max(p * (1.0 - p), 0.0) / n_samples)


def corollary1_gap(task: BinaryTaskSpec, alpha: float) -> float:
    """D(R_rob(f_rob)) - D(R_nat(f_nat)) at a given alpha."""
    t = task.with_alpha(alpha)
    return disparity(t, ADVERSARIAL) - disparity(t, STANDARD)


def corollary1_check(task: BinaryTaskSpec, alpha1: float, alpha2: float) -> Corollary1Result:
    """Whether the robust-minus-standard disparity gap shrinks from alpha1 to alpha2.

    The result only has theoretical backing when d*g^2 >> sigma; a warning is
    emitted when d*g^2 < 10*sigma in either setting.
    """
    if not alpha1 < alpha2:
        raise InvalidOrder(f"alpha1 must be < alpha2, got {alpha1} >= {alpha2}")
    for a in (alpha1, alpha2):
        t = task.with_alpha(a)
        for setting in SETTINGS:
            g = margin(t, setting)
            if t.d * g * g < COROLLARY1_RATIO * t.sigma:
                warnings.warn(
                    f"d*g^2 = {t.d * g * g:.4g} < {COROLLARY1_RATIO:g}*sigma at alpha={a} ({setting})",
                    RuntimeWarning,
                    stacklevel=2,
                )
    gap1 = corollary1_gap(task, alpha1)
    gap2 = corollary1_gap(task, alpha2)
    return Corollary1Result(gap2 < gap1, gap1, gap2)


def _check_theorem3(eta: float, eps_pos: float, eps_neg: float) -> None:
    if not 0 < eps_neg <= eps_pos < eta:
        raise InvalidMargins(
            f"need 0 < eps_neg <= eps_pos < eta, got eps_neg={eps_neg}, eps_pos={eps_pos}, eta={eta}"
        )


def asymmetric_bias(d: int, eps_pos: float, eps_neg: float) -> float:
    """Bias of the classifier robust-trained with per-class radii (sigma = 1, alpha = 1).

    The shifted centroids are +-(eta - eps_y); the boundary sits at their
    midpoint, (eps_neg - eps_pos)/2 per coordinate.
    """
    return -math.sqrt(d) * (eps_neg - eps_pos) / 2.0


def theorem3_classifiers(d: int, eta: float, eps_pos: float, eps_neg: float):
    """(standard-trained, asymmetric robust-trained) classifiers for the equal-variance task."""
    _check_theorem3(eta, eps_pos, eps_neg)
    w = np.full(d, 1.0 / math.sqrt(d))
    return LinearClassifier(w, 0.0), LinearClassifier(w, asymmetric_bias(d, eps_pos, eps_neg))


def theorem3_errors(d: int, eta: float, eps_pos: float, eps_neg: float) -> Theorem3Errors:
    """Clean per-class errors of the standard- and asymmetric-robust-trained classifiers."""
    f_nat, f_rob = theorem3_classifiers(d, eta, eps_pos, eps_neg)
    task = BinaryTaskSpec(d, eta, 1.0)
    return Theorem3Errors(*linear_errors(task, f_nat), *linear_errors(task, f_rob))


def corollary2_check(d: int, eta: float, eps_pos: float, eps_neg: float, test_eps: float) -> Corollary2Result:
    """Compare the robust-error increase of each class against symmetric training.

    lhs is the class -1 increase, rhs the class +1 increase, both at test
    radius ``test_eps``; the symmetric-trained classifier has b = 0.
    """
    if not 0 < test_eps < eta:
        raise InvalidMargins(f"need 0 < test_eps < eta, got {test_eps}")
    f_sym, f_rob = theorem3_classifiers(d, eta, eps_pos, eps_neg)
    task = BinaryTaskSpec(d, eta, 1.0)
    rob_pos, rob_neg = linear_errors(task, f_rob, test_eps)
    sym_pos, sym_neg = linear_errors(task, f_sym, test_eps)
    lhs = rob_neg - sym_neg
    rhs = rob_pos - sym_pos
    return Corollary2Result(lhs > rhs, lhs, rhs)


def scan_alpha(task: BinaryTaskSpec, alpha_grid: Sequence[float]) -> list[ScanRow]:
    grid = [float(a) for a in alpha_grid]
    if any(a < 1 for a in grid):
        raise InvalidTask("alpha grid values must be >= 1")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise InvalidTask("alpha grid must be sorted ascending")
    rows = []
    for a in grid:
        t = task.with_alpha(a)
        rows.append(
            ScanRow(
                a,
                class_error(t, STANDARD, 1),
                class_error(t, ADVERSARIAL, 1),
                disparity(t, STANDARD),
                disparity(t, ADVERSARIAL),
            )
        )
    return rows


def write_scan_csv(rows: Sequence[ScanRow], path):
    return write_csv(path, ScanRow._fields, rows, CSV_SIG)


def write_theorem3_csv(errors: Theorem3Errors, path):
    return write_csv(path, Theorem3Errors._fields, [errors], CSV_SIG)
