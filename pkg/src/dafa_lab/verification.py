"""Closed-form versus oracle checks for the binary Gaussian theory.

Used by ``dafa-lab theory verify`` and the acceptance suite.  Every check
returns a ``Check`` row; nothing here raises on a failed comparison.
"""

from __future__ import annotations

import math
import warnings
from typing import NamedTuple

import numpy as np

from . import theory as T

DEFAULT_SAMPLES = 1_000_000
DEFAULT_TOL = 0.005
N_RANDOM_TASKS = 20
N_BIAS_TASKS = 10
FD_STEP = 1e-5
DERIV_TOL = 1e-6
GRID_TOL = 1e-3


class Check(NamedTuple):
    name: str
    passed: bool
    detail: str


def random_task(rng: np.random.Generator) -> T.BinaryTaskSpec:
    """d in [2, 32], sigma in (1, 3], alpha in [1, 3], eps in [0, 0.9 eta]."""
    d = int(rng.integers(2, 33))
    eta = float(rng.uniform(0.5, 2.0))
    sigma = 3.0 - 2.0 * float(rng.random())  # random() is in [0, 1)
    alpha = float(rng.uniform(1.0, 3.0))
    eps = float(rng.uniform(0.0, 0.9 * eta))
    return T.BinaryTaskSpec(d, eta, sigma, alpha, eps)


def mc_count(task, clf, setting, cls, n_samples, seed) -> tuple[float, float]:
    """Same estimator as ``theory.mc_error`` without its sample-size floor."""
    if n_samples >= 10_000:
        return T.mc_error(task, clf, setting, cls, n_samples, seed)
    eps = task.epsilon if setting == T.ADVERSARIAL else 0.0
    rng = np.random.default_rng([seed, 0])
    x = task.mean(cls) + task.std(cls) * rng.standard_normal((n_samples, task.d))
    p = float(np.count_nonzero(cls * clf.score(x) < eps * float(np.abs(clf.w).sum()))) / n_samples
    return p, math.sqrt(p * (1.0 - p) / n_samples)


def mc_bound(tol: float, se: float, widen: bool) -> float:
    return max(tol, 3.0 * se) if widen else tol


def theorem1_checks(samples: int, seed: int, tol: float, widen: bool, n_tasks: int = N_RANDOM_TASKS) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_tasks):
        task = random_task(rng)
        clf = T.optimal_classifier(task, T.ADVERSARIAL)
        for cls in (1, -1):
            exact = T.class_error(task, T.ADVERSARIAL, cls)
            est, se = mc_count(task, clf, T.ADVERSARIAL, cls, samples, seed * 1000 + 2 * k + (cls < 0))
            bound = mc_bound(tol, se, widen)
            diff = abs(exact - est)
            out.append(
                Check(
                    f"theorem1 task{k:02d} class{cls:+d}",
                    diff <= bound,
                    f"d={task.d} sigma={task.sigma:.3f} alpha={task.alpha:.3f} eps={task.epsilon:.3f} "
                    f"closed={exact:.6f} mc={est:.6f} diff={diff:.2e} bound={bound:.2e}",
                )
            )
    return out


def monotonicity_check(d=4, eta=1.0, sigma=2.0, epsilon=0.3) -> Check:
    grid = [round(1.0 + 0.1 * k, 10) for k in range(21)]
    rows = T.scan_alpha(T.BinaryTaskSpec(d, eta, sigma, 1.0, epsilon), grid)
    err = [r.err_rob_pos for r in rows]
    disp = [r.disparity_rob for r in rows]
    ok = all(b < a for a, b in zip(err, err[1:])) and all(b < a for a, b in zip(disp, disp[1:]))
    return Check("theorem2 monotone in alpha", ok, f"err_rob(+1) {err[0]:.5f}->{err[-1]:.5f}, disparity {disp[0]:.5f}->{disp[-1]:.5f}")


def grid_argmin(task: T.BinaryTaskSpec, setting: str, half_width: float = 50.0) -> float:
    """Two-stage grid search over the centred bias (step 1e-2, then 1e-5)."""
    coarse = np.arange(-half_width, half_width, 1e-2)
    f = np.vectorize(lambda b: T.combined_error(task, setting, b))
    b0 = float(coarse[np.argmin(f(coarse))])
    fine = np.arange(b0 - 2e-2, b0 + 2e-2, 1e-5)
    return float(fine[np.argmin(f(fine))])


def bias_checks(seed: int, n_tasks: int = N_BIAS_TASKS) -> list[Check]:
    rng = np.random.default_rng([seed, 7])
    out = []
    for k in range(n_tasks):
        task = random_task(rng)
        b = T.optimal_bias(task, T.ADVERSARIAL)
        deriv = (T.combined_error(task, T.ADVERSARIAL, b + FD_STEP) - T.combined_error(task, T.ADVERSARIAL, b - FD_STEP)) / (2 * FD_STEP)
        b_grid = grid_argmin(task, T.ADVERSARIAL)
        ok = abs(deriv) <= DERIV_TOL and abs(b_grid - b) <= GRID_TOL
        out.append(Check(f"optimal bias task{k:02d}", ok, f"b*={b:.6f} grid={b_grid:.6f} dE/db={deriv:.2e}"))
    return out


def corollary1_check() -> Check:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = T.corollary1_check(T.BinaryTaskSpec(16, 1.0, 2.0, 1.0, 0.3), 1.5, 2.5)
    return Check("corollary1 gap shrinks", res.holds, f"gap(1.5)={res.gap_alpha1:.6f} gap(2.5)={res.gap_alpha2:.3e}")


def theorem3_checks(samples: int, seed: int, tol: float, widen: bool, d=4, eta=1.0, eps_pos=0.4, eps_neg=0.2, test_eps=0.3) -> list[Check]:
    e = T.theorem3_errors(d, eta, eps_pos, eps_neg)
    out = [
        Check(
            "theorem3 std error shifts",
            e.rob_err_pos < e.std_err_pos and e.rob_err_neg > e.std_err_neg,
            f"std=({e.std_err_pos:.6f}, {e.std_err_neg:.6f}) rob=({e.rob_err_pos:.6f}, {e.rob_err_neg:.6f})",
        )
    ]
    c2 = T.corollary2_check(d, eta, eps_pos, eps_neg, test_eps)
    out.append(Check("corollary2 inequality", c2.holds, f"lhs={c2.lhs:.6f} rhs={c2.rhs:.6f}"))
    task = T.BinaryTaskSpec(d, eta, 1.0)
    _, f_rob = T.theorem3_classifiers(d, eta, eps_pos, eps_neg)
    for cls, exact in ((1, e.rob_err_pos), (-1, e.rob_err_neg)):
        est, se = mc_count(task, f_rob, T.STANDARD, cls, samples, seed * 1000 + 900 + (cls < 0))
        bound = mc_bound(tol, se, widen)
        out.append(
            Check(f"theorem3 mc class{cls:+d}", abs(exact - est) <= bound, f"closed={exact:.6f} mc={est:.6f} bound={bound:.2e}")
        )
    return out


def battery(samples: int = DEFAULT_SAMPLES, seed: int = 0, tol: float = DEFAULT_TOL) -> tuple[list[Check], bool]:
    """Run every check.  Returns (checks, widened).

    Below the default sample size the MC tolerance widens to
    max(tol, 3 * standard error); at or above it ``tol`` is used as given.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    widen = samples < DEFAULT_SAMPLES
    checks = theorem1_checks(samples, seed, tol, widen)
    checks.append(monotonicity_check())
    checks += bias_checks(seed)
    checks.append(corollary1_check())
    checks += theorem3_checks(samples, seed, tol, widen)
    return checks, widen
