"""Distance-aware class weights.

Every ordered pair of classes moves weight from the easier class (larger
p_i(i)) to the harder one; the amount depends on how often the two classes
are confused.  Transfers are equal and opposite, so before clipping the
weights always sum to C * w0.  Exact ties in p_i(i) move nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRow, InvalidMatrix, ZeroEmbedding
from .io import fmt, read_csv_rows, write_csv

ROW_TOL = 1e-6
DEFAULT_CLIP = 0.1
WEIGHTS_SIG = 9


@dataclass(frozen=True)
class ClassProbMatrix:
    """``p[i, j]``: mean softmax mass on class j for examples of true class i."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1] or p.shape[0] < 2:
            raise InvalidMatrix(f"expected a C x C matrix with C >= 2, got shape {p.shape}")
        if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
            raise InvalidMatrix("entries must lie in [0, 1]")
        sums = p.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
        if bad.size:
            i = int(bad[0])
            raise InvalidMatrix(f"row {i} sums to {sums[i]:.9g}, expected 1")
        object.__setattr__(self, "p", p)

    @property
    def num_classes(self) -> int:
        return self.p.shape[0]

    @property
    def difficulty(self) -> np.ndarray:
        """p_i(i); lower means harder."""
        return np.diag(self.p).copy()

    def to_csv(self, path):
        return write_csv(path, None, self.p.tolist(), 17)

    @classmethod
    def from_csv(cls, path) -> "ClassProbMatrix":
        rows = read_csv_rows(path)
        width = len(rows[0])
        for i, row in enumerate(rows):
            if len(row) != width:
                raise InvalidMatrix(f"row {i} has {len(row)} entries, expected {width}")
        try:
            p = np.array([[float(v) for v in row] for row in rows])
        except ValueError as exc:
            raise InvalidMatrix(f"non-numeric entry: {exc}") from None
        return cls(p)


@dataclass(frozen=True)
class ClassWeights:
    w: np.ndarray
    lambda_used: float
    clipped: bool = False

    @property
    def num_classes(self) -> int:
        return self.w.shape[0]

    @classmethod
    def uniform(cls, num_classes: int, w0: float = 1.0) -> "ClassWeights":
        return cls(np.full(num_classes, float(w0)), 0.0, False)

    def to_csv(self, path):
        return write_csv(path, ("class", "weight"), [(i, float(v)) for i, v in enumerate(self.w)], WEIGHTS_SIG)

    def render(self) -> str:
        return ", ".join(fmt(float(v), 6) for v in self.w)


def _as_matrix(p) -> np.ndarray:
    return p.p if isinstance(p, ClassProbMatrix) else ClassProbMatrix(p).p


def _pair_masks(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    diag = np.diag(p)
    harder = diag[:, None] < diag[None, :]  # [i, j]: i strictly harder than j
    easier = diag[:, None] > diag[None, :]
    return harder, easier


def _finish(p: np.ndarray, gain: np.ndarray, loss: np.ndarray, lam: float, w0: float) -> ClassWeights:
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if not w0 > 0:
        raise ValueError("w0 must be > 0")
    harder, easier = _pair_masks(p)
    delta = np.where(harder, gain, 0.0).sum(axis=1) - np.where(easier, loss, 0.0).sum(axis=1)
    return ClassWeights(w0 + lam * delta, float(lam), False)


def weights_basic(p, w0: float = 1.0, lam: float = 1.0) -> ClassWeights:
    """W_i = w0 + lam * sum_j [i harder] p_i(j) - [i easier] p_j(i).

    ``lam = 1`` is the unscaled rule.
    """
    m = _as_matrix(p)
    return _finish(m, m, m.T, lam, w0)


def weights_scaled(p, lam: float = 1.0, w0: float = 1.0) -> ClassWeights:
    """W_i = w0 + lam * sum_j [i harder] p_i(j) p_j(j) - [i easier] p_j(i) p_i(i)."""
    m = _as_matrix(p)
    diag = np.diag(m)
    return _finish(m, m * diag[None, :], m.T * diag[:, None], lam, w0)


def weights_easy_reference(p, lam: float = 1.0, w0: float = 1.0) -> ClassWeights:
    """Like ``weights_basic`` but the transfer uses the easy class's row:
    W_i = w0 + lam * sum_j [i harder] p_j(i) - [i easier] p_i(j).
    """
    m = _as_matrix(p)
    return _finish(m, m.T, m, lam, w0)


def clip(weights: ClassWeights, K: float = DEFAULT_CLIP) -> ClassWeights:
    if not K > 0:
        raise ValueError("K must be > 0")
    w = np.maximum(weights.w, K)
    return ClassWeights(w, weights.lambda_used, bool(weights.clipped or np.any(w != weights.w)))


def prob_from_embeddings(embeddings) -> ClassProbMatrix:
    """Row-normalised cosine similarities of per-class mean embeddings.

    Negative similarities are floored at zero before normalising.
    """
    e = np.atleast_2d(np.asarray(embeddings, dtype=float))
    norms = np.linalg.norm(e, axis=1)
    if np.any(norms == 0):
        raise ZeroEmbedding(f"class {int(np.flatnonzero(norms == 0)[0])} has a zero embedding")
    u = e / norms[:, None]
    s = np.maximum(u @ u.T, 0.0)
    sums = s.sum(axis=1)
    if np.any(sums == 0):
        raise DegenerateRow(f"row {int(np.flatnonzero(sums == 0)[0])} has no positive similarity")
    p = s / sums[:, None]
    return ClassProbMatrix(np.clip(p, 0.0, 1.0))
