"""Seeded multi-class isotropic Gaussian mixtures.

Normal deviates come from Box-Muller applied to raw 64-bit Philox output,
and shuffles sort on raw Philox keys, so datasets only depend on the Philox
counter stream and not on numpy's higher-level sampling algorithms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidGaps
from .io import atomic_write_text, fmt

CSV_SIG = 9

_TRAIN, _TEST = 0, 1
_SHUFFLE_STREAM = 1 << 20


@dataclass(frozen=True)
class MixtureSpec:
    """Class ``c`` is N(means[c], stds[c]^2 I); every class gets ``samples_per_class`` points."""

    means: np.ndarray
    stds: np.ndarray
    samples_per_class: int

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        stds = np.asarray(self.stds, dtype=float).reshape(-1)
        if means.shape[0] < 2:
            raise ValueError("a mixture needs at least 2 classes")
        if stds.shape[0] != means.shape[0]:
            raise ValueError("one std per class required")
        if np.any(stds <= 0):
            raise ValueError("all stds must be positive")
        if self.samples_per_class < 0:
            raise ValueError("samples_per_class must be >= 0")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def num_classes(self) -> int:
        return self.means.shape[0]

    @property
    def classes(self) -> list[tuple[np.ndarray, float]]:
        return [(m, float(s)) for m, s in zip(self.means, self.stds)]

    def centroid_distances(self) -> np.ndarray:
        diff = self.means[:, None, :] - self.means[None, :, :]
        return np.sqrt((diff**2).sum(-1))


@dataclass(frozen=True)
class LabeledDataset:
    points: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def to_csv(self, path):
        lines = [",".join(["y"] + [f"x{k}" for k in range(self.d)])]
        for y, row in zip(self.labels, self.points):
            lines.append(",".join([str(int(y))] + [fmt(v, CSV_SIG) for v in row]))
        return atomic_write_text(path, "\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path, num_classes: int | None = None) -> "LabeledDataset":
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        labels = raw[:, 0].astype(np.int64)
        c = num_classes if num_classes is not None else int(labels.max()) + 1
        return cls(raw[:, 1:].copy(), labels, c)


def _philox(seed: int, *stream: int) -> np.random.Philox:
    return np.random.Philox(np.random.SeedSequence([int(seed), *stream]))


def _uniform53(bitgen: np.random.Philox, n: int) -> np.ndarray:
    # (0, 1] so log() below never sees zero
    raw = bitgen.random_raw(n)
    return ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53


def box_muller(seed: int, n: int, *stream: int) -> np.ndarray:
    """``n`` standard normal deviates from a Philox stream keyed by (seed, *stream)."""
    bitgen = _philox(seed, *stream)
    pairs = (n + 1) // 2
    u1 = _uniform53(bitgen, pairs)
    u2 = _uniform53(bitgen, pairs)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(2.0 * math.pi * u2)
    z[1::2] = r * np.sin(2.0 * math.pi * u2)
    return z[:n]


def _permutation(seed: int, n: int, *stream: int) -> np.ndarray:
    keys = _philox(seed, *stream).random_raw(n)
    return np.argsort(keys, kind="stable")


def sample(spec: MixtureSpec, seed: int, split: int = _TRAIN) -> LabeledDataset:
    """Draw a balanced dataset; rows are class-blocked, then shuffled with the same seed."""
    n_per, d, c = spec.samples_per_class, spec.d, spec.num_classes
    blocks = []
    for k, (mean, std) in enumerate(spec.classes):
        z = box_muller(seed, n_per * d, split, k).reshape(n_per, d)
        blocks.append(mean + std * z)
    points = np.concatenate(blocks) if n_per else np.empty((0, d))
    labels = np.repeat(np.arange(c, dtype=np.int64), n_per)
    perm = _permutation(seed, len(labels), split, _SHUFFLE_STREAM)
    return LabeledDataset(points[perm], labels[perm], c)


def fairness_spec(
    d: int = 10,
    eta: float = 1.0,
    near_gap: float = 1.2,
    far_gap: float = 3.0,
    sigma_hard: float = 1.3,
    samples_per_class: int = 2000,
    std_easy: float = 1.0,
) -> MixtureSpec:
    """Four classes: hard class 0 at eta*1, class 1 near_gap away along e0,
    classes 2 and 3 far_gap away along e1 and e2.
    """
    if not (near_gap > 0 and far_gap >= near_gap):
        raise InvalidGaps(f"need far_gap >= near_gap > 0, got near={near_gap}, far={far_gap}")
    if d < 3:
        raise InvalidGaps("the 4-class preset needs d >= 3")
    if sigma_hard < std_easy:
        raise InvalidGaps("sigma_hard must be >= the easy-class std")
    center = np.full(d, float(eta))
    means = np.tile(center, (4, 1))
    for k, gap in enumerate((near_gap, far_gap, far_gap)):
        means[k + 1, k] += gap
    return MixtureSpec(means, np.array([sigma_hard, std_easy, std_easy, std_easy]), samples_per_class)


def preset_fairness(
    d: int = 10,
    eta: float = 1.0,
    near_gap: float = 1.2,
    far_gap: float = 3.0,
    sigma_hard: float = 1.3,
    samples_per_class: int = 2000,
    seed: int = 0,
    std_easy: float = 1.0,
) -> tuple[MixtureSpec, LabeledDataset, LabeledDataset]:
    """Fairness preset plus train/test splits drawn from disjoint Philox streams."""
    spec = fairness_spec(d, eta, near_gap, far_gap, sigma_hard, samples_per_class, std_easy)
    return spec, sample(spec, seed, _TRAIN), sample(spec, seed, _TEST)


def pair_spec(d: int, gap: float, std_a: float = 1.0, std_b: float = 1.0, samples_per_class: int = 2000) -> MixtureSpec:
    """Two classes ``gap`` apart along e0, centred on the origin."""
    if not gap > 0:
        raise InvalidGaps(f"gap must be positive, got {gap}")
    means = np.zeros((2, d))
    means[0, 0] = -gap / 2.0
    means[1, 0] = gap / 2.0
    return MixtureSpec(means, np.array([std_a, std_b]), samples_per_class)


def preset_pair(
    d: int = 10,
    gap: float = 1.2,
    std_a: float = 1.0,
    std_b: float = 1.0,
    samples_per_class: int = 2000,
    seed: int = 0,
) -> tuple[MixtureSpec, LabeledDataset, LabeledDataset]:
    spec = pair_spec(d, gap, std_a, std_b, samples_per_class)
    return spec, sample(spec, seed, _TRAIN), sample(spec, seed, _TEST)
