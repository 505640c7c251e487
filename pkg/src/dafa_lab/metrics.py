"""Class-wise accuracy records, the rho fairness score, and feature-space geometry."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, EmptyClass, ZeroBaseline
from .io import write_csv

METRICS_SIG = 9


@dataclass(frozen=True)
class MetricsRecord:
    """Per-class accuracies in percent plus their aggregates.

    Worst-class ties resolve to the lowest class index.
    """

    clean: np.ndarray
    robust: np.ndarray

    @classmethod
    def from_correct(cls, labels, clean_correct, robust_correct, num_classes: int) -> "MetricsRecord":
        labels = np.asarray(labels)
        counts = np.bincount(labels, minlength=num_classes)
        if np.any(counts == 0):
            raise EmptyClass(f"class {int(np.flatnonzero(counts == 0)[0])} absent from evaluation set")
        clean = np.bincount(labels, weights=np.asarray(clean_correct, float), minlength=num_classes)
        robust = np.bincount(labels, weights=np.asarray(robust_correct, float), minlength=num_classes)
        return cls(100.0 * clean / counts, 100.0 * robust / counts)

    @property
    def num_classes(self) -> int:
        return self.clean.shape[0]

    @property
    def avg_clean(self) -> float:
        return float(self.clean.mean())

    @property
    def avg_robust(self) -> float:
        return float(self.robust.mean())

    @property
    def worst_clean(self) -> float:
        return float(self.clean.min())

    @property
    def worst_robust(self) -> float:
        return float(self.robust.min())

    @property
    def worst_class(self) -> int:
        """Class with the lowest robust accuracy."""
        return int(np.argmin(self.robust))

    def summary(self) -> dict:
        return {
            "avg_clean": self.avg_clean,
            "worst_clean": self.worst_clean,
            "avg_robust": self.avg_robust,
            "worst_robust": self.worst_robust,
            "worst_class": self.worst_class,
        }


def mean_record(records) -> MetricsRecord:
    """Class-wise mean over several records (e.g. the final few epochs)."""
    records = list(records)
    return MetricsRecord(
        np.mean([r.clean for r in records], axis=0),
        np.mean([r.robust for r in records], axis=0),
    )


def metrics_rows(history, epochs=None) -> list[tuple]:
    """Rows for the ``epoch,class,clean_acc,robust_acc`` CSV.

    ``epochs`` labels each record; defaults to 1, 2, ...
    """
    epochs = range(1, len(history) + 1) if epochs is None else epochs
    rows = []
    for epoch, rec in zip(epochs, history):
        for c in range(rec.num_classes):
            rows.append((epoch, c, float(rec.clean[c]), float(rec.robust[c])))
        rows.append((epoch, "AVG", rec.avg_clean, rec.avg_robust))
        rows.append((epoch, "WORST", rec.worst_clean, rec.worst_robust))
    return rows


def write_metrics_csv(history, path, epochs=None):
    return write_csv(path, ("epoch", "class", "clean_acc", "robust_acc"), metrics_rows(history, epochs), METRICS_SIG)


def rho(baseline: tuple[float, float], delta: tuple[float, float]) -> float:
    """Relative worst-class gain minus relative average change.

    Both arguments are ``(average, worst)`` accuracies.
    """
    base_avg, base_worst = baseline
    new_avg, new_worst = delta
    if base_avg <= 0 or base_worst <= 0:
        raise ZeroBaseline(f"baseline accuracies must be positive, got {baseline}")
    return (new_worst - base_worst) / base_worst - (new_avg - base_avg) / base_avg


@dataclass(frozen=True)
class ClassGeometry:
    centroids: np.ndarray
    variances: np.ndarray
    distances: np.ndarray

    @property
    def avg_distance(self) -> np.ndarray:
        """Mean distance from each class centroid to every other class centroid."""
        c = self.distances.shape[0]
        return self.distances.sum(axis=1) / (c - 1)


def class_geometry(features, labels, num_classes: int | None = None) -> ClassGeometry:
    """Centroids, within-class variances and centroid distances of a feature set.

    The variance of class c is the mean squared Euclidean distance of its
    features to the class centroid.
    """
    f = np.atleast_2d(np.asarray(features, dtype=float))
    labels = np.asarray(labels)
    c = int(num_classes if num_classes is not None else labels.max() + 1)
    centroids = np.empty((c, f.shape[1]))
    variances = np.empty(c)
    for k in range(c):
        fk = f[labels == k]
        if fk.shape[0] == 0:
            raise EmptyClass(f"class {k} has no samples")
        centroids[k] = fk.mean(axis=0)
        variances[k] = ((fk - centroids[k]) ** 2).sum(axis=1).mean()
    diff = centroids[:, None, :] - centroids[None, :, :]
    distances = np.sqrt((diff**2).sum(-1))
    return ClassGeometry(centroids, variances, distances)


def correlation(xs, ys) -> float:
    """Pearson correlation coefficient."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.shape[0] < 3:
        raise DegenerateInput("need two equal-length vectors with at least 3 entries")
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt((xc**2).sum()), np.sqrt((yc**2).sum())
    if sx == 0 or sy == 0:
        raise DegenerateInput("zero variance input")
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))


def write_geometry_csv(geometry: ClassGeometry, robust_acc, path):
    rows = [
        (k, float(geometry.variances[k]), float(geometry.avg_distance[k]), float(robust_acc[k]))
        for k in range(geometry.distances.shape[0])
    ]
    return write_csv(path, ("class", "variance", "avg_distance", "robust_acc"), rows, METRICS_SIG)


def write_distance_matrix_csv(geometry: ClassGeometry, path):
    c = geometry.distances.shape[0]
    header = ["class"] + [str(k) for k in range(c)]
    rows = [[k] + [float(v) for v in geometry.distances[k]] for k in range(c)]
    return write_csv(path, header, rows, METRICS_SIG)
