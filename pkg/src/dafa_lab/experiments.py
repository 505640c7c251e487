"""Multi-run experiments: paired fairness runs, margin asymmetry, distance sweep.

Each run is described by a picklable ``Job`` and regenerates its own data,
so jobs can run in worker processes.  Reports are assembled after all jobs
finish, sorted by (config, seed), and are independent of completion order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import attack, nn, synthdata, training
from .io import write_csv
from .errors import ZeroBaseline
from .metrics import MetricsRecord, class_geometry, correlation, mean_record, rho

REPORT_SIG = 9
FINAL_WINDOW = 5

FAIRNESS = "fairness"
PAIR = "pair"


@dataclass(frozen=True)
class Job:
    key: tuple
    config: training.TrainConfig
    data: str = FAIRNESS
    data_kwargs: dict = field(default_factory=dict)
    attack_train: attack.AttackConfig | None = None
    attack_eval: attack.AttackConfig | None = None
    want_geometry: bool = False


@dataclass
class RunOutcome:
    key: tuple
    final: MetricsRecord
    weights: np.ndarray
    geometry_distance: np.ndarray | None = None
    geometry_variance: np.ndarray | None = None
    history: list = field(default_factory=list)


def _dataset(job: Job):
    seed = job.config.seed
    if job.data == PAIR:
        return synthdata.preset_pair(seed=seed, **job.data_kwargs)
    return synthdata.preset_fairness(seed=seed, **job.data_kwargs)


def run_job(job: Job) -> RunOutcome:
    _, train_set, test_set = _dataset(job)
    res = training.train(job.config, train_set, test_set, job.attack_train, job.attack_eval)
    window = min(FINAL_WINDOW, len(res.history))
    out = RunOutcome(job.key, mean_record(res.history[-window:]), res.weights.w.copy(), history=res.history)
    if job.want_geometry:
        emb = nn.forward(res.params, test_set.points).embedding
        geo = class_geometry(emb, test_set.labels, test_set.num_classes)
        out.geometry_distance = geo.avg_distance
        out.geometry_variance = geo.variances
    return out


def run_jobs(jobs: list[Job], n_workers: int = 1) -> dict[tuple, RunOutcome]:
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            outcomes = list(pool.map(run_job, jobs))
    else:
        outcomes = [run_job(j) for j in jobs]
    return {o.key: o for o in sorted(outcomes, key=lambda o: o.key)}


def _windowed(config: training.TrainConfig) -> training.TrainConfig:
    if config.eval_last is None:
        return replace(config, eval_last=FINAL_WINDOW)
    return config


def _std(values) -> float | str:
    values = list(values)
    return _cell(float(np.std(values, ddof=1))) if len(values) > 1 else ""


def _cell(value: float) -> float | str:
    """Undefined (NaN) values are written as empty cells."""
    return "" if math.isnan(value) else value


def _rho_or_nan(baseline, delta) -> float:
    try:
        return rho(baseline, delta)
    except ZeroBaseline:
        return math.nan


# fairness -------------------------------------------------------------------

FAIRNESS_HEADER = ("mode", "seed", "avg_clean", "worst_clean", "avg_robust", "worst_robust", "rho_nat", "rho_rob")


@dataclass
class FairnessReport:
    modes: tuple[str, ...]
    seeds: tuple[int, ...]
    outcomes: dict[tuple, RunOutcome]

    def record(self, mode: str, seed: int) -> MetricsRecord:
        return self.outcomes[(mode, seed)].final

    def rhos(self, mode: str) -> tuple[list[float], list[float]]:
        """Per-seed (rho_nat, rho_rob) of ``mode`` against the ``off`` run with the same seed.

        NaN where the baseline has a zero accuracy and rho is undefined.
        """
        nat, rob = [], []
        for s in self.seeds:
            b, d = self.record(training.OFF, s), self.record(mode, s)
            nat.append(_rho_or_nan((b.avg_clean, b.worst_clean), (d.avg_clean, d.worst_clean)))
            rob.append(_rho_or_nan((b.avg_robust, b.worst_robust), (d.avg_robust, d.worst_robust)))
        return nat, rob

    def mean(self, mode: str, attr: str) -> float:
        return float(np.mean([getattr(self.record(mode, s), attr) for s in self.seeds]))

    def rows(self) -> list[tuple]:
        rows = []
        attrs = ("avg_clean", "worst_clean", "avg_robust", "worst_robust")
        for mode in self.modes:
            has_rho = mode != training.OFF and training.OFF in self.modes
            nat, rob = self.rhos(mode) if has_rho else ([math.nan] * len(self.seeds),) * 2
            for k, s in enumerate(self.seeds):
                rec = self.record(mode, s)
                rows.append((mode, s, *(getattr(rec, a) for a in attrs), _cell(nat[k]), _cell(rob[k])))
            per_attr = [[getattr(self.record(mode, s), a) for s in self.seeds] for a in attrs]
            rows.append(
                (mode, "mean", *(float(np.mean(v)) for v in per_attr),
                 _cell(float(np.mean(nat))) if has_rho else "", _cell(float(np.mean(rob))) if has_rho else "")
            )
            rows.append(
                (mode, "std", *(_std(v) for v in per_attr),
                 _std(nat) if has_rho else "", _std(rob) if has_rho else "")
            )
        return rows

    def write(self, path):
        return write_csv(path, FAIRNESS_HEADER, self.rows(), REPORT_SIG)

    def geometry_correlation(self, seed: int) -> float:
        """Pearson r between feature-space class distance and robust accuracy of the baseline run."""
        o = self.outcomes[(training.OFF, seed)]
        return correlation(o.geometry_distance, o.final.robust)

    def geometry_rows(self) -> list[tuple]:
        rows = []
        for s in self.seeds:
            o = self.outcomes.get((training.OFF, s))
            if o is None or o.geometry_distance is None:
                continue
            for k in range(o.final.num_classes):
                rows.append((s, k, float(o.geometry_variance[k]), float(o.geometry_distance[k]), float(o.final.robust[k])))
        return rows

    def write_geometry(self, path):
        return write_csv(path, ("seed", "class", "variance", "avg_distance", "robust_acc"), self.geometry_rows(), REPORT_SIG)


def fairness(
    config: training.TrainConfig,
    seeds,
    modes=(training.OFF, training.BOTH),
    data_kwargs: dict | None = None,
    attack_train=None,
    attack_eval=None,
    n_workers: int = 1,
) -> FairnessReport:
    """Paired runs on the fairness preset: identical seeds for every dafa mode."""
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    config = _windowed(config)
    jobs = [
        Job((m, s), replace(config, seed=s, dafa_mode=m), FAIRNESS, dict(data_kwargs or {}),
            attack_train, attack_eval, want_geometry=(m == training.OFF))
        for m in modes
        for s in seeds
    ]
    return FairnessReport(tuple(modes), seeds, run_jobs(jobs, n_workers))


# margin asymmetry -----------------------------------------------------------

MARGIN_SCALES = ((1.0, 1.0), (2.0, 1.0), (1.0, 2.0))
MARGIN_HEADER = ("mode", "scale_a", "scale_b", "seed", "class", "clean_acc", "robust_acc")
MARGIN_EPSILON = 0.25


@dataclass
class MarginReport:
    modes: tuple[str, ...]
    seeds: tuple[int, ...]
    outcomes: dict[tuple, RunOutcome]

    def mean_robust(self, mode: str, scales, cls: int) -> float:
        return float(np.mean([self.outcomes[(mode, tuple(scales), s)].final.robust[cls] for s in self.seeds]))

    def mean_clean(self, mode: str, scales, cls: int) -> float:
        return float(np.mean([self.outcomes[(mode, tuple(scales), s)].final.clean[cls] for s in self.seeds]))

    def rows(self) -> list[tuple]:
        rows = []
        for mode in self.modes:
            for sc in MARGIN_SCALES:
                for s in self.seeds:
                    rec = self.outcomes[(mode, sc, s)].final
                    for c in range(2):
                        rows.append((mode, sc[0], sc[1], s, c, float(rec.clean[c]), float(rec.robust[c])))
                for c in range(2):
                    rows.append((mode, sc[0], sc[1], "mean", c, self.mean_clean(mode, sc, c), self.mean_robust(mode, sc, c)))
        return rows

    def write(self, path):
        return write_csv(path, MARGIN_HEADER, self.rows(), REPORT_SIG)


def margin_asymmetry(
    config: training.TrainConfig,
    seeds,
    epsilon: float = MARGIN_EPSILON,
    modes=(training.TRADES, training.PGD),
    data_kwargs: dict | None = None,
    n_workers: int = 1,
) -> MarginReport:
    """Binary near pair trained with fixed radii (a*eps, b*eps); evaluated at eps."""
    seeds = tuple(int(s) for s in seeds)
    config = _windowed(replace(config, base_epsilon=epsilon, dafa_mode=training.OFF))
    jobs = [
        Job((m, sc, s), replace(config, seed=s, mode=m, fixed_margin_scale=sc), PAIR, dict(data_kwargs or {}))
        for m in modes
        for sc in MARGIN_SCALES
        for s in seeds
    ]
    return MarginReport(tuple(modes), seeds, run_jobs(jobs, n_workers))


# distance sweep -------------------------------------------------------------

SWEEP_HEADER = ("near_gap", "seed", "class", "avg_distance", "clean_acc", "robust_acc")


@dataclass
class SweepReport:
    gaps: tuple[float, ...]
    seeds: tuple[int, ...]
    outcomes: dict[tuple, RunOutcome]
    distances: dict[float, np.ndarray]

    def rows(self) -> list[tuple]:
        rows = []
        for g in self.gaps:
            dist = self.distances[g]
            for s in self.seeds:
                rec = self.outcomes[(g, s)].final
                for c in range(rec.num_classes):
                    rows.append((g, s, c, float(dist[c]), float(rec.clean[c]), float(rec.robust[c])))
        return rows

    def hard_class_robust(self) -> list[float]:
        """Mean robust accuracy of class 0 at each gap."""
        return [float(np.mean([self.outcomes[(g, s)].final.robust[0] for s in self.seeds])) for g in self.gaps]

    def write(self, path):
        return write_csv(path, SWEEP_HEADER, self.rows(), REPORT_SIG)


def distance_sweep(
    config: training.TrainConfig,
    seeds,
    gaps,
    data_kwargs: dict | None = None,
    n_workers: int = 1,
) -> SweepReport:
    """Baseline training while the hard class's nearest neighbour moves away."""
    seeds = tuple(int(s) for s in seeds)
    gaps = tuple(float(g) for g in gaps)
    data_kwargs = dict(data_kwargs or {})
    data_kwargs.pop("near_gap", None)
    config = _windowed(replace(config, dafa_mode=training.OFF))
    distances = {}
    for g in gaps:
        spec = synthdata.fairness_spec(near_gap=g, **{k: v for k, v in data_kwargs.items() if k != "seed"})
        distances[g] = spec.centroid_distances().sum(axis=1) / (spec.num_classes - 1)
    jobs = [Job((g, s), replace(config, seed=s), FAIRNESS, {**data_kwargs, "near_gap": g}) for g in gaps for s in seeds]
    return SweepReport(gaps, seeds, run_jobs(jobs, n_workers), distances)


def frange(start: float, stop: float, step: float) -> list[float]:
    """Inclusive grid ``start, start+step, ...`` up to ``stop`` (a single point if step > range)."""
    if not step > 0:
        raise ValueError("step must be > 0")
    n = int(math.floor((stop - start) / step + 1e-9))
    return [round(start + k * step, 12) for k in range(max(n, 0) + 1)]
