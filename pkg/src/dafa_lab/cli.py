"""dafa-lab command line.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime or
numerical failure, 3 verification failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
import warnings
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dafa, experiments, nn, theory, training, verification
from .config import ExperimentConfig, master_seed
from .errors import ConfigError
from .io import fmt, read_csv_rows, render_csv
from .metrics import write_metrics_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_VERIFY = 3

log = logging.getLogger("dafa_lab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


@contextmanager
def _inputs():
    """Treat ValueErrors raised while reading user inputs as configuration errors."""
    try:
        yield
    except ConfigError:
        raise
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


# theory ---------------------------------------------------------------------


def cmd_theory_verify(args) -> int:
    if args.samples < 1 or args.tol <= 0:
        raise ConfigError("--samples must be >= 1 and --tol > 0")
    if args.samples < verification.DEFAULT_SAMPLES:
        print(
            f"warning: {args.samples} samples < {verification.DEFAULT_SAMPLES}; "
            "Monte Carlo tolerance widened to max(tol, 3*std_error)",
            file=sys.stderr,
        )
    t0 = time.perf_counter()
    checks, _ = verification.battery(args.samples, args.seed, args.tol)
    width = max(len(c.name) for c in checks)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<{width}}  {c.detail}")
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed in {time.perf_counter() - t0:.1f}s")
    return EXIT_OK if failed == 0 else EXIT_VERIFY


def cmd_theory_scan(args) -> int:
    with _inputs():
        grid = experiments.frange(args.alpha_min, args.alpha_max, args.alpha_step)
        task = theory.BinaryTaskSpec(args.d, args.eta, args.sigma, grid[0], args.eps)
        for a in grid:
            theory.margin(task.with_alpha(a), theory.ADVERSARIAL)
    rows = theory.scan_alpha(task, grid)
    if args.out:
        theory.write_scan_csv(rows, args.out)
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        sys.stdout.write(render_csv(theory.ScanRow._fields, rows, theory.CSV_SIG))
    return EXIT_OK


# dafa -----------------------------------------------------------------------

WEIGHT_RULES = {
    "prob": dafa.weights_scaled,
    "easy_ref": dafa.weights_easy_reference,
}


def cmd_weights(args) -> int:
    with _inputs():
        if args.variant == "embedding":
            emb = np.array([[float(v) for v in row] for row in read_csv_rows(args.probs)])
            p = dafa.prob_from_embeddings(emb)
        else:
            p = dafa.ClassProbMatrix.from_csv(args.probs)
        if args.lam < 0:
            raise ConfigError("--lambda must be >= 0")
        if args.clip is not None and not args.clip > 0:
            raise ConfigError("--clip must be > 0")
    if args.variant in ("basic", "embedding"):
        w = dafa.weights_basic(p, 1.0, args.lam)
    else:
        w = WEIGHT_RULES[args.variant](p, args.lam)
    if args.clip is not None:
        w = dafa.clip(w, args.clip)
    if args.out:
        w.to_csv(args.out)
    print(f"weights: {w.render()}  (sum {fmt(float(w.w.sum()), 9)}{', clipped' if w.clipped else ''})")
    return EXIT_OK


# training -------------------------------------------------------------------


def _load_config(path) -> ExperimentConfig:
    return ExperimentConfig.load(path) if path else ExperimentConfig.default()


def _override(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if getattr(args, "epochs", None) is not None:
        changes["epochs"] = args.epochs
        changes["warmup_tau"] = None
        changes["lr_decay_epochs"] = None
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    elif "seed" not in cfg.train_keys:
        changes["seed"] = master_seed(cfg.train.seed)
    if changes:
        with _inputs():
            base = {k: getattr(cfg.train, k) for k in cfg.train_keys}
            if "epochs" in changes:
                base.pop("warmup_tau", None)
                base.pop("lr_decay_epochs", None)
            base.update({k: v for k, v in changes.items() if v is not None})
            cfg = replace(cfg, train=training.TrainConfig(**base))
    return cfg


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    out = args.out or cfg.out_dir
    if not out:
        raise ConfigError("no output directory: pass --out or set output.dir in the config")
    return Path(out)


def cmd_train(args) -> int:
    cfg = _override(_load_config(args.config), args)
    out = _out_dir(args, cfg)
    with _inputs():
        at, ae = cfg.attack_train_config(), cfg.attack_eval_config()
        _, train_set, test_set = cfg.datasets(cfg.train.seed)
    t0 = time.perf_counter()
    res = training.train(cfg.train, train_set, test_set, at, ae)
    write_metrics_csv(res.history, out / "metrics.csv", res.eval_epochs)
    res.weights.to_csv(out / "weights.csv")
    if res.prob_matrix is not None:
        res.prob_matrix.to_csv(out / "prob_matrix.csv")
    nn.save_checkpoint(res.params, out / "checkpoint.csv")
    last = res.history[-1]
    print(f"trained {cfg.train.epochs} epochs in {time.perf_counter() - t0:.1f}s; weights {res.weights.render()}")
    print(
        f"final: avg clean {last.avg_clean:.2f}  worst clean {last.worst_clean:.2f}  "
        f"avg robust {last.avg_robust:.2f}  worst robust {last.worst_robust:.2f} (class {last.worst_class})"
    )
    return EXIT_OK


# experiments ----------------------------------------------------------------


def _seeds(args, cfg: ExperimentConfig) -> list[int]:
    if args.seeds:
        return args.seeds
    if cfg.seeds:
        return list(cfg.seeds)
    m = master_seed()
    return [m, m + 1, m + 2]


def cmd_fairness(args) -> int:
    cfg = _override(_load_config(args.config), args)
    out = _out_dir(args, cfg)
    seeds = _seeds(args, cfg)
    with _inputs():
        if cfg.preset != "fairness":
            raise ConfigError("the fairness experiment needs the 'fairness' data preset")
        modes = tuple(args.modes)
        if training.OFF not in modes or any(m not in training.DAFA_MODES for m in modes):
            raise ConfigError(f"--modes must include 'off' and use only {training.DAFA_MODES}")
        at, ae = cfg.attack_train_config(), cfg.attack_eval_config()
    t0 = time.perf_counter()
    report = experiments.fairness(cfg.train, seeds, modes, cfg.data, at, ae, args.jobs)
    report.write(out / "fairness_report.csv")
    report.write_geometry(out / "geometry.csv")
    print(f"{len(modes) * len(seeds)} runs in {time.perf_counter() - t0:.1f}s over seeds {seeds}")
    for mode in modes:
        line = (
            f"{mode:<12} avg clean {report.mean(mode, 'avg_clean'):6.2f}  worst clean {report.mean(mode, 'worst_clean'):6.2f}  "
            f"avg robust {report.mean(mode, 'avg_robust'):6.2f}  worst robust {report.mean(mode, 'worst_robust'):6.2f}"
        )
        if mode != training.OFF:
            nat, rob = report.rhos(mode)
            line += f"  rho_nat {np.mean(nat):+.3f}  rho_rob {np.mean(rob):+.3f}"
        print(line)
    return EXIT_OK


def cmd_margin(args) -> int:
    cfg = _override(_load_config(args.config), args)
    out = _out_dir(args, cfg)
    seeds = _seeds(args, cfg)
    with _inputs():
        if not args.eps > 0:
            raise ConfigError("--eps must be > 0")
        modes = tuple(args.modes)
        if any(m not in training.MODES for m in modes):
            raise ConfigError(f"--modes must be drawn from {training.MODES}")
        data = cfg.data if cfg.preset == "pair" else {}
    t0 = time.perf_counter()
    report = experiments.margin_asymmetry(cfg.train, seeds, args.eps, modes, data, args.jobs)
    report.write(out / "margin_asymmetry.csv")
    print(f"margin asymmetry at eps={args.eps} over seeds {seeds} ({time.perf_counter() - t0:.1f}s); mean robust accuracy")
    for mode in modes:
        for sc in experiments.MARGIN_SCALES:
            print(
                f"{mode:<7} radii ({sc[0]:g}e, {sc[1]:g}e): class A {report.mean_robust(mode, sc, 0):6.2f}  "
                f"class B {report.mean_robust(mode, sc, 1):6.2f}"
            )
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _override(_load_config(args.config), args)
    out = _out_dir(args, cfg)
    seeds = _seeds(args, cfg)
    with _inputs():
        if cfg.preset != "fairness":
            raise ConfigError("the distance sweep needs the 'fairness' data preset")
        far = cfg.data.get("far_gap", 3.0)
        if not args.gaps or any(not 0 < g <= far for g in args.gaps):
            raise ConfigError(f"--gaps must lie in (0, far_gap={far}]")
    t0 = time.perf_counter()
    report = experiments.distance_sweep(cfg.train, seeds, args.gaps, cfg.data, args.jobs)
    report.write(out / "distance_sweep.csv")
    print(f"distance sweep over seeds {seeds} ({time.perf_counter() - t0:.1f}s)")
    for g, acc in zip(report.gaps, report.hard_class_robust()):
        print(f"near_gap {g:5.2f}: class 0 avg distance {report.distances[g][0]:.3f}  robust {acc:6.2f}")
    return EXIT_OK


# parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dafa-lab", description="Distance-aware fair adversarial training on synthetic data.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    th = sub.add_parser("theory", help="closed-form binary Gaussian analysis")
    ths = th.add_subparsers(dest="action", required=True, parser_class=_Parser)
    v = ths.add_parser("verify", help="closed forms against Monte Carlo and grid oracles")
    v.add_argument("--samples", type=int, default=verification.DEFAULT_SAMPLES)
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--tol", type=float, default=verification.DEFAULT_TOL)
    v.set_defaults(func=cmd_theory_verify)
    s = ths.add_parser("scan", help="per-class errors over an alpha grid")
    s.add_argument("--alpha-min", type=float, default=1.0)
    s.add_argument("--alpha-max", type=float, default=3.0)
    s.add_argument("--alpha-step", type=float, default=0.1)
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--eta", type=float, required=True)
    s.add_argument("--sigma", type=float, required=True)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--out", default=None, help="CSV path (stdout if omitted)")
    s.set_defaults(func=cmd_theory_scan)

    da = sub.add_parser("dafa", help="class weight computation")
    das = da.add_subparsers(dest="action", required=True, parser_class=_Parser)
    w = das.add_parser("weights", help="class weights from a probability matrix CSV")
    w.add_argument("--probs", required=True, help="C x C matrix CSV (or C x k mean embeddings for --variant embedding)")
    w.add_argument("--lambda", dest="lam", type=float, default=1.0)
    w.add_argument("--variant", choices=("prob", "basic", "easy_ref", "embedding"), default="prob")
    w.add_argument("--clip", type=float, default=dafa.DEFAULT_CLIP, help="lower bound K on each weight")
    w.add_argument("--no-clip", dest="clip", action="store_const", const=None)
    w.add_argument("--out", default=None)
    w.set_defaults(func=cmd_weights)

    def common(sp):
        sp.add_argument("--config", default=None, help="JSON experiment config")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--epochs", type=int, default=None)

    t = sub.add_parser("train", help="one training run")
    common(t)
    t.add_argument("--seed", type=int, default=None)
    t.set_defaults(func=cmd_train)

    ex = sub.add_parser("experiment", help="multi-run experiments")
    exs = ex.add_subparsers(dest="action", required=True, parser_class=_Parser)
    f = exs.add_parser("fairness", help="paired baseline vs DAFA runs")
    common(f)
    f.add_argument("--seeds", type=_int_list, default=None)
    f.add_argument("--modes", type=_str_list, default=[training.OFF, training.BOTH])
    f.add_argument("--jobs", type=int, default=1)
    f.set_defaults(func=cmd_fairness)
    m = exs.add_parser("margin-asymmetry", help="binary pair trained with asymmetric radii")
    common(m)
    m.add_argument("--seeds", type=_int_list, default=None)
    m.add_argument("--eps", type=float, default=experiments.MARGIN_EPSILON)
    m.add_argument("--modes", type=_str_list, default=list(training.MODES))
    m.add_argument("--jobs", type=int, default=1)
    m.set_defaults(func=cmd_margin)
    sw = exs.add_parser("distance-sweep", help="hard-class accuracy as its neighbour moves away")
    common(sw)
    sw.add_argument("--seeds", type=_int_list, default=None)
    sw.add_argument("--gaps", type=_float_list, default=[0.6, 1.2, 1.8, 2.4, 3.0])
    sw.add_argument("--jobs", type=int, default=1)
    sw.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "jobs", 1) < 1:
            raise ConfigError("--jobs must be >= 1")
        if getattr(args, "seed", 0) is None and args.func is cmd_theory_verify:
            args.seed = master_seed()
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - never leak a traceback to the shell
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
