"""``gpcert`` command line.

Exit codes: 0 on completion, 1 on invalid input or I/O failure, 2 when any
verdict stayed unknown because a budget ran out.
"""

from __future__ import annotations

import csv
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np

from .bnb import BnbConfig
from .data import read_csv, synthetic2d, write_csv
from .io import Job, ModelFileError, dumps, load_job, load_model, reference_values, save_model
from .kernels import SquaredExponential
from .model import TrainingError, fit_laplace_binary, fit_regression
from .robustness import (
    Status,
    certify_classification,
    certify_regression,
    delta_metric,
    gpfgs_attack,
    interpretability_delta,
    safety_curve,
)

log = logging.getLogger("gpcert")

EXIT_OK, EXIT_ERROR, EXIT_UNKNOWN = 0, 1, 2
N_REFERENCE = 10


class CliError(click.ClickException):
    exit_code = EXIT_ERROR


# ---------------------------------------------------------------------------
# Worker side
# ---------------------------------------------------------------------------

_MODELS: dict = {}


def _model(path):
    if path not in _MODELS:
        _MODELS[path] = load_model(path)
    return _MODELS[path]


def _config(job: Job) -> BnbConfig:
    return BnbConfig(eps=job.epsilon, max_iter=job.max_iter, max_time=job.max_time, split=job.split,
                     M=job.M, seed=job.seed, likelihood=job.likelihood)


def _floats(v):
    return None if v is None else [float(a) for a in np.asarray(v, dtype=float).ravel()]


def _run_item(item):
    """One unit of work; returns a list of JSON-ready rows."""
    mode, model_path, job, idx, x = item
    model = _model(model_path)
    cfg = _config(job)
    x = np.asarray(x, dtype=float)
    rows = []
    if mode == "certify":
        for g in job.gammas:
            t0 = time.perf_counter()
            if model.task == "regression":
                v = certify_regression(model, x, g, job.delta, job.norm, cfg)
            else:
                v = certify_classification(model, x, g, cfg, job.norm)
            rows.append({"index": idx, "x": _floats(x), **v.to_dict(), "time": time.perf_counter() - t0})
    elif mode == "safety-curve":
        for g, lo, hi in safety_curve(model, x, job.gammas, cfg):
            rows.append({"index": idx, "gamma": g, "lower": lo, "upper": hi})
    elif mode == "delta":
        for g in job.gammas:
            rows.append({"index": idx, "gamma": g, "delta": delta_metric(model, x, g, cfg)})
    elif mode == "interpret":
        rep = interpretability_delta(model, x, job.gammas[0], job.features, cfg)
        for i, v, lo, hi in zip(rep.dims, rep.values, rep.lower, rep.upper):
            rows.append({"index": idx, "gamma": rep.gamma, "dim": int(i), "value": float(v),
                         "lower": float(lo), "upper": float(hi)})
    elif mode == "attack":
        for g in job.gammas:
            xa, ok = gpfgs_attack(model, x, g, job.steps)
            v = certify_classification(model, x, g, cfg, job.norm)
            rows.append({"index": idx, "gamma": g, "attack_success": bool(ok), "attack_point": _floats(xa),
                         "status": v.status.value,
                         "consistent": not (ok and v.status == Status.CERTIFIED)})
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return rows


def _workers(n):
    if n is None:
        n = int(os.environ.get("GPCERT_WORKERS", "1") or 1)
    return max(1, n)


def _run_all(items, workers):
    if workers == 1 or len(items) <= 1:
        return [_run_item(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_item, items))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose):
    """Certified prediction ranges and robustness checks for GP models."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@cli.command("gen")
@click.option("--n-train", default=1000, show_default=True, type=click.IntRange(min=2))
@click.option("--n-test", default=200, show_default=True, type=click.IntRange(min=2))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory.")
def cmd_gen(n_train, n_test, seed, out):
    """Write the two-Gaussians dataset as train.csv and test.csv."""
    rng = np.random.default_rng(seed)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for name, n in (("train.csv", n_train), ("test.csv", n_test)):
        X, y = synthetic2d(n, rng)
        write_csv(out / name, X, y)
    click.echo(f"wrote {out / 'train.csv'} and {out / 'test.csv'}")


@cli.command("train")
@click.option("--data", "data_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--task", type=click.Choice(["binary", "regression"]), default="binary", show_default=True)
@click.option("--link", type=click.Choice(["probit", "logistic"]), default="probit", show_default=True)
@click.option("--variance", default=1.0, show_default=True, type=float, help="Kernel signal variance.")
@click.option("--lengthscale", default=1.0, show_default=True, type=float)
@click.option("--noise", default=0.01, show_default=True, type=float, help="Regression noise variance.")
@click.option("--lam", default=1.0, show_default=True, type=float, help="Probit slope.")
@click.option("--seed", default=0, show_default=True, type=int, help="Seed for reference points.")
def cmd_train(data_path, out, task, link, variance, lengthscale, noise, lam, seed):
    """Fit a squared-exponential GP (exact regression or Laplace classification)."""
    try:
        X, y, _, _ = read_csv(data_path)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    kernel = SquaredExponential(variance, np.full(X.shape[1], 0.5 / lengthscale**2))
    classes = None
    try:
        if task == "regression":
            model = fit_regression(X, y, kernel, noise)
        else:
            labels = np.unique(y)
            if labels.size != 2:
                raise CliError(f"binary training needs exactly two labels, found {labels.size}")
            classes = [int(v) if float(v).is_integer() else float(v) for v in labels]
            model = fit_laplace_binary(X, np.where(y == labels[1], 1.0, -1.0), kernel, link, lam)
            model.classes = classes
    except (TrainingError, ValueError, np.linalg.LinAlgError) as exc:
        raise CliError(f"training failed: {exc}") from exc
    rng = np.random.default_rng(seed)
    lo, hi = X.min(axis=0), X.max(axis=0)
    refs = lo + (hi - lo) * rng.random((N_REFERENCE, X.shape[1]))
    vals = reference_values(model, refs)
    save_model(out, model, classes, list(zip(refs, vals)))
    if task == "binary":
        acc = float(np.mean(np.argmax(model.class_prob(X), axis=1) == (y == classes[1])))
        click.echo(f"training accuracy {acc:.4f}")
    click.echo(f"wrote {out}")


def _job_options(fn):
    fn = click.option("--workers", type=int, default=None, help="Worker processes (default $GPCERT_WORKERS or 1).")(fn)
    fn = click.option("--gamma", "gammas", type=float, multiple=True, help="Radius; repeat for a ladder.")(fn)
    fn = click.option("--epsilon", type=float, default=None)(fn)
    fn = click.option("--seed", type=int, default=None)(fn)
    fn = click.option("--out", required=True, type=click.Path(dir_okay=False))(fn)
    fn = click.option("--job", "job_path", required=True, type=click.Path(dir_okay=False))(fn)
    fn = click.option("--model", "model_path", type=click.Path(dir_okay=False), default=None)(fn)
    return fn


def _prepare(mode, job_path, model_path, seed, epsilon, gammas):
    try:
        job = load_job(job_path)
    except ModelFileError as exc:
        raise CliError(str(exc)) from exc
    if model_path is not None:
        job.model = model_path
    if job.model is None:
        raise CliError("no model given (job file or --model)")
    if seed is not None:
        job.seed = seed
    if epsilon is not None:
        if epsilon <= 0:
            raise CliError("epsilon must be positive")
        job.epsilon = epsilon
    if gammas:
        if min(gammas) <= 0:
            raise CliError("gamma must be positive")
        job.gammas = list(gammas)
    try:
        model = _model(job.model)
    except ModelFileError as exc:
        raise CliError(str(exc)) from exc
    if job.points.size and job.points.shape[1] != model.d:
        raise CliError(f"points have dimension {job.points.shape[1]}, model expects {model.d}")
    if mode in ("delta", "interpret", "attack", "safety-curve") and model.task == "regression":
        raise CliError(f"{mode} needs a classification model")
    job.mode = mode
    return job, [(mode, job.model, job, i, x) for i, x in enumerate(job.points)]


def _write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([r[c] for c in columns])


def _job_meta(job):
    meta = asdict(job)
    meta.pop("points")
    meta["max_time"] = None if not np.isfinite(job.max_time) else job.max_time
    return meta


@cli.command("certify")
@_job_options
def cmd_certify(model_path, job_path, out, seed, epsilon, gammas, workers):
    """Certify or falsify robustness for every (point, gamma) in the job.

    Writes a JSON report to --out and the per-radius bounds as CSV next to it.
    Use a job with mode "safety-curve" to get nested-radius curves instead.
    """
    try:
        mode = load_job(job_path).mode
    except ModelFileError as exc:
        raise CliError(str(exc)) from exc
    mode = "safety-curve" if mode == "safety-curve" else "certify"
    job, items = _prepare(mode, job_path, model_path, seed, epsilon, gammas)
    rows = [r for rs in _run_all(items, _workers(workers)) for r in rs]
    Path(out).write_text(dumps({"mode": mode, "job": _job_meta(job), "results": rows}))
    curve = Path(out).with_suffix(".csv")
    if mode == "certify":
        for r in rows:
            c = r.get("predicted")
            r["bound"] = r["lower"][c] if c is not None else r["gap"]
        _write_csv(curve, rows, ["index", "gamma", "status", "bound"])
    else:
        _write_csv(curve, rows, ["index", "gamma", "lower", "upper"])
    n_unknown = sum(r.get("status") == Status.UNKNOWN.value for r in rows)
    click.echo(f"{len(rows)} results, {n_unknown} unknown; wrote {out}")
    return EXIT_UNKNOWN if n_unknown else EXIT_OK


def _simple(mode, columns):
    def cmd(model_path, job_path, out, seed, epsilon, gammas, workers):
        job, items = _prepare(mode, job_path, model_path, seed, epsilon, gammas)
        rows = [r for rs in _run_all(items, _workers(workers)) for r in rs]
        if mode == "attack":
            for r in rows:
                r["attack_point"] = " ".join(repr(v) for v in r["attack_point"])
        _write_csv(out, rows, columns)
        click.echo(f"{len(rows)} rows; wrote {out}")
        return EXIT_UNKNOWN if any(r.get("status") == Status.UNKNOWN.value for r in rows) else EXIT_OK
    return cmd


cli.command("delta", help="Certified spread of the positive-class probability per (point, gamma).")(
    _job_options(_simple("delta", ["index", "gamma", "delta"])))
cli.command("interpret", help="One-sided bound differences per input dimension (first gamma).")(
    _job_options(_simple("interpret", ["index", "gamma", "dim", "value", "lower", "upper"])))
cli.command("attack", help="Gradient-sign attack cross-checked against certification.")(
    _job_options(_simple("attack", ["index", "gamma", "attack_success", "status", "consistent",
                                     "attack_point"])))


def main(argv=None):
    try:
        rv = cli.main(args=argv, prog_name="gpcert", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_ERROR
    except click.ClickException as exc:
        exc.show()
        return EXIT_ERROR
    except (OSError, ModelFileError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_ERROR
    return rv if isinstance(rv, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
