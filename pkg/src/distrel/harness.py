"""Experiment orchestration: grids, tuning, replication, CSV output.

A config describes a grid of problem sizes, the estimators to run, and
tuning knobs.  Every (cell, replication) pair is an independent task:
generate data, fit each estimator, score it against the vector the
quantile method actually targets, and emit one CSV row per fit.  Rows
are collected in a deterministic order so a fixed seed reproduces the
output byte for byte (timing columns aside).
"""

import csv
import hashlib
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime, timezone

import numpy as np
import yaml

from .baselines import avg_dc, dependent_rel, pooled_lasso, pooled_rel
from .datagen import SimDesign, beta_star, generate, noise_mean
from .engine import (ClusterConfig, default_init_penalty,
                     run_distributed_rel, start_workers)
from .errors import NonConvergenceWarning
from .evaluation import l2_error, support_metrics
from .qr import QrProblem, check_loss, solve_l1_qr
from .schedules import ProblemScale, bandwidth_h, lambda_reg

SCHEMA_VERSION = 1

ESTIMATORS = ("dist_rel", "pooled_rel", "avg_dc", "pooled_lasso",
              "dependent_rel")

GRID_KEYS = ("n", "m", "p", "s", "noise", "tau", "iterations",
             "bandwidth_scale")

CSV_COLUMNS = (
    "schema_version", "experiment", "cell_index", "n", "m", "p", "s",
    "noise", "tau", "iterations", "bandwidth_scale", "rep", "seed",
    "estimator", "tuning", "l2_error", "l2_rel_error", "precision",
    "recall", "f1", "nnz", "wall_time_s", "error", "timestamp",
)

TRACE_COLUMNS = (
    "experiment", "cell_index", "rep", "estimator", "tuning", "iteration",
    "l2_error", "bandwidth", "lam", "density", "nnz", "kkt",
    "bytes_exchanged", "solver_converged",
)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    output_path: str
    grid: dict
    estimators: tuple
    replications: int = 20
    seed_base: int = 0
    transport: str = "in-process"
    c0_grid: tuple = (0.5, 1.0, 2.0)
    c0_bandwidth: float = 0.1
    record_iterates: bool = False
    lasso_grid_points: int = 20

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if len(self.estimators) == 0:
            raise ValueError("no estimators requested")
        for est in self.estimators:
            if est not in ESTIMATORS:
                raise ValueError(f"unknown estimator {est!r}, expected "
                                 f"a subset of {ESTIMATORS}")
        if len(self.c0_grid) == 0:
            raise ValueError("c0_grid is empty")
        for key in self.grid:
            if key not in GRID_KEYS:
                raise ValueError(f"unknown grid key {key!r}, expected "
                                 f"a subset of {GRID_KEYS}")
        for key in GRID_KEYS[:-1]:
            if key not in self.grid:
                raise ValueError(f"grid is missing {key!r}")


def _as_list(value):
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def config_from_mapping(raw):
    """Build an ExperimentConfig from a nested dict (parsed YAML)."""
    exp = raw.get("experiment", {})
    tuning = raw.get("tuning", {})
    grid = {k: _as_list(v) for k, v in raw.get("grid", {}).items()}
    grid.setdefault("bandwidth_scale", [1.0])
    return ExperimentConfig(
        name=exp.get("name", "experiment"),
        output_path=exp.get("output_path", "results.csv"),
        replications=int(exp.get("replications", 20)),
        seed_base=int(exp.get("seed_base", 0)),
        transport=exp.get("transport", "in-process"),
        grid=grid,
        estimators=tuple(raw.get("estimators", ["dist_rel"])),
        c0_grid=tuple(float(c) for c in tuning.get("C0_grid",
                                                   (0.5, 1.0, 2.0))),
        c0_bandwidth=float(tuning.get("c0_bandwidth", 0.1)),
        record_iterates=bool(tuning.get("record_iterates", False)),
        lasso_grid_points=int(tuning.get("lasso_grid_points", 20)),
    )


def apply_overrides(raw, overrides):
    """Apply dotted key=value strings onto the nested config dict."""
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"override {item!r} is not of the form "
                             f"key=value")
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = yaml.safe_load(value)
    return raw


def load_config(path, overrides=()):
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    return config_from_mapping(apply_overrides(raw, overrides))


def stable_seed(seed_base, cell_index, rep, role="train"):
    """63-bit seed from SHA-256 of "seed_base/cell/rep/role"."""
    text = f"{seed_base}/{cell_index}/{rep}/{role}"
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def grid_cells(cfg):
    """Cross product of the grid lists, in canonical key order."""
    keys = [k for k in GRID_KEYS if k in cfg.grid]
    cells = [{}]
    for key in keys:
        cells = [dict(cell, **{key: value})
                 for cell in cells for value in cfg.grid[key]]
    return cells


def quantile_validation_loss(beta, validation, tau):
    return float(np.mean(check_loss(
        validation.y - validation.X @ beta, tau)))


def select_c0(c0_grid, fit_fn, validation, tau):
    """Pick the penalty constant whose fit has the smallest validation
    quantile loss; ties go to the larger constant.  A candidate that
    raises is skipped with a warning; if every candidate fails the
    last error propagates."""
    best = None
    last_error = None
    for c0 in sorted(c0_grid):
        try:
            beta = fit_fn(c0)
        except Exception as exc:  # noqa: BLE001 - candidate isolation
            warnings.warn(f"tuning candidate C0={c0} failed: {exc!r}",
                          RuntimeWarning, stacklevel=2)
            last_error = exc
            continue
        loss = quantile_validation_loss(beta, validation, tau)
        if best is None or loss <= best[0]:
            best = (loss, c0, beta)
    if best is None:
        raise RuntimeError("every tuning candidate failed") from last_error
    loss, c0, beta = best
    return c0, beta, loss


def _metrics_row(beta, truth):
    absolute, relative = l2_error(beta, truth)
    support = support_metrics(beta, truth)
    return {
        "l2_error": absolute,
        "l2_rel_error": relative,
        "precision": support.precision,
        "recall": support.recall,
        "f1": support.f1,
        "nnz": int(np.count_nonzero(beta)),
    }


def _lasso_truth(cell, effective):
    """The pooled lasso chases the conditional mean, so score it
    against the mean-model coefficients when the noise has a mean;
    otherwise fall back to the quantile target."""
    mean = noise_mean(cell["noise"])
    if mean is None:
        return effective
    truth = beta_star(cell["s"], cell["p"])
    truth[0] += mean
    return truth


def _trace_rows(cfg, cell, cell_index, rep, estimator, tuning, trace,
                effective):
    rows = []
    for rec in trace.records:
        if rec.iterate is None:
            continue
        absolute, _ = l2_error(rec.iterate, effective)
        rows.append({
            "experiment": cfg.name,
            "cell_index": cell_index,
            "rep": rep,
            "estimator": estimator,
            "tuning": tuning,
            "iteration": rec.g,
            "l2_error": absolute,
            "bandwidth": rec.bandwidth,
            "lam": rec.lam,
            "density": rec.density,
            "nnz": rec.nnz,
            "kkt": rec.kkt,
            "bytes_exchanged": rec.bytes_exchanged,
            "solver_converged": rec.solver_converged,
        })
    return rows


def run_cell_rep(cfg, cell, cell_index, rep):
    """All requested estimators on one replication of one grid cell."""
    seed_train = stable_seed(cfg.seed_base, cell_index, rep, "train")
    seed_val = stable_seed(cfg.seed_base, cell_index, rep, "validation")
    design = SimDesign(n=cell["n"], p=cell["p"], s=cell["s"],
                       noise=cell["noise"], tau=cell["tau"],
                       seed=seed_train)
    data, effective = generate(design)
    val_data, _ = generate(replace(design, seed=seed_val))
    num_shards = max(1, round(cell["n"] / cell["m"]))
    parts = data.split(num_shards)
    shard_scale = ProblemScale(n=cell["n"], m=parts[0].n, p=cell["p"],
                               s=cell["s"], c0_bandwidth=cfg.c0_bandwidth)
    pooled_scale = ProblemScale(n=cell["n"], m=cell["n"], p=cell["p"],
                                s=cell["s"], c0_bandwidth=cfg.c0_bandwidth)
    tau = cell["tau"]

    base = {
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg.name,
        "cell_index": cell_index,
        "rep": rep,
        "seed": seed_train,
        **{k: cell[k] for k in GRID_KEYS if k in cell},
    }
    rows = []
    trace_rows = []
    for estimator in cfg.estimators:
        row = dict(base, estimator=estimator, tuning="", error="")
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", NonConvergenceWarning)
                if estimator == "dist_rel":
                    row.update(_run_dist_rel(
                        cfg, cell, cell_index, rep, parts, shard_scale, tau,
                        val_data, effective, trace_rows))
                elif estimator == "pooled_rel":
                    row.update(_run_pooled_rel(
                        cfg, cell, data, pooled_scale, tau, val_data,
                        effective))
                elif estimator == "avg_dc":
                    beta = avg_dc(parts, tau,
                                  max_workers=min(4, len(parts)))
                    row.update(_metrics_row(beta, effective))
                elif estimator == "pooled_lasso":
                    row.update(_run_pooled_lasso(cfg, cell, data, val_data,
                                                 effective))
                elif estimator == "dependent_rel":
                    row.update(_run_dependent_rel(data, pooled_scale, tau,
                                                  effective))
        except Exception as exc:  # noqa: BLE001 - recorded, run continues
            row["error"] = f"{type(exc).__name__}: {exc}"
        row["wall_time_s"] = time.perf_counter() - t0
        rows.append(row)
    return rows, trace_rows


def _run_dist_rel(cfg, cell, cell_index, rep, parts, scale, tau, val_data,
                  effective, trace_rows):
    first = parts[0]
    init = solve_l1_qr(QrProblem(first.X, first.y, tau,
                                 default_init_penalty(scale)))
    if cell["iterations"] == 0:
        # Zero refinement rounds: the estimate is the initial fit, no
        # tuning constant enters.
        out = _metrics_row(init, effective)
        out["tuning"] = ""
        return out
    traces = {}
    pool = start_workers(parts, tau, cfg.transport)
    try:
        def fit(c0):
            run_cfg = ClusterConfig(
                shards=parts, scale=replace(scale, C0_lambda=c0), tau=tau,
                iterations=cell["iterations"], transport=cfg.transport,
                initial_coefficients=init,
                bandwidth_scale=cell.get("bandwidth_scale", 1.0),
                record_iterates=cfg.record_iterates)
            beta, trace = run_distributed_rel(run_cfg, pool=pool)
            traces[c0] = trace
            return beta

        c0, beta, _ = select_c0(cfg.c0_grid, fit, val_data, tau)
    finally:
        pool.close()
    out = _metrics_row(beta, effective)
    out["tuning"] = c0
    trace = traces[c0]
    if trace.error:
        out["error"] = trace.error
    if cfg.record_iterates:
        trace_rows.extend(_trace_rows(cfg, cell, cell_index, rep,
                                      "dist_rel", c0, trace, effective))
    return out


def _run_pooled_rel(cfg, cell, data, pooled_scale, tau, val_data,
                    effective):
    init = solve_l1_qr(QrProblem(data.X, data.y, tau,
                                 default_init_penalty(pooled_scale)))
    if cell["iterations"] == 0:
        out = _metrics_row(init, effective)
        out["tuning"] = ""
        return out
    traces = {}

    def fit(c0):
        beta, trace = pooled_rel(data, replace(pooled_scale, C0_lambda=c0),
                                 tau, cell["iterations"],
                                 initial_coefficients=init)
        traces[c0] = trace
        return beta

    c0, beta, _ = select_c0(cfg.c0_grid, fit, val_data, tau)
    out = _metrics_row(beta, effective)
    out["tuning"] = c0
    if traces[c0] is not None and traces[c0].error:
        out["error"] = traces[c0].error
    return out


def _run_pooled_lasso(cfg, cell, data, val_data, effective):
    lam_max = float(np.max(np.abs(data.X.T @ data.y)) / data.n)
    grid = lam_max * np.logspace(0.0, -3.0, cfg.lasso_grid_points)
    beta, info = pooled_lasso(data, grid, val_data, full_output=True)
    out = _metrics_row(beta, _lasso_truth(cell, effective))
    out["tuning"] = info["lam"]
    return out


def _run_dependent_rel(data, pooled_scale, tau, effective):
    init = solve_l1_qr(QrProblem(data.X, data.y, tau,
                                 default_init_penalty(pooled_scale)))
    beta = dependent_rel(data, tau, bandwidth_h(pooled_scale, 1), init,
                         lambda_reg(pooled_scale, 1))
    return _metrics_row(beta, effective)


def _pool_size():
    env = os.environ.get("DISTREL_THREADS", "")
    if env.strip():
        return max(1, int(env))
    return os.cpu_count() or 1


def _fmt(value):
    if value is None or value == "":
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _summary_rows(cfg, rows):
    """Per (cell, estimator) means over the successful replications."""
    metric_keys = ("l2_error", "l2_rel_error", "precision", "recall", "f1",
                   "nnz", "wall_time_s")
    groups = {}
    for row in rows:
        if row["error"]:
            continue
        groups.setdefault((row["cell_index"], row["estimator"]),
                          []).append(row)
    out = []
    for (cell_index, estimator), members in sorted(groups.items()):
        summary = dict(members[0])
        summary["rep"] = "mean"
        summary["seed"] = ""
        summary["tuning"] = ""
        summary["error"] = ""
        for key in metric_keys:
            summary[key] = float(np.mean([m[key] for m in members]))
        out.append(summary)
    return out


def run_experiment(cfg):
    """Execute the whole grid and write the CSV (and trace TSV).

    Returns the CSV path.  Tasks run in a thread pool sized by
    DISTREL_THREADS (default: CPU count); results are written in task
    order so output is reproducible.
    """
    cells = grid_cells(cfg)
    tasks = [(cell_index, cell, rep)
             for cell_index, cell in enumerate(cells)
             for rep in range(cfg.replications)]
    stamp = datetime.now(timezone.utc).isoformat()

    def work(task):
        cell_index, cell, rep = task
        return run_cell_rep(cfg, cell, cell_index, rep)

    workers = min(_pool_size(), len(tasks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, tasks))
    else:
        results = [work(task) for task in tasks]

    rows = [row for row_group, _ in results for row in row_group]
    trace_rows = [row for _, trace_group in results for row in trace_group]
    rows.extend(_summary_rows(cfg, rows))

    out_path = cfg.output_path
    out_dir = os.path.dirname(out_path)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            row.setdefault("timestamp", stamp)
            writer.writerow([_fmt(row.get(col, "")) for col in CSV_COLUMNS])
    if trace_rows:
        trace_path = os.path.splitext(out_path)[0] + ".trace.tsv"
        with open(trace_path, "w", newline="") as fh:
            writer = csv.writer(fh, delimiter="\t")
            writer.writerow(TRACE_COLUMNS)
            for row in trace_rows:
                writer.writerow([_fmt(row.get(col, ""))
                                 for col in TRACE_COLUMNS])
    return out_path
