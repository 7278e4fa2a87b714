"""Surrogate benchmark: quality versus number of observed points, plus regret.

For every surrogate, training size ``n`` and repeat, ``n`` training rows are
subsampled, the surrogate is fitted and the full test set is scored with
NRMSE, R² and LPD. Each surrogate's optimization loop is also replayed on
the tabular oracle built from the whole dataset to give normalized regret
curves. Cells are independent; results are assembled in cell order so the
written reports are byte-identical for a given seed.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from llana._seeding import derive_seed
from llana.analog import TabularOracle
from llana.forest import forest_fit, forest_predict_many
from llana.gp import gp_fit, gp_predict_many
from llana.icl import LlmSettings, TaskCard, icl_predict
from llana.llm import Backend, MockBackend
from llana.metrics import evaluate_predictions, normalized_regret
from llana.mockllm import heuristic_responder
from llana.optimizer import BudgetedRun, run_bo, run_llana
from llana.predictive import PredictiveDistribution
from llana.space import DatasetSplit, SearchSpace, SizeError, Trajectory, encode_many

logger = logging.getLogger(__name__)

SURROGATES = ("gp", "forest", "icl")
DEFAULT_GRID = (5, 10, 15, 20, 25, 30)
REPORT_FIELDS = ("surrogate", "n_observed", "repeat", "nrmse", "r2", "lpd")
REGRET_FIELDS = ("surrogate", "trial", "repeat", "regret")


@dataclass(frozen=True)
class BenchSettings:
    """Knobs of the benchmark grid.

    ``bo_trials`` defaults to the largest training size in ``n_grid``.
    """

    surrogates: tuple[str, ...] = SURROGATES
    n_grid: tuple[int, ...] = DEFAULT_GRID
    repeats: int = 3
    seed: int = 0
    objective: int = 0
    k_samples: int = 10
    gp_restarts: int = 8
    bo_trials: int | None = None
    n_random: int = 5
    m_candidates: int = 20
    exploration_alpha: float = -0.1
    jobs: int = 1
    regret: bool = True

    def __post_init__(self) -> None:
        unknown = set(self.surrogates) - set(SURROGATES)
        if unknown:
            raise ValueError(f"unknown surrogates {sorted(unknown)}")
        if not self.n_grid or min(self.n_grid) < 1:
            raise ValueError("n_grid must hold positive counts")
        if self.repeats < 1 or self.jobs < 1:
            raise ValueError("repeats and jobs must be >= 1")


@dataclass(frozen=True)
class BenchReport:
    rows: tuple[dict, ...]
    regret_rows: tuple[dict, ...]
    errors: tuple[dict, ...] = field(default_factory=tuple)

    @property
    def all_failed(self) -> bool:
        return bool(self.rows) and all(math.isnan(r["nrmse"]) for r in self.rows)


def _predict(kind, space, card, train, test, objective, settings, seed, backend) -> list[PredictiveDistribution]:
    x = encode_many([o.config for o in train], space)
    y = np.array([o.scores[objective] for o in train])
    xq = encode_many([o.config for o in test], space)
    if kind == "gp":
        mean, std = gp_predict_many(gp_fit(x, y, restarts=settings.gp_restarts, seed=seed), xq)
    elif kind == "forest":
        mean, std = forest_predict_many(forest_fit(x, y, seed=seed), xq)
    else:
        traj = Trajectory(space, ("score",), ("minimize",))
        for o in train:
            traj = traj.append(o.config, (o.scores[objective],))
        preds = [
            icl_predict(backend, card, traj, o.config, settings.k_samples, derive_seed(seed, j))
            for j, o in enumerate(test)
        ]
        return [PredictiveDistribution(p.mean, p.std) for p in preds]
    return [PredictiveDistribution(float(m), float(s)) for m, s in zip(mean, std)]


def _regret_run(kind, oracle, space, card, settings, trials, seed, backend, f_min, f_max) -> tuple[float, ...]:
    if kind == "icl":
        run = BudgetedRun(trials, min(settings.n_random, trials), settings.m_candidates, settings.exploration_alpha,
                          seed, "icl", "icl")
        rec = run_llana(oracle, space, run, backend, card, k_samples=settings.k_samples, timings=False)
    else:
        run = BudgetedRun(trials, min(settings.n_random, trials), settings.m_candidates, settings.exploration_alpha,
                          seed, kind, "uniform-pool")
        rec = run_bo(oracle, space, run, gp_restarts=settings.gp_restarts, timings=False)
    return normalized_regret(rec.trajectory.scores(0), f_min, f_max).values


def bench_surrogates(
    split: DatasetSplit,
    space: SearchSpace,
    objective_names: Sequence[str],
    settings: BenchSettings = BenchSettings(),
    backend: Backend | None = None,
    card: TaskCard | None = None,
    out_dir: str | Path | None = None,
) -> BenchReport:
    """Run the benchmark grid and optionally write ``report.csv``,
    ``regret.csv`` and ``report.json`` into ``out_dir``.

    Args:
        split: Train rows to subsample from and the test rows to score.
        space: Search space of the dataset.
        objective_names: Objective column names (canonical minimize form).
        settings: Grid and loop settings.
        backend: LLM backend for the ``icl`` surrogate; defaults to the
            offline heuristic mock.
        card: Task card for the prompts; derived from ``space`` if omitted.
        out_dir: Where to write reports, if anywhere.

    Raises:
        SizeError: ``max(n_grid)`` exceeds the training rows.
    """
    if max(settings.n_grid) > len(split.train):
        raise SizeError(f"n_grid max {max(settings.n_grid)} exceeds {len(split.train)} training rows")
    if not split.test:
        raise SizeError("the test split is empty")
    backend = backend or MockBackend(heuristic_responder, jobs=settings.jobs)
    card = card or TaskCard.for_space(
        space, metric_name=objective_names[settings.objective], n_samples=len(split.train) + len(split.test)
    )
    obj = settings.objective
    targets = np.array([o.scores[obj] for o in split.test])

    cells = [(s, n, r) for s in settings.surrogates for n in settings.n_grid for r in range(settings.repeats)]

    def run_cell(cell):
        kind, n, rep = cell
        seed = derive_seed(settings.seed, "cell", kind, n, rep)
        idx = np.sort(np.random.default_rng(derive_seed(seed, "subsample")).choice(len(split.train), n, replace=False))
        train = [split.train[i] for i in idx]
        try:
            preds = _predict(kind, space, card, train, split.test, obj, settings, derive_seed(seed, "fit"), backend)
            rep_ = evaluate_predictions(preds, targets, n)
            return {"surrogate": kind, "n_observed": n, "repeat": rep, "nrmse": rep_.nrmse, "r2": rep_.r2, "lpd": rep_.lpd}, None
        except Exception as exc:  # per-cell failures are recorded, not fatal
            logger.warning("cell %s failed: %s", cell, exc)
            row = {"surrogate": kind, "n_observed": n, "repeat": rep, "nrmse": math.nan, "r2": math.nan, "lpd": math.nan}
            return row, {"surrogate": kind, "n_observed": n, "repeat": rep, "error": f"{type(exc).__name__}: {exc}"}

    regret_cells = [(s, r) for s in settings.surrogates for r in range(settings.repeats)] if settings.regret else []
    full = list(split.train) + list(split.test)
    oracle = TabularOracle(full, space, objective_names, objective_names[obj])
    f_min, f_max = float(np.min(oracle.scores)), float(np.max(oracle.scores))
    trials = settings.bo_trials or max(settings.n_grid)

    def run_regret(cell):
        kind, rep = cell
        try:
            values = _regret_run(kind, oracle, space, card, settings, trials,
                                 derive_seed(settings.seed, "regret", kind, rep), backend, f_min, f_max)
            return [{"surrogate": kind, "trial": t, "repeat": rep, "regret": v} for t, v in enumerate(values)], None
        except Exception as exc:
            logger.warning("regret run %s failed: %s", cell, exc)
            return [], {"surrogate": kind, "repeat": rep, "error": f"{type(exc).__name__}: {exc}"}

    if settings.jobs > 1:
        with ThreadPoolExecutor(settings.jobs) as pool:
            cell_out = list(pool.map(run_cell, cells))
            regret_out = list(pool.map(run_regret, regret_cells))
    else:
        cell_out = [run_cell(c) for c in cells]
        regret_out = [run_regret(c) for c in regret_cells]

    rows = tuple(r for r, _ in cell_out)
    regret_rows = tuple(row for rows_, _ in regret_out for row in rows_)
    errors = tuple(e for _, e in cell_out + regret_out if e is not None)
    report = BenchReport(rows, regret_rows, errors)
    if out_dir is not None:
        write_bench_report(report, out_dir)
    return report


def _csv_value(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _json_value(v):
    if isinstance(v, (float, np.floating)):
        return None if math.isnan(v) else float(v)
    return v


def write_bench_report(report: BenchReport, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"report": out / "report.csv", "regret": out / "regret.csv", "json": out / "report.json"}
    for key, fields, rows in (("report", REPORT_FIELDS, report.rows), ("regret", REGRET_FIELDS, report.regret_rows)):
        with open(paths[key], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(fields)
            for row in rows:
                w.writerow([_csv_value(row[f]) for f in fields])
    mirror = {
        "report": [{k: _json_value(v) for k, v in r.items()} for r in report.rows],
        "regret": [{k: _json_value(v) for k, v in r.items()} for r in report.regret_rows],
        "errors": list(report.errors),
    }
    paths["json"].write_text(json.dumps(mirror, indent=1) + "\n", encoding="utf-8")
    return paths


def read_report_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def plot_series(rows: Sequence[dict], metric: str) -> list[tuple[str, int, float, float]]:
    """Aggregate rows into ``(series, x, y_mean, y_std)`` tuples.

    ``metric`` is a report column (x = ``n_observed``) or ``regret``
    (x = ``trial``). NaN cells are skipped; std is the population std over
    repeats.
    """
    xkey = "trial" if metric == "regret" else "n_observed"
    groups: dict[tuple[str, int], list[float]] = {}
    for r in rows:
        v = float(r[metric])
        key = (r["surrogate"], int(r[xkey]))
        groups.setdefault(key, [])
        if not math.isnan(v):
            groups[key].append(v)
    out = []
    for (series, x), vals in sorted(groups.items()):
        if vals:
            out.append((series, x, float(np.mean(vals)), float(np.std(vals))))
    return out


def write_plot_data(report_dir: str | Path, out_dir: str | Path) -> dict[str, Path]:
    """Write ``<metric>_series.csv`` for nrmse, r2, lpd and regret."""
    src, out = Path(report_dir), Path(out_dir)
    report = read_report_csv(src / "report.csv")
    regret = read_report_csv(src / "regret.csv")
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for metric, rows in (("nrmse", report), ("r2", report), ("lpd", report), ("regret", regret)):
        path = out / f"{metric}_series.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("series", "x", "y_mean", "y_std"))
            for series, x, m, s in plot_series(rows, metric):
                w.writerow((series, x, repr(m), repr(s)))
        paths[metric] = path
    return paths
