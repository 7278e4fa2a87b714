"""Surrogate-quality and optimization-progress metrics."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from llana.predictive import PredictiveDistribution

LOG_2PI = math.log(2.0 * math.pi)


class DegenerateError(ValueError):
    """A metric's normalizer or density is degenerate (zero range, zero std)."""


def _pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=float).ravel()
    target = np.asarray(target, dtype=float).ravel()
    if pred.size == 0 or pred.size != target.size:
        raise ValueError(f"need equal nonzero lengths, got {pred.size} and {target.size}")
    return pred, target


def nrmse(pred_means, targets) -> float:
    """RMSE divided by the target range."""
    pred, target = _pair(pred_means, targets)
    span = float(np.max(target) - np.min(target))
    if not span > 0:
        raise DegenerateError("targets have zero range")
    return float(np.sqrt(np.mean((pred - target) ** 2)) / span)


def r2(pred_means, targets) -> float:
    pred, target = _pair(pred_means, targets)
    ss_tot = float(np.sum((target - np.mean(target)) ** 2))
    if not ss_tot > 0:
        raise DegenerateError("targets have zero variance")
    return 1.0 - float(np.sum((pred - target) ** 2)) / ss_tot


def lpd(preds: Sequence[PredictiveDistribution], targets) -> float:
    """Mean Gaussian log predictive density of the targets."""
    mean = np.array([p.mean for p in preds], dtype=float)
    std = np.array([p.std for p in preds], dtype=float)
    mean, target = _pair(mean, targets)
    if np.any(std <= 0):
        raise DegenerateError("every predictive std must be positive")
    return float(np.mean(-0.5 * LOG_2PI - np.log(std) - (target - mean) ** 2 / (2.0 * std**2)))


@dataclass(frozen=True)
class RegretCurve:
    values: tuple[float, ...]
    f_star_min: float
    f_star_max: float
    run_local: bool = False


def normalized_regret(
    chosen_scores, f_star_min: float | None = None, f_star_max: float | None = None
) -> RegretCurve:
    """Running-best gap to ``f_star_min`` divided by the score range.

    Scores are canonical (minimize). Without explicit extremes the run's own
    minimum and maximum are used and the curve is flagged ``run_local``.
    """
    scores = np.asarray(chosen_scores, dtype=float).ravel()
    run_local = f_star_min is None or f_star_max is None
    if run_local:
        if scores.size == 0:
            raise ValueError("no scores to derive extremes from")
        f_star_min = float(np.min(scores)) if f_star_min is None else f_star_min
        f_star_max = float(np.max(scores)) if f_star_max is None else f_star_max
    span = f_star_max - f_star_min
    if not span > 0:
        raise DegenerateError("f_star_max must exceed f_star_min")
    values = (np.minimum.accumulate(scores) - f_star_min) / span if scores.size else scores
    return RegretCurve(tuple(float(v) for v in values), float(f_star_min), float(f_star_max), run_local)


@dataclass(frozen=True)
class SurrogateEvalReport:
    n_observed: int
    nrmse: float
    r2: float
    lpd: float
    residuals: tuple[float, ...]


def evaluate_predictions(preds: Sequence[PredictiveDistribution], targets, n_observed: int) -> SurrogateEvalReport:
    means = np.array([p.mean for p in preds])
    target = np.asarray(targets, dtype=float)
    return SurrogateEvalReport(
        n_observed,
        nrmse(means, target),
        r2(means, target),
        lpd(preds, target),
        tuple(float(v) for v in means - target),
    )
