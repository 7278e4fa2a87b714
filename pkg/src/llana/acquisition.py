"""Expected improvement and the conditional-sampling target score.

All scores are in canonical minimize form: improvement means going below
``best``.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from llana.predictive import PredictiveDistribution

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class AcquisitionContext:
    best_score: float
    exploration_alpha: float
    observed_min: float
    observed_max: float

    def __post_init__(self) -> None:
        vals = (self.best_score, self.exploration_alpha, self.observed_min, self.observed_max)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite acquisition context {self}")
        if self.observed_min > self.observed_max:
            raise ValueError("observed_min must not exceed observed_max")


def expected_improvement_array(mean, std, best: float) -> np.ndarray:
    """Vectorized EI; zero-std entries use ``max(best - mean, 0)``."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    gap = best - mean
    out = np.maximum(gap, 0.0)
    pos = std > 0
    if np.any(pos):
        s = std[pos]
        z = gap[pos] / s
        ei = gap[pos] * ndtr(z) + s * _INV_SQRT_2PI * np.exp(-0.5 * z * z)
        out[pos] = np.maximum(ei, 0.0)
    return out


def expected_improvement(pred: PredictiveDistribution, best: float) -> float:
    return float(expected_improvement_array([pred.mean], [pred.std], best)[0])


def target_score(ctx: AcquisitionContext) -> float:
    """Desired score ``x_min - alpha * (x_max - x_min)`` for the sampler.

    Negative alpha keeps the target inside the observed range; positive
    alpha asks for something better than the best seen so far.
    """
    return ctx.observed_min - ctx.exploration_alpha * (ctx.observed_max - ctx.observed_min)


def score_candidates(preds: Sequence[PredictiveDistribution], best: float) -> tuple[list[float], int]:
    """EI for every candidate plus the first index attaining the maximum."""
    if not preds:
        raise ValueError("no candidates to score")
    scores = expected_improvement_array([p.mean for p in preds], [p.std for p in preds], best)
    return [float(s) for s in scores], int(np.argmax(scores))
