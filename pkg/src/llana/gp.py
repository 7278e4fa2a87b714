"""Exact Gaussian-process regression with an ARD squared-exponential kernel.

Targets are standardized before fitting. Hyperparameters are fitted by a
multi-start compass (coordinate-wise pattern) search on the log marginal
likelihood in log-parameter space, which needs no gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from llana.predictive import PredictiveDistribution
from llana.space import SizeError

LOG_2PI = math.log(2.0 * math.pi)


class NumericalError(ArithmeticError):
    """Cholesky factorization failed even at the largest jitter."""


@dataclass(frozen=True)
class GpHyperparams:
    signal_variance: float
    lengthscales: tuple[float, ...]
    noise_variance: float

    def __post_init__(self) -> None:
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        object.__setattr__(self, "lengthscales", ls)
        values = (self.signal_variance, self.noise_variance, *ls)
        if not all(math.isfinite(v) and v > 0 for v in values):
            raise ValueError(f"hyperparameters must be positive and finite: {self}")

    def to_log_vector(self) -> np.ndarray:
        return np.log([self.signal_variance, *self.lengthscales, self.noise_variance])

    @classmethod
    def from_log_vector(cls, theta: np.ndarray) -> GpHyperparams:
        v = np.exp(theta)
        return cls(float(v[0]), tuple(v[1:-1]), float(v[-1]))


@dataclass(frozen=True)
class GpBounds:
    """Box for hyperparameter search; equal ends pin a parameter."""

    signal_variance: tuple[float, float] = (1e-2, 1e2)
    lengthscale: tuple[float, float] = (1e-2, 1e2)
    noise_variance: tuple[float, float] = (1e-8, 1.0)

    def log_box(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        lo = [self.signal_variance[0], *[self.lengthscale[0]] * d, self.noise_variance[0]]
        hi = [self.signal_variance[1], *[self.lengthscale[1]] * d, self.noise_variance[1]]
        lo, hi = np.log(lo), np.log(hi)
        if np.any(lo > hi):
            raise ValueError(f"inverted hyperparameter bounds {self}")
        return lo, hi


@dataclass(frozen=True)
class RestartRecord:
    initial: GpHyperparams
    initial_lml: float
    final: GpHyperparams
    final_lml: float
    evaluations: int


@dataclass(frozen=True, eq=False)
class GpModel:
    """A conditioned GP.

    ``chol`` is the lower Cholesky factor of ``K + (noise_variance + jitter) I``
    over the standardized targets ``train_y``; ``alpha`` solves that system.
    """

    train_x: np.ndarray
    train_y: np.ndarray
    hyper: GpHyperparams
    chol: np.ndarray
    alpha: np.ndarray
    y_mean: float
    y_std: float
    jitter: float = 0.0
    restarts: tuple[RestartRecord, ...] = field(default=())

    @property
    def n(self) -> int:
        return self.train_x.shape[0]

    @property
    def dimension(self) -> int:
        return self.train_x.shape[1]


def se_ard_kernel(a: np.ndarray, b: np.ndarray, hyper: GpHyperparams) -> np.ndarray:
    """``sf2 * exp(-0.5 * sum_j (a_j - b_j)^2 / l_j^2)`` for all row pairs."""
    ls = np.asarray(hyper.lengthscales)
    a = np.atleast_2d(a) / ls
    b = np.atleast_2d(b) / ls
    sq = np.sum(a * a, 1)[:, None] + np.sum(b * b, 1)[None, :] - 2.0 * a @ b.T
    return hyper.signal_variance * np.exp(-0.5 * np.maximum(sq, 0.0))


def _cholesky_with_jitter(kn: np.ndarray, diag_mean: float) -> tuple[np.ndarray, float]:
    """Factor ``kn + jitter * I``, starting at ``1e-9 * diag_mean`` and
    escalating tenfold up to ``1e-3 * diag_mean``."""
    eye = np.eye(kn.shape[0])
    rel = 1e-9
    while rel <= 1e-3 * (1 + 1e-12):
        jitter = rel * diag_mean
        try:
            return np.linalg.cholesky(kn + jitter * eye), jitter
        except np.linalg.LinAlgError:
            rel *= 10.0
    raise NumericalError("Cholesky failed up to jitter 1e-3 * mean(diag K)")


def _standardize(y: np.ndarray) -> tuple[np.ndarray, float, float]:
    mean = float(np.mean(y))
    std = float(np.std(y))
    if not std > 1e-12 * max(1.0, abs(mean)):
        std = 1.0
    return (y - mean) / std, mean, std


def _check_training(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        raise SizeError("cannot fit a GP on an empty training set")
    if x.shape[0] != y.size:
        raise ValueError(f"{x.shape[0]} inputs but {y.size} targets")
    return x, y


def gp_condition(x, y, hyper: GpHyperparams, standardize: bool = True) -> GpModel:
    """Condition a GP on data at fixed hyperparameters."""
    x, y = _check_training(x, y)
    if len(hyper.lengthscales) != x.shape[1]:
        raise ValueError("one lengthscale per input dimension is required")
    ys, y_mean, y_std = _standardize(y) if standardize else (y.copy(), 0.0, 1.0)
    k = se_ard_kernel(x, x, hyper)
    kn = k + hyper.noise_variance * np.eye(len(y))
    chol, jitter = _cholesky_with_jitter(kn, float(np.mean(np.diag(k))))
    alpha = solve_triangular(chol.T, solve_triangular(chol, ys, lower=True), lower=False)
    return GpModel(x, ys, hyper, chol, alpha, y_mean, y_std, jitter)


def gp_log_marginal_likelihood(model: GpModel) -> float:
    """log p(y | X, theta) of the standardized targets, via the stored factor."""
    n = model.n
    return float(
        -0.5 * model.train_y @ model.alpha - np.sum(np.log(np.diag(model.chol))) - 0.5 * n * LOG_2PI
    )


def _lml_at(theta: np.ndarray, x: np.ndarray, ys: np.ndarray, sqdist: np.ndarray) -> float:
    sf2 = math.exp(theta[0])
    ls2 = np.exp(2.0 * theta[1:-1])
    k = sf2 * np.exp(-0.5 * np.tensordot(1.0 / ls2, sqdist, axes=1))
    kn = k + math.exp(theta[-1]) * np.eye(len(ys))
    try:
        chol, _ = _cholesky_with_jitter(kn, sf2)
    except NumericalError:
        return -math.inf
    a = solve_triangular(chol, ys, lower=True, check_finite=False)
    return float(-0.5 * a @ a - np.sum(np.log(np.diag(chol))) - 0.5 * len(ys) * LOG_2PI)


def _compass_search(f, theta0, lo, hi, step=1.0, min_step=1e-3, max_evals=2000):
    """Maximize ``f`` by coordinate-wise +/- steps, halving on stalls."""
    free = np.flatnonzero(hi > lo)
    theta = np.clip(theta0, lo, hi)
    best = f(theta)
    evals = 1
    while step >= min_step and evals < max_evals:
        improved = False
        for j in free:
            for sign in (1.0, -1.0):
                trial = theta.copy()
                trial[j] = min(max(trial[j] + sign * step, lo[j]), hi[j])
                if trial[j] == theta[j]:
                    continue
                val = f(trial)
                evals += 1
                if val > best:
                    theta, best, improved = trial, val, True
                    break
        if not improved:
            step *= 0.5
    return theta, best, evals


def gp_fit(
    x,
    y,
    bounds: GpBounds | None = None,
    restarts: int = 8,
    seed: int = 0,
    max_evals: int = 2000,
) -> GpModel:
    """Fit hyperparameters by maximizing the log marginal likelihood.

    Args:
        x: (n, d) unit-encoded inputs.
        y: n targets in objective units.
        bounds: Hyperparameter box; defaults to :class:`GpBounds`.
        restarts: Number of local searches. The first starts from a fixed
            default point, the rest from seeded log-uniform draws in the box.
        seed: Seed for the restart initializations.
        max_evals: Likelihood evaluations allowed per restart.

    Returns:
        The conditioned model at the best hyperparameters found, with one
        :class:`RestartRecord` per restart.

    Raises:
        SizeError: Empty training set.
        NumericalError: The final factorization fails at maximum jitter.
    """
    x, y = _check_training(x, y)
    bounds = bounds or GpBounds()
    n, d = x.shape
    ys, _, _ = _standardize(y)
    lo, hi = bounds.log_box(d)
    sqdist = (x.T[:, :, None] - x.T[:, None, :]) ** 2

    def lml(theta):
        return _lml_at(theta, x, ys, sqdist)

    rng = np.random.default_rng(seed)
    default = np.log([1.0, *[0.5] * d, 1e-3])
    records = []
    best_theta, best_val = None, -math.inf
    for r in range(max(1, restarts)):
        theta0 = np.clip(default, lo, hi) if r == 0 else rng.uniform(lo, hi)
        init_val = lml(theta0)
        theta, val, evals = _compass_search(lml, theta0, lo, hi, max_evals=max_evals)
        records.append(
            RestartRecord(
                GpHyperparams.from_log_vector(theta0),
                init_val,
                GpHyperparams.from_log_vector(theta),
                val,
                evals,
            )
        )
        if val > best_val:
            best_theta, best_val = theta, val
    if best_theta is None:
        raise NumericalError("no restart produced a finite likelihood")
    model = gp_condition(x, y, GpHyperparams.from_log_vector(best_theta))
    return GpModel(
        model.train_x,
        model.train_y,
        model.hyper,
        model.chol,
        model.alpha,
        model.y_mean,
        model.y_std,
        model.jitter,
        tuple(records),
    )


def gp_predict_many(model: GpModel, queries) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized predictive mean and std (objective units) for (m, d) queries."""
    q = np.atleast_2d(np.asarray(queries, dtype=float))
    if q.shape[1] != model.dimension:
        raise ValueError(f"query dimension {q.shape[1]} != model dimension {model.dimension}")
    ks = se_ard_kernel(q, model.train_x, model.hyper)
    mean = ks @ model.alpha
    v = solve_triangular(model.chol, ks.T, lower=True)
    var = model.hyper.signal_variance - np.sum(v * v, axis=0)
    var = np.maximum(var, 0.0)
    return mean * model.y_std + model.y_mean, np.sqrt(var) * model.y_std


def gp_predict(model: GpModel, query) -> PredictiveDistribution:
    mean, std = gp_predict_many(model, np.asarray(query, dtype=float)[None, :])
    return PredictiveDistribution(float(mean[0]), float(std[0]))
