"""Optimization loops: LLM-driven BO, classical GP/forest BO, and MOBO.

All loops work in canonical minimize form and evaluate exactly
``trial_budget`` configurations. When the oracle exposes a finite ``pool``
(a tabular oracle), every evaluated configuration is drawn from the
untried part of that pool.
"""

from __future__ import annotations

import json
import logging
import time
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Protocol

import numpy as np

from llana._seeding import derive_rng, derive_seed
from llana.acquisition import AcquisitionContext, expected_improvement_array, score_candidates, target_score
from llana.forest import forest_fit, forest_predict_many
from llana.gp import GpBounds, NumericalError, gp_fit, gp_predict_many
from llana.icl import (
    MAX_CONTEXT,
    IclPredictionError,
    LlmSettings,
    TaskCard,
    icl_initial_designs,
    icl_predict,
    icl_sample_candidates,
)
from llana.llm import Backend, LlmError
from llana.predictive import PredictiveDistribution
from llana.space import (
    Configuration,
    SearchSpace,
    SizeError,
    Trajectory,
    encode_many,
    sample_uniform,
)

logger = logging.getLogger(__name__)

POOL_SIZE = 512
MOBO_DRAWS = 64


class Oracle(Protocol):
    objective_names: tuple[str, ...]
    directions: tuple[str, ...]

    def __call__(self, config: Mapping) -> np.ndarray: ...


class FunctionOracle:
    """Wrap ``fn(config) -> score(s)`` as an oracle."""

    def __init__(
        self,
        fn: Callable[[Mapping], float | Sequence[float]],
        objective_names: Sequence[str] = ("f",),
        directions: Sequence[str] | None = None,
    ):
        self.fn = fn
        self.objective_names = tuple(objective_names)
        self.directions = tuple(directions or ("minimize",) * len(self.objective_names))
        self.pool = None

    def __call__(self, config):
        return np.atleast_1d(np.asarray(self.fn(config), dtype=float))


class RunAborted(RuntimeError):
    """A run stopped early; ``record`` holds the trials completed so far."""

    def __init__(self, message: str, record: RunRecord):
        super().__init__(message)
        self.record = record


@dataclass(frozen=True)
class BudgetedRun:
    trial_budget: int = 30
    n_random: int = 5
    m_candidates: int = 20
    exploration_alpha: float = -0.1
    seed: int = 0
    surrogate_kind: Literal["gp", "forest", "icl"] = "gp"
    sampler_kind: Literal["icl", "uniform-pool"] = "uniform-pool"

    def __post_init__(self) -> None:
        if self.n_random < 1 or self.m_candidates < 1:
            raise ValueError("n_random and m_candidates must be >= 1")
        if self.trial_budget < self.n_random:
            raise ValueError("trial_budget must be >= n_random")
        if self.surrogate_kind not in ("gp", "forest", "icl"):
            raise ValueError(f"unknown surrogate {self.surrogate_kind!r}")
        if self.sampler_kind not in ("icl", "uniform-pool"):
            raise ValueError(f"unknown sampler {self.sampler_kind!r}")


# --- Pareto archive and hypervolume -------------------------------------------


def dominates(a, b) -> bool:
    """``a`` dominates ``b`` (minimize): no worse anywhere, better somewhere."""
    a, b = np.asarray(a), np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


@dataclass(frozen=True)
class ParetoArchive:
    points: tuple[tuple[Configuration, tuple[float, ...]], ...]
    reference: tuple[float, ...]
    discarded: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "reference", tuple(float(r) for r in self.reference))

    @property
    def scores(self) -> np.ndarray:
        return np.array([s for _, s in self.points], dtype=float).reshape(-1, len(self.reference))


def pareto_update(archive: ParetoArchive, point: tuple[Configuration, Sequence[float]]) -> ParetoArchive:
    """Insert ``point`` unless it is dominated, equal to an archived point,
    or outside the reference box; evict whatever it dominates."""
    config, scores = point
    scores = tuple(float(s) for s in scores)
    if len(scores) != len(archive.reference):
        raise ValueError("score vector length does not match the reference point")
    if any(s > r for s, r in zip(scores, archive.reference)):
        return ParetoArchive(archive.points, archive.reference, archive.discarded + 1)
    for _, s in archive.points:
        if s == scores or dominates(s, scores):
            return archive
    kept = tuple(p for p in archive.points if not dominates(scores, p[1]))
    return ParetoArchive(kept + ((config, scores),), archive.reference, archive.discarded)


def hypervolume_2d(points, reference) -> float:
    """Area dominated by ``points`` inside the box bounded by ``reference``."""
    ref = np.asarray(reference, dtype=float)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    pts = pts[np.all(pts < ref, axis=1)]
    if pts.size == 0:
        return 0.0
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    hv, ceiling = 0.0, ref[1]
    for x, y in pts:
        if y < ceiling:
            hv += (ref[0] - x) * (ceiling - y)
            ceiling = y
    return float(hv)


def hypervolume(archive: ParetoArchive) -> float:
    if len(archive.reference) != 2:
        raise NotImplementedError("hypervolume is implemented for two objectives only")
    return hypervolume_2d(archive.scores, archive.reference)


def hypervolume_improvement_2d(front, reference, queries) -> np.ndarray:
    """Exclusive area each query point would add to ``front`` (vectorized).

    Equals ``hypervolume_2d(front + [q]) - hypervolume_2d(front)`` for every
    row ``q`` of ``queries`` (any leading shape, last axis 2).
    """
    ref = np.asarray(reference, dtype=float)
    q = np.asarray(queries, dtype=float)
    f = np.asarray(front, dtype=float).reshape(-1, 2)
    f = f[np.all(f < ref, axis=1)]
    f = f[np.lexsort((f[:, 1], f[:, 0]))]
    # staircase: on [x_i, x_{i+1}) the archive dominates everything above h_i
    xs, hs, ceiling = [-np.inf], [ref[1]], ref[1]
    for x, y in f:
        if y < ceiling:
            xs.append(x)
            hs.append(y)
            ceiling = y
    lo = np.asarray(xs)
    hi = np.append(lo[1:], ref[0])
    h = np.minimum(np.asarray(hs), ref[1])
    q1, q2 = q[..., 0:1], q[..., 1:2]
    width = np.clip(np.minimum(hi, ref[0]) - np.maximum(lo, q1), 0.0, None)
    height = np.clip(h - q2, 0.0, None)
    return np.sum(width * height, axis=-1)


# --- run records -----------------------------------------------------------------


@dataclass(frozen=True)
class RunRecord:
    """Everything a run produced, in trial order.

    ``best_so_far`` tracks the first objective (canonical form);
    ``hypervolumes`` is filled by MOBO runs only.
    """

    trajectory: Trajectory
    best_so_far: tuple[float, ...]
    provenance: tuple[str, ...]
    wall_ms: tuple[float, ...]
    kind: str
    seed: int
    archive: ParetoArchive | None = None
    hypervolumes: tuple[float, ...] = ()
    summary: Mapping = field(default_factory=dict)

    @property
    def best(self) -> float:
        return self.best_so_far[-1] if self.best_so_far else float("nan")


def _config_json(config: Mapping) -> dict:
    return {k: (v if isinstance(v, str) else (int(v) if isinstance(v, (int, np.integer)) else float(v)))
            for k, v in config.items()}


def record_lines(record: RunRecord, timings: bool = True) -> list[str]:
    """JSON-lines rendering: one object per trial, then a summary object.

    With ``timings=False`` the ``ms_elapsed`` fields are null, which makes
    the output byte-identical across reruns with the same seed.
    """
    lines = []
    for obs, best, prov, ms in zip(record.trajectory.observations, record.best_so_far, record.provenance, record.wall_ms):
        lines.append(
            json.dumps(
                {
                    "trial": obs.trial_index,
                    "config": _config_json(obs.config),
                    "scores": list(obs.scores),
                    "best_so_far": best,
                    "provenance": prov,
                    "ms_elapsed": round(ms, 3) if timings else None,
                }
            )
        )
    summary = {
        "kind": record.kind,
        "seed": record.seed,
        "trials": len(record.trajectory),
        "objectives": list(record.trajectory.objective_names),
        "best": record.best if record.best_so_far else None,
        **record.summary,
    }
    tail = {"summary": summary}
    if record.archive is not None:
        tail["archive"] = [{"config": _config_json(c), "scores": list(s)} for c, s in record.archive.points]
        tail["reference"] = list(record.archive.reference)
        tail["hypervolume"] = record.hypervolumes[-1] if record.hypervolumes else 0.0
    lines.append(json.dumps(tail))
    return lines


def write_run_record(record: RunRecord, path: str | Path, timings: bool = True) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(record_lines(record, timings)) + "\n", encoding="utf-8")
    return path


class _Recorder:
    def __init__(self, space: SearchSpace, oracle: Oracle, kind: str, seed: int, out_path, timings: bool):
        self.trajectory = Trajectory(space, oracle.objective_names, oracle.directions)
        self.oracle = oracle
        self.best: list[float] = []
        self.provenance: list[str] = []
        self.wall: list[float] = []
        self.kind = kind
        self.seed = seed
        self.out_path = out_path
        self.timings = timings
        self.archive: ParetoArchive | None = None
        self.hv: list[float] = []
        self.summary: dict = {}
        self.t0 = time.perf_counter()

    def evaluate(self, config: Configuration, provenance: str) -> np.ndarray:
        try:
            raw = self.oracle(config)
        except Exception as exc:
            self.abort(f"oracle failed at trial {len(self.trajectory)}: {exc}", exc)
        self.trajectory = self.trajectory.append(config, raw)
        y = self.trajectory.observations[-1].scores[0]
        self.best.append(min(self.best[-1], y) if self.best else y)
        self.provenance.append(provenance)
        now = time.perf_counter()
        self.wall.append((now - self.t0) * 1000.0)
        self.t0 = now
        return np.asarray(self.trajectory.observations[-1].scores)

    def record(self) -> RunRecord:
        return RunRecord(
            self.trajectory,
            tuple(self.best),
            tuple(self.provenance),
            tuple(self.wall),
            self.kind,
            self.seed,
            self.archive,
            tuple(self.hv),
            dict(self.summary),
        )

    def finish(self) -> RunRecord:
        rec = self.record()
        if self.out_path is not None:
            write_run_record(rec, self.out_path, self.timings)
        return rec

    def abort(self, message: str, cause: BaseException):
        self.summary["aborted"] = message
        rec = self.finish()
        raise RunAborted(message, rec) from cause


# --- pool helpers -----------------------------------------------------------------


class _Pool:
    """Untried members of a finite oracle pool."""

    def __init__(self, configs: Sequence[Configuration], space: SearchSpace):
        self.configs = list(configs)
        self.units = encode_many(self.configs, space)
        self.space = space
        self.untried = np.ones(len(self.configs), dtype=bool)

    def mark(self, config: Configuration) -> None:
        u = encode_many([config], self.space)[0]
        d = np.sum((self.units - u) ** 2, axis=1)
        self.untried[int(np.argmin(d))] = False

    def remaining(self) -> list[Configuration]:
        return [self.configs[i] for i in np.flatnonzero(self.untried)]

    def random(self, n: int, seed: int) -> list[Configuration]:
        idx = np.flatnonzero(self.untried)
        if idx.size == 0:
            raise SizeError("candidate pool exhausted")
        pick = np.random.default_rng(seed).choice(idx, size=min(n, idx.size), replace=False)
        out = [self.configs[i] for i in pick]
        while len(out) < n:
            out.append(out[len(out) % idx.size])
        return out

    def snap(self, configs: Sequence[Configuration]) -> list[Configuration]:
        """Nearest untried member for each config, without reusing members."""
        free = self.untried.copy()
        out = []
        for u in encode_many(list(configs), self.space):
            idx = np.flatnonzero(free)
            if idx.size == 0:
                idx = np.flatnonzero(self.untried)
            j = idx[int(np.argmin(np.sum((self.units[idx] - u) ** 2, axis=1)))]
            free[j] = False
            out.append(self.configs[j])
        return out


def _pool_of(oracle, space) -> _Pool | None:
    configs = getattr(oracle, "pool", None)
    return _Pool(configs, space) if configs else None


def _initial_uniform(space, pool: _Pool | None, n: int, seed: int) -> list[Configuration]:
    return pool.random(n, seed) if pool is not None else sample_uniform(space, seed, n)


# --- loops -------------------------------------------------------------------------


def run_llana(
    oracle: Oracle,
    space: SearchSpace,
    run: BudgetedRun,
    backend: Backend,
    card: TaskCard | None = None,
    k_samples: int = 10,
    max_context: int = MAX_CONTEXT,
    llm: LlmSettings = LlmSettings(),
    gp_restarts: int = 8,
    out_path: str | Path | None = None,
    timings: bool = True,
) -> RunRecord:
    """LLM-driven BO: ICL initial design, ICL candidates, ICL surrogate, EI.

    Each trial after the initial design computes the target score from the
    observed range, samples ``m_candidates`` configurations conditioned on
    it, predicts each with ``k_samples`` shuffled-context completions, and
    evaluates the EI maximizer.

    ``run.sampler_kind="uniform-pool"`` swaps the LLM sampler (and the LLM
    initial design) for uniform draws, and ``run.surrogate_kind`` of
    ``"gp"``/``"forest"`` swaps the ICL surrogate for a fitted model, so
    each LLM component can be studied on its own. The all-classical
    combination belongs to :func:`run_bo`.

    Raises:
        RunAborted: The oracle or the LLM backend failed; the partial record
            is attached (and written to ``out_path`` when given).
    """
    if run.surrogate_kind != "icl" and run.sampler_kind != "icl":
        raise ValueError("run_llana needs an ICL surrogate or an ICL sampler; use run_bo otherwise")
    rec = _Recorder(space, oracle, f"llana-{run.surrogate_kind}-{run.sampler_kind}", run.seed, out_path, timings)
    pool = _pool_of(oracle, space)
    n_samples = len(pool.configs) if pool is not None else 500
    card = card or TaskCard.for_space(space, metric_name=oracle.objective_names[0], n_samples=n_samples)
    backfill = pool.random if pool is not None else None

    if run.sampler_kind == "icl":
        try:
            init = icl_initial_designs(
                backend, card, run.n_random, space, derive_seed(run.seed, "init"), backfill=backfill, llm=llm
            )
        except LlmError as exc:
            rec.abort(f"LLM backend failed during initial design: {exc}", exc)
        init_configs = pool.snap(init.configs) if pool is not None else list(init.configs)
        init_prov = init.provenance
    else:
        init_configs = _initial_uniform(space, pool, run.n_random, derive_seed(run.seed, "init"))
        init_prov = ("random",) * len(init_configs)
    for cfg, prov in zip(init_configs, init_prov):
        rec.evaluate(cfg, prov)
        if pool is not None:
            pool.mark(cfg)

    for t in range(run.n_random, run.trial_budget):
        scores = rec.trajectory.scores(0)
        ctx = AcquisitionContext(float(np.min(scores)), run.exploration_alpha, float(np.min(scores)), float(np.max(scores)))
        try:
            if run.sampler_kind == "icl":
                cands = icl_sample_candidates(
                    backend,
                    card,
                    rec.trajectory,
                    target_score(ctx),
                    run.m_candidates,
                    derive_seed(run.seed, "sample", t),
                    max_context=max_context,
                    backfill=backfill,
                    llm=llm,
                )
                configs, provenance = (pool.snap(cands.configs) if pool is not None else list(cands.configs)), cands.provenance
            else:
                configs = _initial_uniform(space, pool, run.m_candidates, derive_seed(run.seed, "sample", t))
                provenance = ("random",) * len(configs)
            if run.surrogate_kind == "icl":
                preds = _icl_predictions(backend, card, rec.trajectory, configs, k_samples, run.seed, t, max_context, llm)
            else:
                preds = _model_predictions(run.surrogate_kind, rec.trajectory, configs, run.seed, t, gp_restarts)
        except LlmError as exc:
            rec.abort(f"LLM backend failed at trial {t}: {exc}", exc)
        scored = [(j, p) for j, p in enumerate(preds) if p is not None]
        if scored:
            _, best_j = score_candidates([p for _, p in scored], ctx.best_score)
            pick = scored[best_j][0]
        else:
            pick = 0
        cfg = configs[pick]
        rec.evaluate(cfg, provenance[pick])
        if pool is not None:
            pool.mark(cfg)
    return rec.finish()


def _icl_predictions(backend, card, trajectory, configs, k_samples, seed, t, max_context, llm):
    preds: list[PredictiveDistribution | None] = []
    for j, cfg in enumerate(configs):
        try:
            p = icl_predict(
                backend, card, trajectory, cfg, k_samples, derive_seed(seed, "predict", t, j),
                max_context=max_context, llm=llm,
            )
            preds.append(PredictiveDistribution(p.mean, p.std))
        except IclPredictionError as exc:
            logger.warning("trial %d candidate %d: %s", t, j, exc)
            preds.append(None)
    return preds


def _model_predictions(kind, trajectory, configs, seed, t, gp_restarts):
    space = trajectory.space
    try:
        mean, std = _fit_predict(
            kind, encode_many(trajectory.configs, space), trajectory.scores(0), encode_many(configs, space),
            derive_seed(seed, "fit", t), gp_restarts, None,
        )
    except (NumericalError, SizeError, np.linalg.LinAlgError) as exc:
        logger.warning("trial %d: surrogate fit failed (%s)", t, exc)
        return [None] * len(configs)
    return [PredictiveDistribution(float(m), float(s)) for m, s in zip(mean, std)]


def _fit_predict(kind: str, x, y, queries, seed: int, gp_restarts: int, gp_bounds: GpBounds | None):
    if kind == "gp":
        model = gp_fit(x, y, bounds=gp_bounds, restarts=gp_restarts, seed=seed)
        return gp_predict_many(model, queries)
    if kind == "forest":
        model = forest_fit(x, y, seed=seed)
        return forest_predict_many(model, queries)
    raise ValueError(f"unknown surrogate {kind!r}")


def run_bo(
    oracle: Oracle,
    space: SearchSpace,
    run: BudgetedRun,
    gp_restarts: int = 8,
    gp_bounds: GpBounds | None = None,
    pool_size: int = POOL_SIZE,
    out_path: str | Path | None = None,
    timings: bool = True,
) -> RunRecord:
    """Classical BO with a GP or forest surrogate and EI over a random pool.

    For a tabular oracle the candidate pool is every untried table row;
    otherwise it is ``pool_size`` fresh uniform draws per trial. A failed
    surrogate fit falls back to one uniform draw, logged as ``fallback``.
    """
    if run.surrogate_kind not in ("gp", "forest"):
        raise ValueError("run_bo needs surrogate_kind 'gp' or 'forest'")
    rec = _Recorder(space, oracle, f"bo-{run.surrogate_kind}", run.seed, out_path, timings)
    pool = _pool_of(oracle, space)
    for cfg in _initial_uniform(space, pool, run.n_random, derive_seed(run.seed, "init")):
        rec.evaluate(cfg, "random")
        if pool is not None:
            pool.mark(cfg)
    for t in range(run.n_random, run.trial_budget):
        cands = pool.remaining() if pool is not None else sample_uniform(space, derive_seed(run.seed, "pool", t), pool_size)
        x = encode_many(rec.trajectory.configs, space)
        y = rec.trajectory.scores(0)
        try:
            mean, std = _fit_predict(
                run.surrogate_kind, x, y, encode_many(cands, space), derive_seed(run.seed, "fit", t), gp_restarts, gp_bounds
            )
            ei = expected_improvement_array(mean, std, float(np.min(y)))
            cfg, prov = cands[int(np.argmax(ei))], "ei"
        except (NumericalError, SizeError, np.linalg.LinAlgError) as exc:
            logger.warning("trial %d: surrogate fit failed (%s); sampling uniformly", t, exc)
            cfg, prov = _initial_uniform(space, pool, 1, derive_seed(run.seed, "fallback", t))[0], "fallback"
        rec.evaluate(cfg, prov)
        if pool is not None:
            pool.mark(cfg)
    return rec.finish()


def run_mobo(
    oracle: Oracle,
    space: SearchSpace,
    run: BudgetedRun,
    reference: Sequence[float],
    gp_restarts: int = 8,
    gp_bounds: GpBounds | None = None,
    pool_size: int = POOL_SIZE,
    n_draws: int = MOBO_DRAWS,
    out_path: str | Path | None = None,
    timings: bool = True,
) -> RunRecord:
    """Bi-objective BO with one GP per objective and Monte Carlo EHVI.

    The first ``n_random`` trials are uniform. Afterwards each candidate in
    the pool is scored by the mean hypervolume improvement of ``n_draws``
    independent draws from the GP marginals, and the maximizer is
    evaluated. The Pareto archive is updated after every evaluation.
    """
    if len(oracle.objective_names) != 2 or len(reference) != 2:
        raise NotImplementedError("run_mobo supports exactly two objectives")
    rec = _Recorder(space, oracle, "mobo", run.seed, out_path, timings)
    rec.archive = ParetoArchive((), tuple(reference))
    pool = _pool_of(oracle, space)
    init = _initial_uniform(space, pool, run.n_random, derive_seed(run.seed, "init"))

    def commit(cfg, prov):
        scores = rec.evaluate(cfg, prov)
        rec.archive = pareto_update(rec.archive, (cfg, scores))
        rec.hv.append(hypervolume(rec.archive))
        if pool is not None:
            pool.mark(cfg)

    for cfg in init:
        commit(cfg, "random")
    for t in range(run.n_random, run.trial_budget):
        cands = pool.remaining() if pool is not None else sample_uniform(space, derive_seed(run.seed, "pool", t), pool_size)
        xq = encode_many(cands, space)
        x = encode_many(rec.trajectory.configs, space)
        y = rec.trajectory.scores()
        try:
            stats = [
                gp_predict_many(gp_fit(x, y[:, i], gp_bounds, gp_restarts, derive_seed(run.seed, "fit", t, i)), xq)
                for i in range(2)
            ]
            mean = np.stack([s[0] for s in stats], axis=-1)
            std = np.stack([s[1] for s in stats], axis=-1)
            z = derive_rng(run.seed, "draws", t).standard_normal((n_draws, len(cands), 2))
            hvi = hypervolume_improvement_2d(rec.archive.scores, rec.archive.reference, mean + std * z)
            cfg, prov = cands[int(np.argmax(hvi.mean(axis=0)))], "ehvi"
        except (NumericalError, SizeError, np.linalg.LinAlgError) as exc:
            logger.warning("trial %d: GP fit failed (%s); sampling uniformly", t, exc)
            cfg, prov = _initial_uniform(space, pool, 1, derive_seed(run.seed, "fallback", t))[0], "fallback"
        commit(cfg, prov)
    return rec.finish()


def read_run_record(path: str | Path) -> tuple[list[dict], dict]:
    """Parse a JSON-lines run record into its trial rows and final summary object."""
    lines = [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
    if not lines or "summary" not in lines[-1]:
        raise ValueError(f"{path} is not a run record")
    return lines[:-1], lines[-1]
