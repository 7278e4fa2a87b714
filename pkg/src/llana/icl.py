"""In-context-learning prompts, reply parsing, and the three ICL operations.

The operations are:

* :func:`icl_initial_designs` - zero-shot initial configurations;
* :func:`icl_predict` - a surrogate whose mean/std come from repeated
  completions over independently shuffled few-shot contexts;
* :func:`icl_sample_candidates` - configurations conditioned on a target
  score.

Scores inside prompts are in canonical (lower is better) form.
"""

from __future__ import annotations

import logging
import math
import re
from collections.abc import Callable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from llana._seeding import derive_seed
from llana.llm import DEFAULT_MODEL, Backend, ChatRequest, complete_many
from llana.space import (
    Configuration,
    ParamSpec,
    SearchSpace,
    Trajectory,
    Value,
    check,
    sample_uniform,
)

logger = logging.getLogger(__name__)

NUMBER = r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?"
_MARKED_NUMBER = re.compile(r"##\s*(" + NUMBER + r")\s*##")
_ANY_NUMBER = re.compile(r"(?<![\w.])" + NUMBER)
_BLOCK = re.compile(r"##(.*?)##", re.S)
_DICT_BLOCK = re.compile(r"\{[^{}]*\}")

MAX_CONTEXT = 50


class IclParseError(ValueError):
    """An LLM reply could not be turned into a number or configuration."""


class IclPredictionError(RuntimeError):
    """More than half of the surrogate completions were unparseable."""


def format_number(v: float | int) -> str:
    """Six significant digits, shortest form (``1.0 -> '1'``, ``2.5 -> '2.5'``)."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".6g")


def _format_value(p: ParamSpec | None, v: Value) -> str:
    if isinstance(v, str):
        return v
    if p is not None and p.kind == "integer":
        return str(int(v))
    return format_number(v)


def serialize_config(config: Mapping[str, Value], space: SearchSpace | None = None) -> str:
    """``"w1 is 1, w2 is 2.5"`` in space order (config order without a space)."""
    if space is None:
        return ", ".join(f"{k} is {_format_value(None, v)}" for k, v in config.items())
    return ", ".join(f"{p.name} is {_format_value(p, config[p.name])}" for p in space if p.name in config)


def ranges_text(space: SearchSpace) -> str:
    """Human-readable parameter list used by the initial and sampling prompts."""
    parts = []
    for p in space:
        if p.kind == "categorical":
            parts.append(f"{p.name} (categorical, choices [{', '.join(p.categories)}])")
        else:
            scale = "log scale, " if p.log_scale else ""
            parts.append(
                f"{p.name} ({p.kind}, {scale}range [{format_number(p.lower)}, {format_number(p.upper)}])"
            )
    return ", ".join(parts)


_RANGE_ITEM = re.compile(
    r"(\w+) \((continuous|integer), (log scale, )?range \[(" + NUMBER + r"), (" + NUMBER + r")\]\)"
    r"|(\w+) \(categorical, choices \[([^\]]*)\]\)"
)


def parse_ranges_text(text: str) -> SearchSpace:
    """Inverse of :func:`ranges_text`."""
    params = []
    for m in _RANGE_ITEM.finditer(text):
        if m.group(1):
            params.append(
                ParamSpec(m.group(1), m.group(2), float(m.group(4)), float(m.group(5)), log_scale=bool(m.group(3)))
            )
        else:
            params.append(ParamSpec(m.group(6), "categorical", categories=tuple(m.group(7).split(", "))))
    return SearchSpace(tuple(params))


@dataclass(frozen=True)
class TaskCard:
    """Problem description substituted into the prompt headers."""

    model_desc: str
    metric_name: str
    task_kind: str
    n_classes: int
    n_samples: int
    n_features: int
    n_categorical: int
    n_continuous: int
    param_ranges_text: str

    def __post_init__(self) -> None:
        if self.n_categorical + self.n_continuous != self.n_features:
            raise ValueError("n_categorical + n_continuous must equal n_features")

    @classmethod
    def for_space(
        cls,
        space: SearchSpace,
        model_desc: str = "analog placement flow tuned by net weightings",
        metric_name: str = "a post-layout performance metric (lower is better)",
        task_kind: str = "regression",
        n_samples: int = 500,
        n_classes: int = 0,
    ) -> TaskCard:
        n_cat = sum(p.kind == "categorical" for p in space)
        return cls(
            model_desc,
            metric_name,
            task_kind,
            n_classes,
            n_samples,
            space.dimension,
            n_cat,
            space.dimension - n_cat,
            ranges_text(space),
        )

    def fields(self) -> dict:
        return {
            "model": self.model_desc,
            "metric": self.metric_name,
            "task": self.task_kind,
            "n_classes": self.n_classes,
            "n_samples": self.n_samples,
            "n_features": self.n_features,
            "n_categorical": self.n_categorical,
            "n_continuous": self.n_continuous,
            "ranges": self.param_ranges_text,
        }


@dataclass(frozen=True)
class FewShotExample:
    config_text: str
    score_text: str


def examples_from_trajectory(
    trajectory: Trajectory, objective: int = 0, max_context: int = MAX_CONTEXT
) -> list[FewShotExample]:
    """Serialize the most recent ``max_context`` observations."""
    obs = trajectory.observations[-max_context:] if max_context else trajectory.observations
    return [
        FewShotExample(serialize_config(o.config, trajectory.space), format_number(o.scores[objective]))
        for o in obs
    ]


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    text = (resources.files("llana") / "templates" / f"{name}.tmpl").read_text(encoding="utf-8")
    return text.rstrip("\n")


def _shuffled(examples: Sequence[FewShotExample], shuffle_seed: int) -> list[FewShotExample]:
    order = np.random.default_rng(shuffle_seed).permutation(len(examples))
    return [examples[i] for i in order]


def render_initial_prompt(card: TaskCard, n_recs: int) -> str:
    if n_recs < 1:
        raise ValueError("n_recs must be >= 1")
    return load_template("initial").format(n_recs=n_recs, **card.fields())


def render_surrogate_prompt(
    card: TaskCard,
    examples: Sequence[FewShotExample],
    query: Mapping[str, Value] | str,
    shuffle_seed: int,
    space: SearchSpace | None = None,
) -> str:
    """Few-shot regression prompt; examples are permuted by ``shuffle_seed``."""
    if not examples:
        raise ValueError("the surrogate prompt needs at least one example")
    lines = "\n".join(
        f"Hyperparameter configuration: {ex.config_text}. Performance: {ex.score_text}."
        for ex in _shuffled(examples, shuffle_seed)
    )
    query_text = query if isinstance(query, str) else serialize_config(query, space)
    return load_template("surrogate").format(examples=lines, query=query_text, **card.fields())


def render_sampling_prompt(
    card: TaskCard, examples: Sequence[FewShotExample], target_score: float, shuffle_seed: int
) -> str:
    """Conditional-generation prompt asking for a config reaching ``target_score``."""
    if not examples:
        raise ValueError("the sampling prompt needs at least one example")
    lines = "\n".join(
        f"Performance: {ex.score_text}. Hyperparameter config: {ex.config_text}"
        for ex in _shuffled(examples, shuffle_seed)
    )
    return load_template("sampling").format(examples=lines, target=format_number(target_score), **card.fields())


def parse_performance(reply: str) -> float:
    """First ``## number ##`` group, else the first number anywhere."""
    m = _MARKED_NUMBER.search(reply)
    if m is None:
        m = _ANY_NUMBER.search(reply)
    if m is None:
        raise IclParseError(f"no number in reply {reply[:80]!r}")
    value = float(m.group(1) if m.re is _MARKED_NUMBER else m.group(0))
    if not math.isfinite(value):
        raise IclParseError(f"non-finite number in reply {reply[:80]!r}")
    return value


@dataclass(frozen=True)
class ParsedConfiguration:
    config: Configuration
    clipped: tuple[str, ...] = ()


def _find_value(text: str, p: ParamSpec) -> Value | None:
    head = r"(?<![\w])['\"]?" + re.escape(p.name) + r"(?![\w])['\"]?\s*(?:is\b|:|=)\s*"
    if p.kind == "categorical":
        m = re.search(head + r"['\"]?([^,'\"}\]\n]+?)['\"]?\s*(?=,|}|\]|\n|$)", text)
        if m is None:
            return None
        token = m.group(1).strip()
        if token not in p.categories:
            raise IclParseError(f"{p.name}: {token!r} is not one of {list(p.categories)}")
        return token
    m = re.search(head + r"['\"]?(" + NUMBER + ")", text)
    if m is None:
        return None
    return float(m.group(1))


def _parse_in(text: str, space: SearchSpace) -> ParsedConfiguration:
    values: dict[str, Value] = {}
    clipped = []
    missing = []
    for p in space:
        v = _find_value(text, p)
        if v is None:
            missing.append(p.name)
            continue
        if p.kind != "categorical":
            if not math.isfinite(v):
                raise IclParseError(f"{p.name}: non-finite value")
            if v < p.lower or v > p.upper:
                clipped.append(p.name)
                v = min(max(v, p.lower), p.upper)
            if p.kind == "integer":
                v = min(max(int(math.floor(v + 0.5)), int(math.ceil(p.lower))), int(math.floor(p.upper)))
        values[p.name] = v
    if missing:
        raise IclParseError(f"missing parameters {missing}")
    config = Configuration(values)
    check(config, space)
    return ParsedConfiguration(config, tuple(clipped))


def parse_configuration(reply: str, space: SearchSpace) -> ParsedConfiguration:
    """Read a configuration from ``name is value`` or ``{'name': value}`` text.

    Out-of-range numbers are clipped into bounds and reported in
    ``clipped``. The ``## ... ##`` block is tried first, then the whole reply.
    """
    m = _BLOCK.search(reply)
    if m is not None:
        try:
            return _parse_in(m.group(1), space)
        except IclParseError:
            pass
    return _parse_in(reply, space)


@dataclass(frozen=True)
class IclPrediction:
    mean: float
    std: float
    raw_samples: tuple[float, ...]
    n_failures: int


@dataclass(frozen=True)
class CandidateSet(Sequence):
    """Configurations plus where each came from (``icl-sample`` or ``backfill``)."""

    configs: tuple[Configuration, ...]
    provenance: tuple[str, ...]
    clip_events: int = 0

    def __getitem__(self, i):
        return self.configs[i]

    def __len__(self) -> int:
        return len(self.configs)

    def __iter__(self) -> Iterator[Configuration]:
        return iter(self.configs)

    @property
    def n_backfilled(self) -> int:
        return sum(p == "backfill" for p in self.provenance)


Backfill = Callable[[int, int], list[Configuration]]


def _uniform_backfill(space: SearchSpace) -> Backfill:
    return lambda n, seed: sample_uniform(space, seed, n)


@dataclass(frozen=True)
class LlmSettings:
    model_name: str = DEFAULT_MODEL
    temperature: float = 1.0
    max_tokens: int = 512


def _request(prompt: str, llm: LlmSettings) -> ChatRequest:
    return ChatRequest.from_prompt(
        prompt, model_name=llm.model_name, temperature=llm.temperature, max_tokens=llm.max_tokens
    )


def icl_predict(
    backend: Backend,
    card: TaskCard,
    trajectory: Trajectory,
    query: Configuration,
    k_samples: int = 10,
    seed: int = 0,
    objective: int = 0,
    max_context: int = MAX_CONTEXT,
    llm: LlmSettings = LlmSettings(),
) -> IclPrediction:
    """Predict the score of ``query`` from ``k_samples`` shuffled-context completions.

    Returns:
        Sample mean and sample standard deviation of the parsed replies, the
        std floored at ``1e-6 * max(1, |mean|)``.

    Raises:
        IclPredictionError: More than half of the replies were unparseable.
    """
    if len(trajectory) == 0:
        raise ValueError("icl_predict needs a nonempty trajectory")
    if k_samples < 2:
        raise ValueError("k_samples must be >= 2")
    examples = examples_from_trajectory(trajectory, objective, max_context)
    query_text = serialize_config(query, trajectory.space)
    requests = [
        _request(render_surrogate_prompt(card, examples, query_text, derive_seed(seed, "predict", i)), llm)
        for i in range(k_samples)
    ]
    values, failures = [], 0
    for resp in complete_many(backend, requests):
        try:
            values.append(parse_performance(resp.completions[0]))
        except IclParseError:
            failures += 1
    if failures * 2 > k_samples:
        raise IclPredictionError(f"{failures} of {k_samples} surrogate replies were unparseable")
    arr = np.asarray(values)
    mean = float(np.mean(arr))
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    floor = 1e-6 * max(1.0, abs(mean))
    return IclPrediction(mean, max(std, floor), tuple(values), failures)


def icl_sample_candidates(
    backend: Backend,
    card: TaskCard,
    trajectory: Trajectory,
    target_score: float,
    m_candidates: int,
    seed: int = 0,
    objective: int = 0,
    max_context: int = MAX_CONTEXT,
    max_extra_attempts: int = 3,
    backfill: Backfill | None = None,
    llm: LlmSettings = LlmSettings(),
) -> CandidateSet:
    """Generate ``m_candidates`` distinct valid configurations aimed at ``target_score``.

    Each slot gets one completion plus up to ``max_extra_attempts`` retries
    (fresh shuffles) when its reply is unparseable or duplicates an earlier
    candidate. Slots still empty afterwards are backfilled, by default with
    uniform samples.
    """
    if len(trajectory) == 0:
        raise ValueError("icl_sample_candidates needs a nonempty trajectory")
    if m_candidates < 1:
        raise ValueError("m_candidates must be >= 1")
    space = trajectory.space
    backfill = backfill or _uniform_backfill(space)
    examples = examples_from_trajectory(trajectory, objective, max_context)
    accepted: dict[int, Configuration] = {}
    seen: set[Configuration] = set()
    clip_events = 0
    pending = list(range(m_candidates))
    for attempt in range(max_extra_attempts + 1):
        if not pending:
            break
        requests = [
            _request(
                render_sampling_prompt(card, examples, target_score, derive_seed(seed, "sample", i, attempt)), llm
            )
            for i in pending
        ]
        still = []
        for i, resp in zip(pending, complete_many(backend, requests)):
            try:
                parsed = parse_configuration(resp.completions[0], space)
            except (IclParseError, ValueError):
                still.append(i)
                continue
            if parsed.config in seen:
                still.append(i)
                continue
            clip_events += bool(parsed.clipped)
            seen.add(parsed.config)
            accepted[i] = parsed.config
        pending = still
    if pending:
        logger.warning("backfilling %d of %d candidates", len(pending), m_candidates)
        fills = _distinct_backfill(backfill, len(pending), derive_seed(seed, "backfill"), seen)
        for i, cfg in zip(pending, fills):
            accepted[i] = cfg
    provenance = tuple("backfill" if i in pending else "icl-sample" for i in range(m_candidates))
    return CandidateSet(tuple(accepted[i] for i in range(m_candidates)), provenance, clip_events)


def _distinct_backfill(backfill: Backfill, n: int, seed: int, seen: set) -> list[Configuration]:
    out = []
    for round_ in range(8):
        for cfg in backfill(n - len(out), derive_seed(seed, round_)):
            if cfg not in seen:
                seen.add(cfg)
                out.append(cfg)
        if len(out) == n:
            return out
    # Tiny discrete spaces may not hold n distinct points; allow repeats.
    out.extend(backfill(n - len(out), derive_seed(seed, "final")))
    return out


def icl_initial_designs(
    backend: Backend,
    card: TaskCard,
    n_recs: int,
    space: SearchSpace,
    seed: int = 0,
    backfill: Backfill | None = None,
    llm: LlmSettings = LlmSettings(),
) -> CandidateSet:
    """Zero-shot initial designs; bad or missing entries are backfilled."""
    if n_recs < 1:
        raise ValueError("n_recs must be >= 1")
    backfill = backfill or _uniform_backfill(space)
    reply = backend.complete(_request(render_initial_prompt(card, n_recs), llm)).completions[0]
    blocks = _DICT_BLOCK.findall(reply) or [line for line in reply.splitlines() if line.strip()]
    configs: list[Configuration] = []
    seen: set[Configuration] = set()
    clip_events = 0
    for block in blocks:
        if len(configs) == n_recs:
            break
        if "None" in block:
            continue
        try:
            parsed = _parse_in(block, space)
        except (IclParseError, ValueError):
            continue
        if parsed.config in seen:
            continue
        clip_events += bool(parsed.clipped)
        seen.add(parsed.config)
        configs.append(parsed.config)
    provenance = ["icl-sample"] * len(configs)
    short = n_recs - len(configs)
    if short:
        logger.warning("backfilling %d of %d initial designs", short, n_recs)
        configs.extend(_distinct_backfill(backfill, short, derive_seed(seed, "init-backfill"), seen))
        provenance.extend(["backfill"] * short)
    return CandidateSet(tuple(configs), tuple(provenance), clip_events)
