"""Offline stand-ins for the LLM.

:func:`heuristic_responder` imitates a reasonable model from the prompt text
alone: a distance-weighted nearest-neighbour guess for surrogate prompts, a
perturbation of the example closest to the target for sampling prompts,
and random in-range dictionaries for initial designs.

:class:`TruthfulResponder` answers from a ground-truth table. It isolates
the optimization loop from LLM quality in tests.

Both are deterministic functions of ``(messages, sample_index, mock_seed)``.
"""

from __future__ import annotations

import hashlib
import math
import re
from collections.abc import Mapping, Sequence

import numpy as np

from llana.icl import NUMBER, format_number, parse_ranges_text, serialize_config
from llana.space import Configuration, SearchSpace, encode_many, encode_unit, sample_uniform

INITIAL_MARK = "Assist me with automated machine learning"
SURROGATE_MARK = "Your response should only contain the predicted accuracy"
SAMPLING_MARK = "Recommend a config to achieve"

_SURR_LINE = re.compile(r"^Hyperparameter configuration: (.*)\. Performance: (" + NUMBER + r")\.$", re.M)
_SURR_QUERY = re.compile(r"^Hyperparameter configuration: (.*)\. Performance:$", re.M)
_SAMP_LINE = re.compile(r"^Performance: (" + NUMBER + r")\. Hyperparameter config: (.*)$", re.M)
_SAMP_TARGET = re.compile(r"^Performance: (" + NUMBER + r")\nHyperparameter config:$", re.M)
_INIT_RANGES = re.compile(r"Explore these hyperparameters: (.*)\. Suggest (\d+) ")
_SAMP_RANGES = re.compile(r"Hyperparameter ranges: (.*)\.\n")
_PAIR = re.compile(r"(\w+) is ([^,]+)")


def prompt_of(messages: Sequence[tuple[str, str]]) -> str:
    return messages[-1][1]


def _rng(messages, sample_index: int, mock_seed: int) -> np.random.Generator:
    h = hashlib.sha256()
    for role, content in messages:
        h.update(role.encode())
        h.update(b"\0")
        h.update(content.encode())
        h.update(b"\0")
    h.update(f"{sample_index}:{mock_seed}".encode())
    return np.random.default_rng(int.from_bytes(h.digest()[:8], "big"))


def _pairs(text: str) -> dict[str, str]:
    return {k: v.strip() for k, v in _PAIR.findall(text)}


def _numeric_matrix(rows: list[dict[str, str]], names: list[str]) -> np.ndarray:
    mat = np.array([[float(r[n]) for n in names] for r in rows])
    if np.all(mat > 0):
        mat = np.log(mat)
    return mat


def _surrogate_guess(prompt: str, rng: np.random.Generator) -> float:
    examples = [(_pairs(c), float(p)) for c, p in _SURR_LINE.findall(prompt)]
    q = _SURR_QUERY.search(prompt)
    perf = np.array([p for _, p in examples])
    if q is None or not examples:
        return float(np.mean(perf)) if examples else 0.0
    query = _pairs(q.group(1))
    names = list(query)
    try:
        mat = _numeric_matrix([c for c, _ in examples] + [query], names)
    except (KeyError, ValueError):
        return float(np.mean(perf))
    scale = mat.std(axis=0)
    scale[scale == 0] = 1.0
    mat = mat / scale
    dist = np.sqrt(np.sum((mat[:-1] - mat[-1]) ** 2, axis=1))
    k = min(3, len(examples))
    near = np.argsort(dist, kind="stable")[:k]
    w = 1.0 / (dist[near] + 1e-3)
    guess = float(np.sum(w * perf[near]) / np.sum(w))
    spread = float(np.std(perf)) if len(perf) > 1 else abs(guess) * 0.1 + 1e-3
    return guess + 0.1 * spread * float(rng.standard_normal())


def _sampling_guess(prompt: str, rng: np.random.Generator) -> str:
    examples = [(float(p), _pairs(c)) for p, c in _SAMP_LINE.findall(prompt)]
    ranges = _SAMP_RANGES.search(prompt)
    target = _SAMP_TARGET.search(prompt)
    space = parse_ranges_text(ranges.group(1)) if ranges else None
    if not examples or target is None or space is None:
        return "## ##"
    t = float(target.group(1))
    perf = np.array([p for p, _ in examples])
    order = np.argsort(np.abs(perf - t), kind="stable")
    base = examples[order[min(int(rng.integers(3)), len(order) - 1)]][1]
    values = {}
    for p in space:
        raw = base.get(p.name)
        if p.kind == "categorical":
            values[p.name] = raw if raw in p.categories and rng.random() > 0.2 else p.categories[
                int(rng.integers(len(p.categories)))
            ]
            continue
        v = float(raw) if raw is not None else 0.5 * (p.lower + p.upper)
        if p.log_scale:
            v = v * math.exp(0.25 * rng.standard_normal())
        else:
            v = v + 0.1 * (p.upper - p.lower) * rng.standard_normal()
        v = min(max(v, p.lower), p.upper)
        values[p.name] = int(round(v)) if p.kind == "integer" else v
    return f"## {serialize_config(values, space)} ##"


def _initial_guess(prompt: str, rng: np.random.Generator) -> str:
    m = _INIT_RANGES.search(prompt)
    if m is None:
        return "[]"
    space = parse_ranges_text(m.group(1))
    configs = sample_uniform(space, rng, int(m.group(2)))
    return "\n".join(_dict_text(c, space) for c in configs)


def _dict_text(config: Mapping, space: SearchSpace) -> str:
    items = []
    for p in space:
        v = config[p.name]
        items.append(f"'{p.name}': " + (f"'{v}'" if isinstance(v, str) else format_number(v)))
    return "{" + ", ".join(items) + "}"


def heuristic_responder(messages: Sequence[tuple[str, str]], sample_index: int, mock_seed: int) -> str:
    prompt = prompt_of(messages)
    rng = _rng(messages, sample_index, mock_seed)
    if SURROGATE_MARK in prompt:
        return f"## {format_number(_surrogate_guess(prompt, rng))} ##"
    if SAMPLING_MARK in prompt:
        return _sampling_guess(prompt, rng)
    if INITIAL_MARK in prompt:
        return _initial_guess(prompt, rng)
    return "I cannot help with that."


class TruthfulResponder:
    """Answers from ground truth over a finite pool.

    * surrogate prompts: the true score of the queried configuration;
    * sampling prompts: the best pool configuration absent from the prompt's
      examples (every completion proposes the same point);
    * initial prompts: seeded random pool members as dictionaries.

    Args:
        pool: Configurations with their canonical (minimize) scores.
        space: The pool's search space.
    """

    def __init__(self, pool: Sequence[tuple[Configuration, float]], space: SearchSpace):
        self.space = space
        self.configs = [c for c, _ in pool]
        self.scores = np.array([s for _, s in pool], dtype=float)
        self.units = encode_many(self.configs, space)
        self.by_text = {serialize_config(c, space): s for c, s in pool}

    def _nearest(self, values: Mapping[str, str]) -> int:
        cfg = Configuration({p.name: min(max(float(values[p.name]), p.lower), p.upper) for p in self.space})
        u = encode_unit(cfg, self.space)
        return int(np.argmin(np.sum((self.units - u) ** 2, axis=1)))

    def __call__(self, messages, sample_index: int, mock_seed: int) -> str:
        prompt = prompt_of(messages)
        if SURROGATE_MARK in prompt:
            text = _SURR_QUERY.search(prompt).group(1)
            score = self.by_text.get(text)
            if score is None:
                score = float(self.scores[self._nearest(_pairs(text))])
            return f"## {format_number(score)} ##"
        if SAMPLING_MARK in prompt:
            tried = {serialize_config(self.configs[self._nearest(_pairs(c))], self.space)
                     for _, c in _SAMP_LINE.findall(prompt)}
            for i in np.argsort(self.scores, kind="stable"):
                text = serialize_config(self.configs[i], self.space)
                if text not in tried:
                    return f"## {text} ##"
            return "## ##"
        if INITIAL_MARK in prompt:
            n = int(_INIT_RANGES.search(prompt).group(2))
            rng = _rng(messages, sample_index, mock_seed)
            idx = rng.choice(len(self.configs), size=min(n, len(self.configs)), replace=False)
            return "\n".join(_dict_text(self.configs[i], self.space) for i in idx)
        return "I cannot help with that."
