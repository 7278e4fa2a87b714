"""Search spaces, configurations, observations and dataset files.

Every surrogate works on the unit-cube encoding produced by
:func:`encode_unit`; categoricals encode as a scaled index so the encoded
dimension always equals the number of parameters.
"""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Union

import numpy as np

Value = Union[float, int, str]
Kind = Literal["continuous", "integer", "categorical"]
Direction = Literal["minimize", "maximize"]


class ValidationError(ValueError):
    """A configuration does not satisfy its search space."""


class SizeError(ValueError):
    """Not enough data for the requested operation."""


@dataclass(frozen=True)
class ParamSpec:
    """One tunable parameter.

    Attributes:
        name: Identifier, unique within a space.
        kind: ``continuous``, ``integer`` or ``categorical``.
        lower: Lower bound (numeric kinds).
        upper: Upper bound (numeric kinds).
        categories: Allowed values (categorical kind).
        log_scale: Sample and encode uniformly in log10 space.
    """

    name: str
    kind: Kind = "continuous"
    lower: float | None = None
    upper: float | None = None
    categories: tuple[str, ...] = ()
    log_scale: bool = False

    def __post_init__(self) -> None:
        if not self.name or not self.name.replace("_", "a").isalnum():
            raise ValueError(f"invalid parameter name {self.name!r}")
        if self.kind in ("continuous", "integer"):
            if self.lower is None or self.upper is None:
                raise ValueError(f"{self.name}: numeric parameter needs lower and upper")
            if not self.lower < self.upper:
                raise ValueError(f"{self.name}: lower ({self.lower}) must be < upper ({self.upper})")
            if self.log_scale and self.lower <= 0:
                raise ValueError(f"{self.name}: log_scale requires positive bounds")
        elif self.kind == "categorical":
            object.__setattr__(self, "categories", tuple(self.categories))
            if not self.categories:
                raise ValueError(f"{self.name}: categorical parameter needs categories")
            if len(set(self.categories)) != len(self.categories):
                raise ValueError(f"{self.name}: duplicate categories")
        else:
            raise ValueError(f"{self.name}: unknown kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "lower": self.lower,
            "upper": self.upper,
            "categories": list(self.categories),
            "log_scale": self.log_scale,
        }


@dataclass(frozen=True)
class SearchSpace:
    """Ordered collection of parameters; order defines the vector encoding."""

    params: tuple[ParamSpec, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", tuple(self.params))
        if not self.params:
            raise ValueError("a search space needs at least one parameter")
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")

    @property
    def dimension(self) -> int:
        return len(self.params)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    def __getitem__(self, name: str) -> ParamSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    def __iter__(self) -> Iterator[ParamSpec]:
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def to_dict(self) -> dict:
        return {"params": [p.to_dict() for p in self.params]}

    @classmethod
    def from_dict(cls, doc: Mapping) -> SearchSpace:
        params = []
        for entry in doc["params"]:
            params.append(
                ParamSpec(
                    name=entry["name"],
                    kind=entry.get("kind", "continuous"),
                    lower=entry.get("lower"),
                    upper=entry.get("upper"),
                    categories=tuple(entry.get("categories") or ()),
                    log_scale=bool(entry.get("log_scale", False)),
                )
            )
        return cls(tuple(params))


def weight_space(d: int = 14, lower: float = 0.1, upper: float = 10.0) -> SearchSpace:
    """Net-weighting space ``w1..wd``, log-uniform on ``[lower, upper]``."""
    return SearchSpace(
        tuple(ParamSpec(f"w{i + 1}", "continuous", lower, upper, log_scale=True) for i in range(d))
    )


def load_space(path: str | Path) -> SearchSpace:
    with open(path, encoding="utf-8") as fh:
        return SearchSpace.from_dict(json.load(fh))


def dump_space(space: SearchSpace, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(space.to_dict(), fh, indent=2)
        fh.write("\n")


class Configuration(Mapping):
    """Immutable assignment of values to parameter names.

    Hashable, so configurations can be deduplicated and used as dict keys.
    """

    __slots__ = ("_values", "_hash")

    def __init__(self, values: Mapping[str, Value] | Iterable[tuple[str, Value]] = ()):
        self._values = dict(values)
        self._hash = None

    def __getitem__(self, key: str) -> Value:
        return self._values[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._values.items()))
        return self._hash

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Configuration):
            return self._values == other._values
        if isinstance(other, Mapping):
            return self._values == dict(other)
        return NotImplemented

    def __repr__(self) -> str:
        return f"Configuration({self._values!r})"

    def to_dict(self) -> dict[str, Value]:
        return dict(self._values)


@dataclass(frozen=True)
class Violation:
    name: str
    reason: str


def validate(config: Mapping[str, Value], space: SearchSpace) -> list[Violation]:
    """Check a configuration against a space.

    Returns:
        One :class:`Violation` per offending parameter; an empty list means
        the configuration is valid.
    """
    report = []
    for p in space:
        if p.name not in config:
            report.append(Violation(p.name, "missing"))
            continue
        v = config[p.name]
        if p.kind == "categorical":
            if v not in p.categories:
                report.append(Violation(p.name, f"{v!r} not in categories {list(p.categories)}"))
            continue
        if isinstance(v, (bool, str)) or not isinstance(v, (int, float, np.integer, np.floating)):
            report.append(Violation(p.name, f"non-numeric value {v!r}"))
            continue
        if not math.isfinite(v):
            report.append(Violation(p.name, "non-finite value"))
            continue
        if p.kind == "integer" and float(v) != int(v):
            report.append(Violation(p.name, f"non-integer value {v!r}"))
            continue
        if v < p.lower:
            report.append(Violation(p.name, f"{v!r} below lower bound {p.lower!r}"))
        elif v > p.upper:
            report.append(Violation(p.name, f"{v!r} above upper bound {p.upper!r}"))
    for key in config:
        if key not in space.names:
            report.append(Violation(key, "unknown parameter"))
    return report


def check(config: Mapping[str, Value], space: SearchSpace) -> None:
    """Raise :class:`ValidationError` if ``config`` is invalid."""
    report = validate(config, space)
    if report:
        detail = "; ".join(f"{v.name}: {v.reason}" for v in report)
        raise ValidationError(f"invalid configuration ({detail})")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _to_unit(p: ParamSpec, v: Value) -> float:
    if p.kind == "categorical":
        k = len(p.categories)
        return 0.0 if k == 1 else p.categories.index(v) / (k - 1)
    if p.log_scale:
        lo, hi = math.log10(p.lower), math.log10(p.upper)
        return (math.log10(v) - lo) / (hi - lo)
    return (v - p.lower) / (p.upper - p.lower)


def _from_unit(p: ParamSpec, u: float) -> Value:
    u = min(max(float(u), 0.0), 1.0)
    if p.kind == "categorical":
        k = len(p.categories)
        return p.categories[0 if k == 1 else _round_half_up(u * (k - 1))]
    if p.log_scale:
        lo, hi = math.log10(p.lower), math.log10(p.upper)
        v = 10.0 ** (lo + u * (hi - lo))
    else:
        v = p.lower + u * (p.upper - p.lower)
    if p.kind == "integer":
        return min(max(_round_half_up(v), int(math.ceil(p.lower))), int(math.floor(p.upper)))
    return min(max(v, p.lower), p.upper)


def encode_unit(config: Mapping[str, Value], space: SearchSpace) -> np.ndarray:
    """Map a valid configuration onto ``[0, 1]^d`` in space order."""
    check(config, space)
    return np.array([_to_unit(p, config[p.name]) for p in space], dtype=float)


def encode_many(configs: Sequence[Mapping[str, Value]], space: SearchSpace) -> np.ndarray:
    if not configs:
        return np.zeros((0, space.dimension))
    return np.vstack([encode_unit(c, space) for c in configs])


def decode_unit(u: Sequence[float], space: SearchSpace) -> Configuration:
    """Inverse of :func:`encode_unit`; coordinates outside [0, 1] are clipped."""
    if len(u) != space.dimension:
        raise ValueError(f"expected {space.dimension} coordinates, got {len(u)}")
    return Configuration((p.name, _from_unit(p, ui)) for p, ui in zip(space, u))


def sample_uniform(space: SearchSpace, rng_seed: int | np.random.Generator, n: int) -> list[Configuration]:
    """Draw ``n`` configurations uniformly (log-uniformly where flagged).

    Args:
        space: Space to sample from.
        rng_seed: Integer seed, or a generator to draw from directly.
        n: Number of configurations, at least 1.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    columns = []
    for p in space:
        if p.kind == "categorical":
            idx = rng.integers(len(p.categories), size=n)
            columns.append([p.categories[i] for i in idx])
        elif p.kind == "integer":
            if p.log_scale:
                raw = 10.0 ** rng.uniform(math.log10(p.lower), math.log10(p.upper), size=n)
                lo, hi = int(math.ceil(p.lower)), int(math.floor(p.upper))
                columns.append([min(max(_round_half_up(x), lo), hi) for x in raw])
            else:
                lo, hi = int(math.ceil(p.lower)), int(math.floor(p.upper))
                columns.append([int(x) for x in rng.integers(lo, hi + 1, size=n)])
        elif p.log_scale:
            raw = 10.0 ** rng.uniform(math.log10(p.lower), math.log10(p.upper), size=n)
            columns.append([min(max(float(x), p.lower), p.upper) for x in raw])
        else:
            columns.append([float(x) for x in rng.uniform(p.lower, p.upper, size=n)])
    return [Configuration(zip(space.names, row)) for row in zip(*columns)]


@dataclass(frozen=True)
class Observation:
    """A configuration with its objective scores."""

    config: Configuration
    scores: tuple[float, ...]
    trial_index: int = 0

    def __post_init__(self) -> None:
        scores = tuple(float(s) for s in np.atleast_1d(self.scores))
        if not all(math.isfinite(s) for s in scores):
            raise ValueError(f"non-finite scores {scores}")
        if self.trial_index < 0:
            raise ValueError("trial_index must be nonnegative")
        object.__setattr__(self, "scores", scores)


@dataclass(frozen=True)
class Trajectory:
    """Ordered optimization history in canonical (minimize) form.

    Scores handed to :meth:`append` are in the objectives' natural units;
    maximize objectives are negated on the way in, so everything stored here
    is lower-is-better.
    """

    space: SearchSpace
    objective_names: tuple[str, ...]
    directions: tuple[Direction, ...] = ()
    observations: tuple[Observation, ...] = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "objective_names", tuple(self.objective_names))
        directions = tuple(self.directions) or ("minimize",) * len(self.objective_names)
        if len(directions) != len(self.objective_names):
            raise ValueError("one direction per objective is required")
        if any(d not in ("minimize", "maximize") for d in directions):
            raise ValueError(f"unknown direction in {directions}")
        object.__setattr__(self, "directions", directions)
        obs = tuple(self.observations)
        for i, o in enumerate(obs):
            if o.trial_index != i:
                raise ValueError("trial indices must run 0..n-1 without gaps")
            if len(o.scores) != len(self.objective_names):
                raise ValueError("score vector length does not match the objective count")
        object.__setattr__(self, "observations", obs)

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def signs(self) -> np.ndarray:
        return np.array([-1.0 if d == "maximize" else 1.0 for d in self.directions])

    def canonical(self, raw_scores: Sequence[float]) -> tuple[float, ...]:
        raw = np.atleast_1d(np.asarray(raw_scores, dtype=float))
        return tuple(float(s) for s in raw * self.signs)

    def append(self, config: Configuration, raw_scores: Sequence[float]) -> Trajectory:
        obs = Observation(config, self.canonical(raw_scores), len(self.observations))
        return Trajectory(self.space, self.objective_names, self.directions, self.observations + (obs,))

    @property
    def configs(self) -> list[Configuration]:
        return [o.config for o in self.observations]

    def scores(self, objective: int | None = None) -> np.ndarray:
        """Canonical score matrix (n, m), or one column when ``objective`` is given."""
        mat = np.array([o.scores for o in self.observations], dtype=float).reshape(len(self), -1)
        return mat if objective is None else mat[:, objective]


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[Observation, ...]
    test: tuple[Observation, ...]
    seed: int


def split_dataset(observations: Sequence[Observation], train_n: int, test_n: int, seed: int) -> DatasetSplit:
    """Seeded shuffle, then the first ``train_n`` rows train and the next ``test_n`` test."""
    if train_n < 0 or test_n < 0:
        raise ValueError("split sizes must be nonnegative")
    if train_n + test_n > len(observations):
        raise SizeError(f"need {train_n + test_n} observations, have {len(observations)}")
    order = np.random.default_rng(seed).permutation(len(observations))
    rows = [observations[i] for i in order]
    return DatasetSplit(tuple(rows[:train_n]), tuple(rows[train_n : train_n + test_n]), seed)


def _format_value(v: Value) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_dataset_csv(
    path: str | Path,
    observations: Sequence[Observation],
    space: SearchSpace,
    objective_names: Sequence[str],
) -> Path:
    """Write observations as ``<param names>,<objective names>`` CSV rows."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*space.names, *objective_names])
        for o in observations:
            writer.writerow([_format_value(o.config[n]) for n in space.names] + [repr(float(s)) for s in o.scores])
    return path


def read_dataset_csv(path: str | Path, space: SearchSpace) -> tuple[list[Observation], tuple[str, ...]]:
    """Read a dataset CSV written by :func:`write_dataset_csv`.

    Returns:
        The observations (trial indices are row numbers) and the objective
        names taken from the header columns following the parameters.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        names = space.names
        if tuple(header[: len(names)]) != names:
            raise ValueError(f"CSV header {header[:len(names)]} does not match space {list(names)}")
        objectives = tuple(header[len(names) :])
        if not objectives:
            raise ValueError("CSV has no objective columns")
        rows = []
        for i, line in enumerate(reader):
            values = {}
            for p, cell in zip(space, line):
                if p.kind == "categorical":
                    values[p.name] = cell
                elif p.kind == "integer":
                    values[p.name] = int(float(cell))
                else:
                    values[p.name] = float(cell)
            rows.append(Observation(Configuration(values), tuple(float(c) for c in line[len(names) :]), i))
    return rows, objectives
