"""Synthetic analog placement oracle.

A small op-amp-like netlist is placed by minimizing a weighted quadratic
(clique) wirelength plus a quadratic pull toward the die centre. The
placement is then scored by HPWL/area (the weighted placement objective)
and by two non-physical proxies standing in for CMRR and offset. All
metrics are lower-is-better.
"""

from __future__ import annotations

import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from llana.icl import serialize_config
from llana.space import (
    Observation,
    SearchSpace,
    read_dataset_csv,
    sample_uniform,
    weight_space,
    write_dataset_csv,
)

DIE_CENTER = (0.5, 0.5)
DEFAULT_BETA = 0.05
OBJECTIVES = ("cmrr", "offset")


class StructuralError(ValueError):
    """The placement system is singular."""


class LookupMiss(KeyError):
    """A tabular oracle was queried off its table."""


@dataclass(frozen=True)
class Cell:
    name: str
    width: float
    height: float
    fixed: bool = False
    x: float | None = None
    y: float | None = None


@dataclass(frozen=True)
class Net:
    name: str
    members: tuple[int, ...]
    critical: bool = False
    weighted: bool = False


@dataclass(frozen=True)
class Netlist:
    cells: tuple[Cell, ...]
    nets: tuple[Net, ...]
    symmetry_pairs: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "cells", tuple(self.cells))
        object.__setattr__(self, "nets", tuple(self.nets))
        object.__setattr__(self, "symmetry_pairs", tuple(tuple(p) for p in self.symmetry_pairs))
        n = len(self.cells)
        for net in self.nets:
            if len(net.members) < 2 or len(set(net.members)) != len(net.members):
                raise ValueError(f"net {net.name} needs at least two distinct members")
            if any(not 0 <= m < n for m in net.members):
                raise ValueError(f"net {net.name} references an unknown cell")
        flat = [c for pair in self.symmetry_pairs for c in pair]
        if len(set(flat)) != len(flat):
            raise ValueError("symmetry pairs must be disjoint")
        if any(not 0 <= c < n for c in flat):
            raise ValueError("symmetry pair references an unknown cell")
        if not any(c.fixed for c in self.cells):
            raise ValueError("at least one fixed cell is required to anchor the placement")
        for c in self.cells:
            if c.fixed and (c.x is None or c.y is None):
                raise ValueError(f"fixed cell {c.name} needs a position")

    @property
    def n_weighted(self) -> int:
        return sum(net.weighted for net in self.nets)

    @property
    def fixed_index(self) -> np.ndarray:
        return np.array([i for i, c in enumerate(self.cells) if c.fixed], dtype=np.intp)

    @property
    def movable_index(self) -> np.ndarray:
        return np.array([i for i, c in enumerate(self.cells) if not c.fixed], dtype=np.intp)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([[c.width, c.height] for c in self.cells], dtype=float)

    def to_dict(self) -> dict:
        return {
            "cells": [
                {"name": c.name, "w": c.width, "h": c.height, "fixed": c.fixed, "x": c.x, "y": c.y}
                for c in self.cells
            ],
            "nets": [
                {"name": n.name, "members": list(n.members), "critical": n.critical, "weighted": n.weighted}
                for n in self.nets
            ],
            "symmetry_pairs": [list(p) for p in self.symmetry_pairs],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> Netlist:
        cells = tuple(
            Cell(c["name"], float(c["w"]), float(c["h"]), bool(c.get("fixed", False)), c.get("x"), c.get("y"))
            for c in doc["cells"]
        )
        names = {c.name: i for i, c in enumerate(cells)}

        def idx(m):
            return names[m] if isinstance(m, str) else int(m)

        nets = tuple(
            Net(n["name"], tuple(idx(m) for m in n["members"]), bool(n.get("critical", False)), bool(n.get("weighted", False)))
            for n in doc["nets"]
        )
        pairs = tuple((idx(a), idx(b)) for a, b in doc.get("symmetry_pairs", ()))
        return cls(cells, nets, pairs)


def load_netlist(path: str | Path) -> Netlist:
    with open(path, encoding="utf-8") as fh:
        return Netlist.from_dict(json.load(fh))


def default_netlist() -> Netlist:
    """The bundled 36-cell / 20-net / 14-weight op-amp-like netlist."""
    text = (resources.files("llana") / "data" / "opamp36.json").read_text(encoding="utf-8")
    return Netlist.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class Placement:
    """Cell centre coordinates, shape (n_cells, 2), on a unit die."""

    positions: np.ndarray

    def __post_init__(self) -> None:
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2 or not np.all(np.isfinite(pos)):
            raise ValueError("positions must be a finite (n, 2) array")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)


def net_weights(netlist: Netlist, alpha: Sequence[float]) -> np.ndarray:
    """Per-net weights: tuned ``alpha`` for weighted nets (in order), 1 elsewhere."""
    alpha = np.asarray(alpha, dtype=float).ravel()
    if alpha.size != netlist.n_weighted:
        raise ValueError(f"expected {netlist.n_weighted} net weights, got {alpha.size}")
    if np.any(alpha <= 0) or not np.all(np.isfinite(alpha)):
        raise ValueError("net weights must be positive and finite")
    w = np.ones(len(netlist.nets))
    w[[i for i, n in enumerate(netlist.nets) if n.weighted]] = alpha
    return w


def laplacian(netlist: Netlist, weights: np.ndarray) -> np.ndarray:
    """Clique-model Laplacian: net of weight w on k cells adds w(kI - 11^T)."""
    n = len(netlist.cells)
    lap = np.zeros((n, n))
    for net, w in zip(netlist.nets, weights):
        m = np.array(net.members)
        lap[np.ix_(m, m)] -= w
        lap[m, m] += w * len(m)
    return lap


def place(netlist: Netlist, alpha: Sequence[float], beta: float = DEFAULT_BETA) -> Placement:
    """Exact minimizer of the weighted quadratic placement objective.

    Minimizes ``sum_nets w * sum_pairs |p_u - p_v|^2 + beta * sum_movable
    |p - c|^2`` with fixed cells pinned; x and y are independent linear
    systems sharing one SPD matrix.

    Raises:
        StructuralError: The movable block is singular (e.g. a movable cell
            with no path to a fixed cell while ``beta == 0``).
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    w = net_weights(netlist, alpha)
    lap = laplacian(netlist, w)
    mov, fix = netlist.movable_index, netlist.fixed_index
    pos = np.zeros((len(netlist.cells), 2))
    pos[fix] = [[netlist.cells[i].x, netlist.cells[i].y] for i in fix]
    if mov.size == 0:
        return Placement(pos)
    a = lap[np.ix_(mov, mov)] + beta * np.eye(mov.size)
    rhs = -lap[np.ix_(mov, fix)] @ pos[fix] + beta * np.asarray(DIE_CENTER)
    try:
        factor = cho_factor(a, lower=True)
    except LinAlgError as exc:
        raise StructuralError("placement system is singular") from exc
    sol = cho_solve(factor, rhs)
    # one refinement step keeps the gradient at rounding level
    sol += cho_solve(factor, rhs - a @ sol)
    pos[mov] = sol
    return Placement(pos)


def placement_gradient(netlist: Netlist, placement: Placement, alpha, beta: float = DEFAULT_BETA) -> np.ndarray:
    """Gradient of the quadratic objective with respect to movable positions."""
    lap = laplacian(netlist, net_weights(netlist, alpha))
    mov = netlist.movable_index
    p = placement.positions
    return 2.0 * (lap[mov] @ p + beta * (p[mov] - np.asarray(DIE_CENTER)))


def net_quadratic_wirelength(netlist: Netlist, placement: Placement) -> np.ndarray:
    """Unweighted clique wirelength ``sum_pairs |p_u - p_v|^2`` of each net."""
    p = placement.positions
    out = np.empty(len(netlist.nets))
    for i, net in enumerate(netlist.nets):
        q = p[list(net.members)]
        out[i] = len(q) * np.sum((q - q.mean(axis=0)) ** 2)
    return out


def quadratic_objective(netlist: Netlist, placement: Placement, alpha, beta: float = DEFAULT_BETA) -> float:
    """The objective :func:`place` minimizes."""
    w = net_weights(netlist, alpha)
    mov = netlist.movable_index
    pull = np.sum((placement.positions[mov] - np.asarray(DIE_CENTER)) ** 2)
    return float(w @ net_quadratic_wirelength(netlist, placement) + beta * pull)


def hpwl(netlist: Netlist, placement: Placement) -> np.ndarray:
    """Half-perimeter wirelength per net, pins at cell centres."""
    p = placement.positions
    out = np.empty(len(netlist.nets))
    for i, net in enumerate(netlist.nets):
        q = p[list(net.members)]
        out[i] = np.ptp(q[:, 0]) + np.ptp(q[:, 1])
    return out


def layout_area(netlist: Netlist, placement: Placement) -> float:
    """Area of the bounding box of all cells, cell extents included."""
    p, half = placement.positions, 0.5 * netlist.sizes
    lo = np.min(p - half, axis=0)
    hi = np.max(p + half, axis=0)
    return float(np.prod(hi - lo))


@dataclass(frozen=True, eq=False)
class ObjectiveBreakdown:
    """Weighted placement objective split into its terms."""

    f_wl: np.ndarray
    f_area: float
    f_other: float
    alpha: np.ndarray
    beta: float
    total: float


def evaluate_objective(netlist: Netlist, placement: Placement, alpha, beta: float = DEFAULT_BETA) -> ObjectiveBreakdown:
    """``sum_i alpha_i * HPWL_i + beta * area + 0``; ``alpha`` here is per net."""
    w = net_weights(netlist, alpha)
    f_wl = hpwl(netlist, placement)
    f_area = layout_area(netlist, placement)
    total = float(w @ f_wl + beta * f_area)
    return ObjectiveBreakdown(f_wl, f_area, 0.0, w, float(beta), total)


def mirror_mismatch(netlist: Netlist, placement: Placement) -> np.ndarray:
    """Per pair: distance between one member mirrored and the other.

    The mirror axis is the vertical line through the mean x of all paired
    cells, so a rigid translation leaves the mismatch unchanged.
    """
    if not netlist.symmetry_pairs:
        return np.zeros(0)
    p = placement.positions
    pairs = np.array(netlist.symmetry_pairs)
    axis = np.mean(p[pairs.ravel(), 0])
    a, b = p[pairs[:, 0]], p[pairs[:, 1]]
    dx = (2.0 * axis - a[:, 0]) - b[:, 0]
    dy = a[:, 1] - b[:, 1]
    return np.hypot(dx, dy)


def proxy_metrics(netlist: Netlist, placement: Placement) -> tuple[float, float]:
    """(cmrr_proxy, offset_proxy), both lower-is-better.

    offset = total mirror mismatch + 0.05 * critical-net HPWL.
    cmrr = log10(offset + 0.01 * non-critical HPWL + 1e-9), i.e. the
    negation of a higher-is-better ``-log10(...)`` rejection figure.
    """
    wl = hpwl(netlist, placement)
    critical = np.array([n.critical for n in netlist.nets], dtype=bool)
    offset = float(np.sum(mirror_mismatch(netlist, placement)) + 0.05 * np.sum(wl[critical]))
    cmrr = math.log10(offset + 0.01 * float(np.sum(wl[~critical])) + 1e-9)
    return cmrr, offset


def alpha_from_config(config: Mapping, netlist: Netlist) -> np.ndarray:
    return np.array([float(config[f"w{i + 1}"]) for i in range(netlist.n_weighted)])


class AnalogOracle:
    """Place with the configuration's net weights and report proxy metrics.

    Args:
        netlist: Netlist to place; defaults to :func:`default_netlist`.
        objectives: Which of ``("cmrr", "offset")`` to return, in order.
        beta: Area factor of the placement objective.
    """

    def __init__(self, netlist: Netlist | None = None, objectives: Sequence[str] = OBJECTIVES, beta: float = DEFAULT_BETA):
        self.netlist = netlist or default_netlist()
        unknown = set(objectives) - set(OBJECTIVES)
        if unknown:
            raise ValueError(f"unknown objectives {sorted(unknown)}")
        self.objective_names = tuple(objectives)
        self.directions = ("minimize",) * len(self.objective_names)
        self.beta = beta
        self.space = weight_space(self.netlist.n_weighted)
        self.pool = None

    def __call__(self, config: Mapping) -> np.ndarray:
        placement = place(self.netlist, alpha_from_config(config, self.netlist), self.beta)
        metrics = dict(zip(OBJECTIVES, proxy_metrics(self.netlist, placement)))
        return np.array([metrics[o] for o in self.objective_names])


def gen_dataset(
    netlist: Netlist,
    n_rows: int,
    seed: int,
    out_path: str | Path,
    beta: float = DEFAULT_BETA,
) -> Path:
    """Sample weight vectors, place and score them, and write the CSV.

    ``out_path`` may be a directory, in which case ``dataset.csv`` is
    written inside it.
    """
    if n_rows < 1:
        raise ValueError("n_rows must be >= 1")
    out_path = Path(out_path)
    if out_path.is_dir() or out_path.suffix == "":
        out_path.mkdir(parents=True, exist_ok=True)
        out_path = out_path / "dataset.csv"
    oracle = AnalogOracle(netlist, OBJECTIVES, beta)
    configs = sample_uniform(oracle.space, seed, n_rows)
    rows = [Observation(c, tuple(oracle(c)), i) for i, c in enumerate(configs)]
    return write_dataset_csv(out_path, rows, oracle.space, OBJECTIVES)


def load_dataset(path: str | Path, space: SearchSpace | None = None) -> tuple[list[Observation], tuple[str, ...], SearchSpace]:
    """Read a dataset CSV; without ``space`` the header's parameter columns
    are taken to be the default log-uniform net weights ``w1..wd``."""
    if space is None:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
        d = sum(1 for h in header if h.startswith("w") and h[1:].isdigit())
        space = weight_space(d)
    rows, objectives = read_dataset_csv(path, space)
    return rows, objectives, space


class TabularOracle:
    """Replay one objective column of a fixed dataset.

    Lookup is by the six-significant-digit serialization of the
    configuration; ``pool`` lists every stored configuration.
    """

    def __init__(self, observations: Sequence[Observation], space: SearchSpace, objective_names: Sequence[str], objective: str):
        if objective not in objective_names:
            raise ValueError(f"objective {objective!r} not in {list(objective_names)}")
        col = list(objective_names).index(objective)
        self.space = space
        self.objective_names = (objective,)
        self.directions = ("minimize",)
        self.pool = [o.config for o in observations]
        self._table = {}
        for o in observations:
            self._table.setdefault(self.key(o.config), o.scores[col])
        self.scores = np.array([o.scores[col] for o in observations])

    def key(self, config: Mapping) -> str:
        return serialize_config(config, self.space)

    def __len__(self) -> int:
        return len(self.pool)

    def __contains__(self, config: Mapping) -> bool:
        return self.key(config) in self._table

    def __call__(self, config: Mapping) -> np.ndarray:
        try:
            return np.array([self._table[self.key(config)]])
        except KeyError:
            raise LookupMiss(f"configuration not in table: {self.key(config)[:80]}") from None


def tabular_oracle(dataset: Sequence[Observation], objective_name: str, space: SearchSpace, objective_names: Sequence[str]) -> TabularOracle:
    return TabularOracle(dataset, space, objective_names, objective_name)
