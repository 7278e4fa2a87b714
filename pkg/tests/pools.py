"""Seeded finite pools for loop tests."""

import numpy as np

from llana.analog import TabularOracle
from llana.space import Observation, sample_uniform, weight_space


def bowl_table(seed, n_rows=100, d=3):
    """A tabular oracle over ``n_rows`` uniform configurations of a weight
    space, scored by squared log-distance to a seeded centre."""
    space = weight_space(d)
    configs = sample_uniform(space, seed, n_rows)
    centre = np.random.default_rng(seed + 7919).uniform(-1, 1, d)
    scores = [float(np.sum((np.log10([c[n] for n in space.names]) - centre) ** 2)) for c in configs]
    rows = [Observation(c, (s,)) for c, s in zip(configs, scores)]
    return TabularOracle(rows, space, ("loss",), "loss"), space
