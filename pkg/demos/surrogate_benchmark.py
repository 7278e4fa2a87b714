"""
Surrogate quality against the number of observed points
========================================================

A reduced benchmark grid: fit each surrogate on n training rows, score the
held-out rows and average over repeats.
"""

import tempfile
from pathlib import Path

from llana.analog import default_netlist, gen_dataset, load_dataset
from llana.bench import BenchSettings, bench_surrogates, plot_series
from llana.space import split_dataset

work = Path(tempfile.mkdtemp())
rows, names, space = load_dataset(gen_dataset(default_netlist(), 200, 0, work))
split = split_dataset(rows, 150, 50, 0)

settings = BenchSettings(surrogates=("gp", "forest", "icl"), n_grid=(5, 15, 30), repeats=2,
                         gp_restarts=2, k_samples=4, regret=False)
report = bench_surrogates(split, space, names, settings, out_dir=work)

print(f"{'series':>7} {'n':>3} {'nrmse':>8} {'r2':>8} {'lpd':>8}")
by_metric = {m: plot_series(report.rows, m) for m in ("nrmse", "r2", "lpd")}
for (series, n, nrmse, _), (_, _, r2, _), (_, _, lpd, _) in zip(*by_metric.values()):
    print(f"{series:>7} {n:>3} {nrmse:8.3f} {r2:8.3f} {lpd:8.3f}")
print(f"\nreports in {work}")
