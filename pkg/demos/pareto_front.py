"""
Trading off the two proxy metrics with MOBO
===========================================

One GP per metric, Monte Carlo expected hypervolume improvement, and a
Pareto archive bounded by a reference point.
"""

from llana.analog import AnalogOracle
from llana.optimizer import BudgetedRun, run_mobo

oracle = AnalogOracle(objectives=("cmrr", "offset"))
record = run_mobo(oracle, oracle.space, BudgetedRun(trial_budget=14, n_random=6, seed=0),
                  reference=(0.0, 1.0), gp_restarts=2)

print("hypervolume by trial:", " ".join(f"{h:.4f}" for h in record.hypervolumes))
print(f"{len(record.archive.points)} Pareto points, {record.archive.discarded} outside the reference box")
for _, (cmrr, offset) in sorted(record.archive.points, key=lambda p: p[1]):
    print(f"  cmrr {cmrr:.4f}  offset {offset:.4f}")
