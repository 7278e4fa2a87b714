"""
GP and random-forest BO on the live placer
==========================================

Both baselines share the same loop: a few uniform draws, then expected
improvement over a pool of 512 random candidates at every trial.
"""

from llana.analog import AnalogOracle
from llana.optimizer import BudgetedRun, run_bo

oracle = AnalogOracle(objectives=("cmrr",))

for kind in ("gp", "forest"):
    run = BudgetedRun(trial_budget=15, n_random=5, seed=0, surrogate_kind=kind)
    record = run_bo(oracle, oracle.space, run, gp_restarts=2)
    trace = " ".join(f"{b:.3f}" for b in record.best_so_far)
    print(f"{kind:>6}: best-so-far {trace}")
    print(f"        provenance {', '.join(record.provenance[:6])}, ...")
