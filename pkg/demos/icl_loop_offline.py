"""
The in-context-learning loop with an offline model
==================================================

``run_llana`` talks to a chat-completions service. Here it talks to the
heuristic mock instead, so the script runs without network access. The
loop replays a small generated dataset, which keeps every evaluation exact.
"""

import tempfile
from pathlib import Path

from llana.analog import TabularOracle, default_netlist, gen_dataset, load_dataset
from llana.icl import TaskCard, examples_from_trajectory, render_surrogate_prompt
from llana.llm import MockBackend
from llana.metrics import normalized_regret
from llana.mockllm import heuristic_responder
from llana.optimizer import BudgetedRun, run_llana

work = Path(tempfile.mkdtemp())
rows, names, space = load_dataset(gen_dataset(default_netlist(), 120, 0, work))
oracle = TabularOracle(rows, space, names, "cmrr")
card = TaskCard.for_space(space, metric_name="cmrr", n_samples=len(rows))

run = BudgetedRun(trial_budget=12, n_random=5, m_candidates=8, exploration_alpha=-0.1, seed=1,
                  surrogate_kind="icl", sampler_kind="icl")
record = run_llana(oracle, space, run, MockBackend(heuristic_responder), card, k_samples=4,
                   out_path=work / "run.jsonl")

curve = normalized_regret(record.trajectory.scores(0), float(oracle.scores.min()), float(oracle.scores.max()))
for t, (prov, reg) in enumerate(zip(record.provenance, curve.values)):
    print(f"trial {t:2d}  {prov:<10}  regret {reg:.3f}")

# This is the prompt the surrogate saw for a fresh query, truncated for display.
prompt = render_surrogate_prompt(card, examples_from_trajectory(record.trajectory)[:3], rows[0].config, 0)
print("\n" + prompt[:600] + " ...")
print(f"\nrecord written to {work / 'run.jsonl'}")
