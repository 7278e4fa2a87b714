"""
Placing the bundled op-amp under different net weightings
==========================================================

The analog oracle turns a vector of 14 net weights into a placement and
scores it with two proxy metrics. This script walks through one evaluation
by hand.
"""

import numpy as np

from llana.analog import default_netlist, evaluate_objective, hpwl, place, proxy_metrics

netlist = default_netlist()
print(f"{len(netlist.cells)} cells, {len(netlist.nets)} nets, {netlist.n_weighted} tunable weights")

# Uniform weights: every weighted net pulls equally.
flat = np.ones(netlist.n_weighted)
placement = place(netlist, flat)
cmrr, offset = proxy_metrics(netlist, placement)
print(f"uniform weights     cmrr={cmrr:.4f}  offset={offset:.4f}")

# Heavier weights on the first few nets draw their members together, which
# shortens those nets at the expense of the others.
heavy = flat.copy()
heavy[:4] = 8.0
tilted = place(netlist, heavy)
cmrr, offset = proxy_metrics(netlist, tilted)
print(f"first four weighted cmrr={cmrr:.4f}  offset={offset:.4f}")

before, after = hpwl(netlist, placement)[:4], hpwl(netlist, tilted)[:4]
for i, (a, b) in enumerate(zip(before, after)):
    print(f"  net {netlist.nets[i].name:>8}: hpwl {a:.4f} -> {b:.4f}")

# The scalarized objective splits into wirelength and area terms.
breakdown = evaluate_objective(netlist, tilted, heavy)
print(f"objective {breakdown.total:.4f} = weighted wirelength {breakdown.alpha @ breakdown.f_wl:.4f}"
      f" + area term {breakdown.beta * breakdown.f_area:.4f}")
