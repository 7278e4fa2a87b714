"""Small netlist builders and an independent dense placement oracle."""

import numpy as np

from llana.analog import DIE_CENTER, Cell, Net, Netlist


def random_netlist(rng, n_cells=6, n_nets=7, n_fixed=2, n_weighted=None):
    cells = []
    for i in range(n_cells):
        w, h = rng.uniform(0.01, 0.05, 2)
        if i < n_fixed:
            x, y = rng.random(2)
            cells.append(Cell(f"p{i}", float(w), float(h), True, float(x), float(y)))
        else:
            cells.append(Cell(f"c{i}", float(w), float(h)))
    n_weighted = n_nets if n_weighted is None else n_weighted
    nets = []
    for j in range(n_nets):
        k = int(rng.integers(2, min(4, n_cells) + 1))
        members = tuple(int(m) for m in rng.choice(n_cells, size=k, replace=False))
        nets.append(Net(f"n{j}", members, critical=bool(j % 3 == 0), weighted=j < n_weighted))
    return Netlist(tuple(cells), tuple(nets))


def dense_place(netlist, weights_per_net, beta):
    """Assemble the Hessian pair by pair and solve the normal equations."""
    n = len(netlist.cells)
    h = np.zeros((n, n))
    for net, w in zip(netlist.nets, weights_per_net):
        for a in range(len(net.members)):
            for b in range(a + 1, len(net.members)):
                e = np.zeros(n)
                e[net.members[a]], e[net.members[b]] = 1.0, -1.0
                h += w * np.outer(e, e)
    fixed = [i for i, c in enumerate(netlist.cells) if c.fixed]
    mov = [i for i, c in enumerate(netlist.cells) if not c.fixed]
    pf = np.array([[netlist.cells[i].x, netlist.cells[i].y] for i in fixed])
    a = h[np.ix_(mov, mov)] + beta * np.eye(len(mov))
    rhs = -h[np.ix_(mov, fixed)] @ pf + beta * np.array(DIE_CENTER)
    pos = np.zeros((n, 2))
    pos[fixed] = pf
    pos[mov] = np.linalg.solve(a, rhs)
    return pos


def line_netlist():
    cells = (Cell("a", 0, 0, True, 0.0, 0.5), Cell("b", 0, 0, True, 1.0, 0.5), Cell("m", 0, 0))
    nets = (Net("l", (0, 2), weighted=True), Net("r", (1, 2), weighted=True))
    return Netlist(cells, nets)


def mirror_netlist():
    """Pads and a cell pair mirrored about x = 0.5, no critical nets."""
    cells = (
        Cell("pl", 0.02, 0.02, True, 0.1, 0.5),
        Cell("pr", 0.02, 0.02, True, 0.9, 0.5),
        Cell("pt", 0.02, 0.02, True, 0.5, 0.9),
        Cell("ml", 0.03, 0.03),
        Cell("mr", 0.03, 0.03),
    )
    nets = (
        Net("a", (0, 3), weighted=True),
        Net("b", (1, 4), weighted=True),
        Net("c", (2, 3, 4), weighted=True),
    )
    return Netlist(cells, nets, ((3, 4),))
