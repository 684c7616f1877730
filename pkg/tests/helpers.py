"""Instance builders shared by the flow tests and the acceptance suite."""
import numpy as np
from scipy.optimize import linprog

from lapcon.flow import FlowNetwork


def fractional_flow(n, Delta, seed, paths=6, integral_value=False):
    """Random DAG on n vertices carrying a sum of s-t paths with weights that are
    multiples of Delta. Capacities are the ceilings of the flow (at least 1).
    Returns (FlowNetwork, f, cost) with s = 0, t = n-1."""
    rng = np.random.default_rng(seed)
    s, t = 0, n - 1
    arcs = {}
    rows = []

    def arc(a, b):
        if (a, b) not in arcs:
            arcs[(a, b)] = len(rows)
            rows.append((a, b))
        return arcs[(a, b)]

    for i in range(n - 1):
        arc(i, i + 1)
    for _ in range(2 * n):
        a, b = sorted(rng.choice(n, 2, replace=False).tolist())
        arc(a, b)
    f = np.zeros(len(rows))
    K = int(round(1 / Delta))
    weights = rng.integers(1, 2 * K, size=paths)
    if integral_value:
        weights[-1] += (-weights.sum()) % K
    for w in weights:
        x = s
        while x != t:
            outs = [(b, e) for (a, b), e in arcs.items() if a == x]
            b, e = outs[rng.integers(len(outs))]
            f[e] += w * Delta
            x = b
    cap = np.maximum(np.ceil(f), 1.0)
    g = FlowNetwork(n, [a for a, _ in rows], [b for _, b in rows], cap)
    cost = rng.integers(0, 10, size=len(rows)).astype(float)
    return g, f, cost


def min_cost_lp(g, s, t, value, cost):
    """LP optimum of the min-cost s-t flow of the given value (arcs only)."""
    A = np.zeros((g.n, g.m))
    A[g.tail, np.arange(g.m)] += 1
    A[g.head, np.arange(g.m)] -= 1
    b = np.zeros(g.n)
    b[s], b[t] = value, -value
    res = linprog(cost, A_eq=A, b_eq=b, bounds=list(zip(-g.um, g.up)), method="highs")
    return res.fun if res.success else None


def oracle_max_flow(g, s, t):
    import networkx as nx
    return int(round(nx.maximum_flow_value(g.to_networkx(), s, t)))
