"""Spanner-based spectral sparsification that returns reweighted subgraphs."""
import numpy as np

from .config import DEFAULT
from .minor import neighbor_round


def _neighbor_round(md, sim, words=2):
    """Cluster-id exchange with neighbors plus a min-fold per supervertex."""
    neighbor_round(md, sim, words, "sparsify")


def spanner(g, md=None, k=2, seed=0, sim=None):
    """Baswana-Sen cluster growing; returns a boolean mask of spanner edges.

    Lengths are resistances. Every dropped edge e has a spanner path of at
    most 2k-1 edges, each no longer than e.
    """
    rng = np.random.default_rng(seed)
    n, m = g.n, g.m
    length = g.r
    alive = g.u != g.v
    keep = np.zeros(m, dtype=bool)
    # parallel copies: only the shortest can matter
    order = np.lexsort((np.arange(m), length))
    seen = set()
    for e in order.tolist():
        if not alive[e]:
            continue
        key = (min(g.u[e], g.v[e]), max(g.u[e], g.v[e]))
        if key in seen:
            alive[e] = False
        else:
            seen.add(key)
    cluster = np.arange(n)
    p = n ** (-1.0 / k) if n > 1 else 1.0
    adj = g.adjacency_lists()

    def lightest_per_cluster(v):
        best = {}
        for e, y in adj[v]:
            if not alive[e] or y == v:
                continue
            c = cluster[y]
            if c < 0:
                continue
            cur = best.get(c)
            if cur is None or (length[e], e) < (length[cur], cur):
                best[c] = e
        return best

    for _ in range(k - 1):
        _neighbor_round(md, sim)
        centers = np.unique(cluster[cluster >= 0])
        flag = np.zeros(n, dtype=bool)
        flag[centers] = rng.random(len(centers)) < p
        new_cluster = -np.ones(n, dtype=np.int64)
        to_kill = []
        for v in range(n):
            c0 = cluster[v]
            if c0 >= 0 and flag[c0]:
                new_cluster[v] = c0
                continue
            best = lightest_per_cluster(v)
            if not best:
                continue
            sampled = [c for c in best if flag[c]]
            if sampled:
                cs = min(sampled, key=lambda c: (length[best[c]], best[c]))
                es = best[cs]
                keep[es] = True
                new_cluster[v] = cs
                for c, e in best.items():
                    if c == cs or (length[e], e) < (length[es], es):
                        if c != cs:
                            keep[e] = True
                        to_kill.append((v, c))
            else:
                for c, e in best.items():
                    keep[e] = True
                    to_kill.append((v, c))
        for v, c in to_kill:
            for e, y in adj[v]:
                if alive[e] and cluster[y] == c:
                    alive[e] = False
        cluster = new_cluster
        # drop edges inside clusters and edges to vertices that left every cluster
        cu, cv = cluster[g.u], cluster[g.v]
        alive &= ~((cu == cv) & (cu >= 0))
        alive &= (cu >= 0) | (cv >= 0)
    _neighbor_round(md, sim)
    for v in range(n):
        for c, e in lightest_per_cluster(v).items():
            if c != cluster[v]:
                keep[e] = True
    # vertices that left all clusters attach via any remaining live edge to unclustered neighbors
    for e in np.flatnonzero(alive & (cluster[g.u] < 0) & (cluster[g.v] < 0)).tolist():
        keep[e] = True
    return keep


def size_floor(n, eps, cfg=DEFAULT):
    ln = np.log(max(n, 2))
    return cfg.c_size_floor * n * ln ** 3 / eps ** 2


def sparsify_kx(g, md=None, eps=0.1, seed=0, sim=None, cfg=DEFAULT, k=None, bundle=None):
    """Spectral sparsifier as a reweighted subgraph.

    Returns (H, md_H, idx) with H = g.subgraph(idx) reweighted. Each phase
    keeps a bundle of spanners and samples every other edge with
    probability 1/2 at twice the weight; phases run until the size floor.
    """
    rng = np.random.default_rng(seed)
    n, m = g.n, g.m
    floor = size_floor(n, eps, cfg)
    idx = np.arange(m)
    w = g.w.copy()
    if m <= floor:
        return g.copy(), md, idx
    phases = int(np.ceil(np.log2(m / floor)))
    k = k or max(2, int(np.ceil(np.log(max(n, 2)))))
    nb = bundle or max(1, int(np.ceil(np.log(max(n, 2)))))
    cur = g
    cur_md = md
    for ph in range(phases):
        inb = np.zeros(len(idx), dtype=bool)
        for j in range(nb):
            rest = np.flatnonzero(~inb)
            if len(rest) == 0:
                break
            sub = cur.subgraph(rest)
            sub_md = cur_md.restrict_edges(rest) if cur_md is not None else None
            mask = spanner(sub, sub_md, k, seed=int(rng.integers(2 ** 31)), sim=sim)
            inb[rest[mask]] = True
        coin = rng.random(len(idx)) < 0.5
        survive = inb | coin
        w = np.where(inb, w, 2 * w)[survive]
        idx = idx[survive]
        cur = g.subgraph(idx, w)
        cur_md = md.restrict_edges(idx) if md is not None else None
        if len(idx) <= floor:
            break
    return cur, cur_md, idx
