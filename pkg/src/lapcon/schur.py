"""Minor-preserving approximate Schur complements via steady-edge sampling."""
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT
from .errors import BadEstimate, EmptyTerminals, InvalidParams, NonConvergence
from .graph import WeightedGraph
from .minor import MinorDistribution, contract_edges, neighbor_round
from .oracle import exact_schur, leverage_exact, spectral_approx_check
from .sketch import column_apx, column_exact, diff_apx, lev_apx


@dataclass
class SteadySet:
    edges: np.ndarray
    alpha: float
    delta: float
    p: np.ndarray = None
    diag: dict = field(default_factory=dict)


@dataclass
class SplitInfo:
    origin: np.ndarray      # edge of the input graph each new edge came from
    kind: np.ndarray        # 0 unchanged, 1 series half, 2 parallel copy
    n_orig: int


# ------------------------------------------------------------------ split / unsplit

def split(g, md, lev, sim=None):
    """Series-split low-leverage edges and double high-leverage ones.

    Returns (H, md_H, SplitInfo). New midpoints get ids g.n, g.n+1, ...
    """
    lev = np.asarray(lev, dtype=float)
    if lev.shape != (g.m,) or np.any(~np.isfinite(lev)) or lev.min(initial=0) < 0 or lev.max(initial=0) > 1.1:
        raise BadEstimate("leverage estimates must lie in [0, 1.1]")
    ser = (lev < 0.25) & (g.u != g.v)
    par = (lev >= 0.75) & (g.u != g.v)
    n = g.n
    U, V, W, origin, kind = [], [], [], [], []
    imgs = []
    members, roots, trees = list(md.members), list(md.roots), list(md.trees)
    load = np.zeros(md.host_n, dtype=np.int64)
    for s in md.members:
        load[s] += 1
    nxt = n
    for e in range(g.m):
        a, b, w = int(g.u[e]), int(g.v[e]), g.w[e]
        hx, hy, he = (int(z) for z in md.images[e])
        if ser[e]:
            # midpoint sits on the less loaded end of the host image
            side = hx if load[hx] <= load[hy] else hy
            load[side] += 1
            members.append([side])
            roots.append(side)
            trees.append([])
            x = nxt
            nxt += 1
            if side == hx:
                U += [a, x]; V += [x, b]
                imgs += [(hx, hx, -1), (hx, hy, he)]
            else:
                U += [a, x]; V += [x, b]
                imgs += [(hx, hy, he), (hy, hy, -1)]
            W += [2 * w, 2 * w]
            origin += [e, e]
            kind += [1, 1]
        elif par[e]:
            U += [a, a]; V += [b, b]; W += [w / 2, w / 2]
            imgs += [(hx, hy, he), (hx, hy, he)]
            origin += [e, e]
            kind += [2, 2]
        else:
            U.append(a); V.append(b); W.append(w)
            imgs.append((hx, hy, he))
            origin.append(e)
            kind.append(0)
    H = WeightedGraph(nxt, U, V, W)
    mdH = MinorDistribution(md.host, members, roots, trees, imgs)
    neighbor_round(md, sim, 1, "split")
    return H, mdH, SplitInfo(np.asarray(origin), np.asarray(kind), n)


def _collapse(g, terminal, prefer):
    """Series/parallel/leaf reduction to a fixpoint on non-terminals.

    Returns (alive edge mask, new weights, contracted edges, dead vertices).
    """
    n = g.n
    w = g.w.astype(float).copy()
    alive = g.u != g.v
    end = np.column_stack([g.u, g.v]).astype(np.int64)
    adj = [dict() for _ in range(n)]
    for e in np.flatnonzero(alive).tolist():
        adj[end[e, 0]][e] = int(end[e, 1])
        adj[end[e, 1]][e] = int(end[e, 0])
    contracted = []
    gone = np.zeros(n, dtype=bool)
    dead = np.zeros(n, dtype=bool)
    queue = deque(range(n))

    def drop(e):
        a, b = int(end[e, 0]), int(end[e, 1])
        adj[a].pop(e, None)
        adj[b].pop(e, None)
        alive[e] = False

    while queue:
        x = queue.popleft()
        if gone[x]:
            continue
        by_nb = {}
        for e, y in sorted(adj[x].items()):
            if y in by_nb:
                w[by_nb[y]] += w[e]
                drop(e)
                queue.append(y)
            else:
                by_nb[y] = e
        if terminal[x]:
            continue
        deg = len(adj[x])
        if deg == 0:
            gone[x] = dead[x] = True
        elif deg == 1:
            (e, y), = adj[x].items()
            drop(e)
            gone[x] = dead[x] = True
            queue.append(y)
        elif deg == 2:
            (e1, a), (e2, b) = sorted(adj[x].items())
            c, k = (e2, e1) if prefer[e2] and not prefer[e1] else (e1, e2)
            a = adj[x][c]
            b = adj[x][k]
            w[k] = 1.0 / (1.0 / w[c] + 1.0 / w[k])
            adj[a].pop(c)
            adj[x].clear()
            alive[c] = False
            contracted.append(c)
            # x merges into a, so edge k now runs a - b
            pos = 0 if end[k, 0] == x else 1
            end[k, pos] = a
            adj[b][k] = a
            adj[a][k] = b
            gone[x] = True
            queue.append(a)
            queue.append(b)
    return alive, w, np.asarray(contracted, dtype=np.int64), dead


def unsplit(g, md, T, sim=None, seed=0):
    """Collapse series paths and parallel edges, drop non-terminal leaves.

    Returns (H, md_H, vmap) with vmap[old vertex] = new id or -1 if removed.
    """
    terminal = np.zeros(g.n, dtype=bool)
    terminal[np.asarray(list(T), dtype=np.int64)] = True
    prefer = md.images[:, 2] < 0
    alive, w, F, dead = _collapse(g, terminal, prefer)
    g2 = g.with_weights(w)
    q, mdq, labels = contract_edges(md, g2, F, seed=seed, sim=sim)
    # q's edges are g's non-contracted edges in order
    keep_mask = np.ones(g.m, dtype=bool)
    keep_mask[F] = False
    kept_alive = alive[keep_mask]
    idx = np.flatnonzero(kept_alive)
    q = q.subgraph(idx)
    mdq = mdq.restrict_edges(idx)
    cls_dead = np.zeros(q.n, dtype=bool)
    cls_dead[labels[dead]] = True
    new_id = -np.ones(q.n, dtype=np.int64)
    new_id[~cls_dead] = np.arange(int((~cls_dead).sum()))
    H = WeightedGraph(int((~cls_dead).sum()), new_id[q.u], new_id[q.v], q.w)
    mdH = mdq.drop_vertices(~cls_dead)
    vmap = new_id[labels]
    neighbor_round(md, sim, 1, "unsplit")
    return H, mdH, vmap


# ------------------------------------------------------------------ steady edges

def _logm2(m):
    return np.log(max(m, 2)) ** 2


def steady_alpha(delta, m, cfg=DEFAULT):
    return delta / (cfg.steady_alpha_scale * cfg.c_local * _logm2(m))


def find_steady(h, md, T, delta, solver, seed=0, sim=None, cfg=DEFAULT):
    """Sample a batch of steady edges: low Schur influence, low flow localization."""
    if not 0 < delta < 1:
        raise InvalidParams("delta must lie in (0, 1)")
    T = np.unique(np.asarray(list(T), dtype=np.int64))
    if len(T) == 0:
        raise EmptyTerminals("terminal set is empty")
    rng = np.random.default_rng(seed)
    m = h.m
    alpha = steady_alpha(delta, m, cfg)
    child = rng.integers(2 ** 31, size=3)
    v = diff_apx(h, md, solver, T, seed=int(child[0]), sim=sim, cfg=cfg)
    s = column_apx(h, md, solver, None, seed=int(child[1]), sim=sim, cfg=cfg)
    is_t = np.zeros(h.n, dtype=bool)
    is_t[T] = True
    # contracting an edge between two terminals would merge them
    tt = is_t[h.u] & is_t[h.v]
    Z1 = np.flatnonzero((v <= 16 * len(T) / m) & (s <= 16 * cfg.c_local * _logm2(m))
                        & ~tt & (h.u != h.v))
    Z2 = Z1[rng.random(len(Z1)) < alpha]
    sz = column_apx(h, md, solver, Z2, seed=int(child[2]), sim=sim, cfg=cfg) if len(Z2) else np.zeros(m)
    Z = Z2[sz[Z2] <= delta / 2]
    return SteadySet(Z, alpha, delta, diag={"v": v, "s": s, "Z1": Z1, "Z2": Z2, "s_Z2": sz})


def calibrate_c_local(graphs, cfg=DEFAULT):
    """Max over graphs of sum_e s_e / (m log^2 m); warns if above cfg.c_local."""
    worst = 0.0
    for g in graphs:
        s = column_exact(g) + leverage_exact(g)
        worst = max(worst, float(s.sum() / (g.m * _logm2(g.m))))
    if worst > cfg.c_local:
        warnings.warn(f"measured localization constant {worst:.3f} exceeds c_local={cfg.c_local}")
    return worst


# ------------------------------------------------------------------ ApproxSC

def size_target(n_terminals, m, eps, cfg=DEFAULT):
    return cfg.c_outer * n_terminals * _logm2(m) / eps ** 2


def _safe_contractions(g, F, is_t, rng):
    """Drop contractions (leaving the edge as is) that would merge two terminals."""
    parent = np.arange(g.n)
    has_t = is_t.copy()

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    ok, skipped = [], []
    for e in rng.permutation(F).tolist():
        a, b = find(g.u[e]), find(g.v[e])
        if a == b:
            ok.append(e)
        elif has_t[a] and has_t[b]:
            skipped.append(e)
        else:
            parent[b] = a
            has_t[a] |= has_t[b]
            ok.append(e)
    return np.asarray(sorted(ok), dtype=np.int64), np.asarray(sorted(skipped), dtype=np.int64)


def approx_sc(g, md, T, eps, solver, seed=0, sim=None, cfg=DEFAULT, check=False):
    """Sparse minor H of g with SC(H, T') ~ SC(g, T).

    Returns (H, md_H, T_H, info); T_H[i] is the vertex of H carrying the
    i-th smallest terminal.
    """
    T = np.unique(np.asarray(list(T), dtype=np.int64))
    if len(T) == 0:
        raise EmptyTerminals("terminal set is empty")
    if not 0 < eps < 1:
        raise InvalidParams("eps must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    m0 = max(g.m, 2)
    delta = min(eps / (cfg.c_outer * _logm2(m0)), 0.99)
    target = size_target(len(T), m0, eps, cfg)
    alpha0 = steady_alpha(delta, m0, cfg)
    max_iter = 10 * int(np.ceil(np.log(m0) / alpha0))
    cur, cmd, tcur = g, md, T.copy()
    info = {"iterations": 0, "steady": [], "skipped": 0, "flagged": False, "sizes": [g.m],
            "delta": delta, "target": target}
    ref = schur_on_terminals(g, T) if check else None
    lo, hi = cfg.p_clamp
    while cur.m >= target:
        info["iterations"] += 1
        if info["iterations"] > max_iter:
            raise NonConvergence(f"approx_sc exceeded {max_iter} iterations")
        s = rng.integers(2 ** 31, size=5)
        lev = np.minimum(lev_apx(cur, cmd, solver, cfg.split_delta, seed=int(s[0]), sim=sim, cfg=cfg), 1.0)
        H, mdH, _ = split(cur, cmd, lev, sim=sim)
        Tset = tcur
        Z = find_steady(H, mdH, Tset, delta, solver, seed=int(s[1]), sim=sim, cfg=cfg)
        p = np.clip(lev_apx(H, mdH, solver, delta, seed=int(s[2]), sim=sim, cfg=cfg)[Z.edges], lo, hi)
        Z.p = p
        info["steady"].append(len(Z.edges))
        coin = rng.random(len(Z.edges)) < p
        is_t = np.zeros(H.n, dtype=bool)
        is_t[Tset] = True
        F, skipped = _safe_contractions(H, Z.edges[coin], is_t, rng)
        info["skipped"] += len(skipped)
        deleted = Z.edges[~coin]
        keep = np.ones(H.m, dtype=bool)
        keep[deleted] = False
        kidx = np.flatnonzero(keep)
        pos = -np.ones(H.m, dtype=np.int64)
        pos[kidx] = np.arange(len(kidx))
        Hk, mdk = H.subgraph(kidx), mdH.restrict_edges(kidx)
        q, mdq, labels = contract_edges(mdk, Hk, pos[F], seed=int(s[3]), sim=sim)
        tq = labels[tcur]
        cur, cmd, vmap = unsplit(q, mdq, tq, sim=sim, seed=int(s[4]))
        tcur = vmap[tq]
        info["sizes"].append(cur.m)
        if check and not info["flagged"]:
            if not spectral_approx_check(ref, schur_on_terminals(cur, tcur), np.log(1.1)):
                info["flagged"] = True
    return cur, cmd, tcur, info


def schur_on_terminals(H, T_H):
    """Dense SC(H, T_H) in the order of T_H (duplicates not allowed)."""
    T_H = np.asarray(T_H, dtype=np.int64)
    order = np.argsort(T_H)
    S = exact_schur(H.laplacian(), T_H[order])
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    return S[np.ix_(inv, inv)]
