"""Ultrasparsification: low-stretch tree, stretch sampling, degree-1/2 elimination."""
import heapq
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .config import DEFAULT
from .graph import WeightedGraph
from .minor import MinorDistribution, neighbor_round, boruvka_tree


# ------------------------------------------------------------------ trees

@dataclass
class RootedTree:
    n: int
    edges: np.ndarray        # edge ids of g forming the tree
    parent: np.ndarray
    parent_edge: np.ndarray
    depth: np.ndarray        # hop depth
    rdepth: np.ndarray       # resistance depth

    def path_edges(self, a, b):
        out = []
        while a != b:
            if self.depth[a] >= self.depth[b]:
                out.append(self.parent_edge[a])
                a = self.parent[a]
            else:
                out.append(self.parent_edge[b])
                b = self.parent[b]
        return out

    def lca(self, a, b):
        while a != b:
            if self.depth[a] >= self.depth[b]:
                a = self.parent[a]
            else:
                b = self.parent[b]
        return a


def root_tree(g, tree_edges, root=0):
    n = g.n
    adj = [[] for _ in range(n)]
    for e in np.asarray(tree_edges).tolist():
        adj[g.u[e]].append((e, g.v[e]))
        adj[g.v[e]].append((e, g.u[e]))
    parent = -np.ones(n, dtype=np.int64)
    pe = -np.ones(n, dtype=np.int64)
    depth = np.zeros(n, dtype=np.int64)
    rdepth = np.zeros(n)
    seen = np.zeros(n, dtype=bool)
    seen[root] = True
    order = [root]
    for x in order:
        for e, y in adj[x]:
            if not seen[y]:
                seen[y] = True
                parent[y], pe[y] = x, e
                depth[y] = depth[x] + 1
                rdepth[y] = rdepth[x] + g.r[e]
                order.append(y)
    return RootedTree(n, np.asarray(tree_edges, dtype=np.int64), parent, pe, depth, rdepth)


def tree_stretch(g, rt):
    """Exact stretch of every edge: tree-path resistance / r_e (1 on tree edges)."""
    st = np.empty(g.m)
    for e in range(g.m):
        a, b = int(g.u[e]), int(g.v[e])
        c = rt.lca(a, b)
        st[e] = (rt.rdepth[a] + rt.rdepth[b] - 2 * rt.rdepth[c]) / g.r[e]
    return st


def _mpx(nodes, adj, beta, rng):
    """Exponential-shift clustering on an unweighted graph.

    Returns (center per node, parent pointer, parent edge) for a BFS forest
    with one tree per cluster.
    """
    shift = rng.exponential(1 / beta, size=len(nodes))
    start = shift.max() - shift
    center = {}
    par = {}
    pedge = {}
    heap = [(start[i], x, x, -1, -1) for i, x in enumerate(nodes)]
    heapq.heapify(heap)
    while heap:
        d, x, c, p, e = heapq.heappop(heap)
        if x in center:
            continue
        center[x], par[x], pedge[x] = c, p, e
        for e2, y in adj.get(x, ()):
            if y not in center:
                heapq.heappush(heap, (d + 1, y, c, x, e2))
    return center, par, pedge


def low_stretch_tree(g, md=None, seed=0, sim=None, method="akpw", beta=None):
    """Spanning tree and per-edge stretch upper bounds.

    akpw: lengths are bucketed into classes growing by a factor y; level j
    clusters the contracted graph of class <= j edges with exponential
    shifts and keeps each cluster's BFS tree. spt: shortest-path tree from
    vertex 0 (debug fallback). Bounds are exact tree-path stretches.
    Returns (RootedTree, stretch, info).
    """
    n = g.n
    r = g.r
    nonloop = np.flatnonzero(g.u != g.v)
    info = {"method": method, "levels": 0}
    if method == "spt":
        A = csr_matrix((np.r_[r[nonloop], r[nonloop]],
                        (np.r_[g.u[nonloop], g.v[nonloop]], np.r_[g.v[nonloop], g.u[nonloop]])),
                       shape=(n, n))
        _, pred = dijkstra(A, indices=0, return_predecessors=True)
        best = {}
        for e in nonloop.tolist():
            key = (min(g.u[e], g.v[e]), max(g.u[e], g.v[e]))
            if key not in best or r[e] < r[best[key]]:
                best[key] = e
        tree = [best[(min(x, int(pred[x])), max(x, int(pred[x])))] for x in range(1, n) if pred[x] >= 0]
        neighbor_round(md, sim, 1, "low_stretch_tree")
    else:
        rng = np.random.default_rng(seed)
        ln = np.log(max(n, 3))
        y = max(2.0, np.exp(np.sqrt(ln * np.log(ln))))
        beta = beta or 0.25
        rmin = r[nonloop].min() if len(nonloop) else 1.0
        cls = np.floor(np.log(r / rmin) / np.log(y) + 1e-12).astype(np.int64)
        lab = np.arange(n)
        tree = []
        j = 0
        top = int(cls[nonloop].max()) if len(nonloop) else 0
        while True:
            live = nonloop[lab[g.u[nonloop]] != lab[g.v[nonloop]]]
            if len(live) == 0:
                break
            act = live[cls[live] <= j]
            j += 1
            if len(act) == 0:
                continue
            info["levels"] += 1
            # one representative edge per cluster pair: the shortest
            best = {}
            for e in act.tolist():
                a, b = int(lab[g.u[e]]), int(lab[g.v[e]])
                key = (min(a, b), max(a, b))
                if key not in best or (r[e], e) < (r[best[key]], best[key]):
                    best[key] = e
            adj = {}
            for (a, b), e in sorted(best.items()):
                adj.setdefault(a, []).append((e, b))
                adj.setdefault(b, []).append((e, a))
            nodes = sorted(adj)
            b_level = beta if j <= top + 1 else max(beta, 0.5)
            center, par, pedge = _mpx(nodes, adj, b_level, rng)
            for x in nodes:
                if pedge[x] >= 0:
                    tree.append(pedge[x])
            remap = np.arange(n)
            for x in nodes:
                remap[x] = center[x]
            lab = remap[lab]
            # rounds: one neighbor exchange per BFS layer
            if sim is not None and md is not None:
                depth = 0
                for x in nodes:
                    k, z = 0, x
                    while par[z] >= 0:
                        z = par[z]
                        k += 1
                    depth = max(depth, k)
                for _ in range(depth + 1):
                    neighbor_round(md, sim, 2, "low_stretch_tree")
    rt = root_tree(g, tree)
    st = tree_stretch(g, rt)
    info["total_stretch"] = float(st.sum())
    return rt, st, info


# ------------------------------------------------------------------ sampling

def sample_by_stretch(g, rt, stretch, k, seed=0, cfg=DEFAULT, md=None, sim=None):
    """Tree plus off-tree edges kept with p_e = min(1, c log n st_e / k) at weight w_e / p_e.

    Each dropped edge e loads st_e * w_f onto every tree edge f of its tree
    path, which dominates its Laplacian, so L(G) <= L(H) always holds.
    Returns (H, idx, info) where H's edges are g's edges idx (reweighted).
    """
    rng = np.random.default_rng(seed)
    n = g.n
    in_tree = np.zeros(g.m, dtype=bool)
    in_tree[rt.edges] = True
    off = np.flatnonzero(~in_tree & (g.u != g.v))
    p = np.minimum(1.0, cfg.c_stretch * np.log(max(n, 2)) * stretch[off] / k)
    keep = rng.random(len(off)) < p
    w = g.w.astype(float).copy()
    load = np.zeros(g.m)
    for e, s in zip(off[~keep].tolist(), stretch[off[~keep]].tolist()):
        for f in rt.path_edges(int(g.u[e]), int(g.v[e])):
            load[f] += s
    w[in_tree] *= 1 + load[in_tree]
    kept = off[keep]
    w[kept] /= p[keep]
    idx = np.sort(np.concatenate([rt.edges, kept]))
    H = g.subgraph(idx, w[idx])
    neighbor_round(md, sim, 1, "sample_by_stretch")
    return H, idx, {"p": p, "off_tree": off, "kept": kept, "max_load": float(load.max(initial=0))}


# ------------------------------------------------------------------ degree-1/2 elimination

class EliminationOps:
    """Exact elimination of a vertex sequence, stored as elementary maps.

    For each eliminated x with current neighbours N(x) and weights w:
      forward:  b[N] += w * b[x] / d_x
      middle:   y[x] = b[x] / d_x  (the Z2 block)
      backward: y[x] += w . y[N] / d_x
    """

    def __init__(self, n, order, nbrs, wts, deg, keep):
        self.n = n
        self.order = list(order)
        self.nbrs = nbrs
        self.wts = wts
        self.deg = np.asarray(deg, dtype=float)
        self.keep = np.asarray(keep, dtype=np.int64)   # surviving vertices, in Ĝ order

    def forward(self, b):
        b = np.array(b, dtype=float, copy=True)
        for x, N, w, d in zip(self.order, self.nbrs, self.wts, self.deg):
            if len(N):
                b[N] += np.multiply.outer(w, b[x]) / d
        return b

    def backward(self, y):
        y = np.array(y, dtype=float, copy=True)
        for x, N, w, d in zip(reversed(self.order), reversed(self.nbrs), reversed(self.wts),
                              self.deg[::-1]):
            if len(N):
                y[x] += np.tensordot(w, y[N], axes=(0, 0)) / d
        return y

    def solve(self, b, inner):
        """Z1^T [Z2 0; 0 inner] Z1 b, inner acting on the surviving block."""
        b = np.asarray(b, dtype=float)
        y = self.forward(b)
        out = np.zeros_like(y)
        if self.order:
            out[self.order] = y[self.order] / (self.deg if y.ndim == 1 else self.deg[:, None])
        if len(self.keep):
            out[self.keep] = inner(y[self.keep])
        x = self.backward(out)
        return x - x.mean(axis=0)

    def z1_matrix(self):
        return self.forward(np.eye(self.n))

    def z2_diag(self):
        return 1.0 / self.deg


def degree12_eliminate(h, protected=(), md=None, sim=None, seed=0):
    """Eliminate unprotected vertices of degree <= 2 in rounds of independent sets.

    Returns (G_hat, ops, info); G_hat is the exact Schur complement onto
    ops.keep, with G_hat vertex i = h vertex ops.keep[i].
    """
    n = h.n
    prot = np.zeros(n, dtype=bool)
    prot[np.asarray(list(protected), dtype=np.int64)] = True
    nb = [dict() for _ in range(n)]
    img = [dict() for _ in range(n)]    # a representative h edge per neighbour pair
    for e, (a, b, w) in enumerate(zip(h.u.tolist(), h.v.tolist(), h.w.tolist())):
        if a != b:
            nb[a][b] = nb[a].get(b, 0.0) + w
            nb[b][a] = nb[b].get(a, 0.0) + w
            img[a].setdefault(b, e)
            img[b].setdefault(a, e)
    absorbed = [[x] for x in range(n)]
    links = [[] for _ in range(n)]       # h edges joining absorbed vertices
    alive = np.ones(n, dtype=bool)
    order, nbrs, wts, deg = [], [], [], []
    rounds = 0
    while True:
        # isolated vertices stay so every component keeps a representative
        cand = [x for x in range(n) if alive[x] and not prot[x] and 1 <= len(nb[x]) <= 2]
        if not cand:
            break
        cs = set(cand)
        pick = [x for x in cand if all(y not in cs or y > x for y in nb[x])]
        rounds += 1
        for x in pick:
            items = sorted(nb[x].items())
            N = np.array([y for y, _ in items], dtype=np.int64)
            w = np.array([c for _, c in items])
            d = w.sum()
            order.append(x)
            nbrs.append(N)
            wts.append(w)
            deg.append(d)
            for y in N.tolist():
                nb[y].pop(x)
            a = int(N[0])
            absorbed[a] += absorbed[x]
            links[a] += links[x] + [img[x][a]]
            if len(N) == 2:
                b = int(N[1])
                c = w[0] * w[1] / d
                nb[a][b] = nb[a].get(b, 0.0) + c
                nb[b][a] = nb[b].get(a, 0.0) + c
                img[a].setdefault(b, img[x][b])
                img[b].setdefault(a, img[x][b])
            for y in N.tolist():
                img[y].pop(x, None)
            nb[x] = {}
            img[x] = {}
            alive[x] = False
        neighbor_round(md, sim, 2, "degree12_eliminate")
    keep = np.flatnonzero(alive)
    pos = -np.ones(n, dtype=np.int64)
    pos[keep] = np.arange(len(keep))
    U, V, W, I = [], [], [], []
    for a in keep.tolist():
        for b, c in sorted(nb[a].items()):
            if a < b:
                U.append(pos[a]); V.append(pos[b]); W.append(c); I.append(img[a][b])
    G = WeightedGraph(len(keep), U, V, W)
    ops = EliminationOps(n, order, nbrs, wts, deg, keep)
    md_hat = None
    if md is not None:
        hu, hv = md.host_edges()
        members, roots, trees = [], [], []
        for a in keep.tolist():
            grp = absorbed[a]
            if len(grp) == 1:
                members.append(md.members[a]); roots.append(md.roots[a]); trees.append(md.trees[a])
                continue
            S = np.unique(np.concatenate([md.members[x] for x in grp]))
            he = md.images[np.asarray(links[a], dtype=np.int64), 2]
            E = np.concatenate([md.trees[x] for x in grp] + [he[he >= 0]])
            members.append(S); roots.append(md.roots[a]); trees.append(boruvka_tree(S, E, hu, hv)[0])
        md_hat = MinorDistribution(md.host, members, roots, trees,
                                   md.images[np.asarray(I, dtype=np.int64)].reshape(-1, 3))
    return G, ops, {"rounds": rounds, "eliminated": len(order), "md": md_hat}


# ------------------------------------------------------------------ driver

@dataclass
class Ultrasparsifier:
    H: WeightedGraph
    idx: np.ndarray
    G_hat: WeightedGraph
    ops: EliminationOps
    tree: RootedTree
    stretch: np.ndarray
    info: dict
    md_hat: object = None

    def solve(self, b, inner=None):
        """L(H)^+ b through the elimination factorization; inner defaults to a dense solve on G_hat."""
        if inner is None:
            from .oracle import DenseLaplacianSolver
            if self.G_hat.n > 0:
                ds = DenseLaplacianSolver(self.G_hat.dense_laplacian())
                inner = lambda y: ds.solve(y, check=False)
            else:
                inner = lambda y: y
        return self.ops.solve(b, inner)


def ultrasparsify(g, md=None, k=8, seed=0, sim=None, cfg=DEFAULT, method="akpw"):
    """Tree-plus-few-edges H with L(G) <= L(H) <= k L(G) (whp), reduced by degree-1/2 elimination."""
    rng = np.random.default_rng(seed)
    s = rng.integers(2 ** 31, size=3)
    rt, st, tinfo = low_stretch_tree(g, md, seed=int(s[0]), sim=sim, method=method)
    H, idx, sinfo = sample_by_stretch(g, rt, st, k, seed=int(s[1]), cfg=cfg, md=md, sim=sim)
    mdH = md.restrict_edges(idx) if md is not None else None
    Ghat, ops, einfo = degree12_eliminate(H, (), md=mdH, sim=sim)
    md_hat = einfo.pop("md")
    info = {**tinfo, **{k_: v for k_, v in sinfo.items() if k_ == "max_load"}, **einfo,
            "off_tree_kept": int(len(sinfo["kept"]))}
    return Ultrasparsifier(H, idx, Ghat, ops, rt, st, info, md_hat)
