"""Flow networks on a communication host: vector and path primitives, flow rounding,
and exact s-t max flow by an interior point method finished combinatorially."""
import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .config import DEFAULT
from .congest import Network, Simulator
from .errors import (Disconnected, InvalidParams, MalformedFile, NoConvergence,
                     NotMultipleOfDelta, SolverFailure)
from .graph import WeightedGraph
from .minor import MinorDistribution, aggregate, broadcast, validate


# ------------------------------------------------------------------ flow networks

class FlowNetwork:
    """Edges tail[e] -> head[e]; a flow f satisfies -um[e] <= f[e] <= up[e]."""

    def __init__(self, n, tail, head, up, um=None):
        self.n = int(n)
        self.tail = np.asarray(tail, dtype=np.int64).reshape(-1)
        self.head = np.asarray(head, dtype=np.int64).reshape(-1)
        self.up = np.asarray(up, dtype=float).reshape(-1)
        self.um = np.zeros_like(self.up) if um is None else np.asarray(um, dtype=float).reshape(-1)
        if not (len(self.tail) == len(self.head) == len(self.up) == len(self.um)):
            raise InvalidParams("edge arrays differ in length")
        if len(self.tail) and (min(self.tail.min(), self.head.min()) < 0
                               or max(self.tail.max(), self.head.max()) >= self.n):
            raise InvalidParams("edge endpoint out of range")
        if np.any(self.up < 0) or np.any(self.um < 0):
            raise InvalidParams("capacities must be non-negative")

    @classmethod
    def from_edges(cls, n, rows, directed=True):
        """rows: (u, v, cap) or (u, v, cap+, cap-). Three-field rows are arcs when directed."""
        rows = list(rows)
        if not rows:
            return cls(n, [], [], [], [])
        t, h, up, um = [], [], [], []
        for r in rows:
            t.append(int(r[0]))
            h.append(int(r[1]))
            up.append(float(r[2]))
            um.append(float(r[3]) if len(r) > 3 else (0.0 if directed else float(r[2])))
        return cls(n, t, h, up, um)

    @property
    def m(self):
        return len(self.tail)

    @property
    def U(self):
        caps = np.concatenate([self.up, self.um])
        caps = caps[np.isfinite(caps)]
        return float(caps.max()) if len(caps) else 0.0

    def divergence(self, f):
        """Net outflow at every vertex."""
        f = np.asarray(f, dtype=float)
        return np.bincount(self.tail, f, self.n) - np.bincount(self.head, f, self.n)

    def value(self, f, s):
        return float(self.divergence(f)[s])

    def conservation_error(self, f, s, t):
        d = self.divergence(f)
        d[[s, t]] = 0
        return float(np.abs(d).max()) if self.n else 0.0

    def is_feasible(self, f, tol=0.0):
        f = np.asarray(f, dtype=float)
        return bool(np.all(f <= self.up + tol) and np.all(f >= -self.um - tol))

    def skeleton(self, word_budget=1):
        """Host network with one edge per adjacent vertex pair."""
        keep = self.tail != self.head
        a = np.minimum(self.tail[keep], self.head[keep])
        b = np.maximum(self.tail[keep], self.head[keep])
        pairs = sorted(set(zip(a.tolist(), b.tolist())))
        arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        return Network(self.n, arr[:, 0], arr[:, 1], word_budget)

    def to_networkx(self):
        import networkx as nx
        D = nx.DiGraph()
        D.add_nodes_from(range(self.n))
        for a, b, cp, cm in zip(self.tail.tolist(), self.head.tolist(), self.up.tolist(),
                                self.um.tolist()):
            if a == b:
                continue
            for x, y, c in ((a, b, cp), (b, a, cm)):
                if c > 0:
                    old = D[x][y]["capacity"] if D.has_edge(x, y) else 0.0
                    D.add_edge(x, y, capacity=old + c)
        return D

    def __repr__(self):
        return f"FlowNetwork(n={self.n}, m={self.m}, U={self.U:g})"


def read_capacity_file(path):
    """'n m U' header, then 'u v cap' (capacity both ways) or 'u v cap+ cap-' lines."""
    try:
        with open(path) as fh:
            lines = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    except OSError as exc:
        raise MalformedFile(f"cannot read {path}: {exc}")
    try:
        n, m, U = int(lines[0][0]), int(lines[0][1]), int(lines[0][2])
        body = lines[1:]
        if len(body) != m:
            raise MalformedFile(f"header announces {m} edges, file has {len(body)}")
        rows = []
        for ln in body:
            if len(ln) not in (3, 4):
                raise MalformedFile(f"edge line {' '.join(ln)!r} needs 3 or 4 fields")
            caps = [int(c) for c in ln[2:]]
            rows.append((int(ln[0]), int(ln[1]), caps[0], caps[1] if len(caps) > 1 else caps[0]))
    except MalformedFile:
        raise
    except (IndexError, ValueError) as exc:
        raise MalformedFile(f"malformed capacity file {path}: {exc}")
    try:
        g = FlowNetwork.from_edges(n, rows)
    except InvalidParams as exc:
        raise MalformedFile(str(exc))
    if g.m and g.U > U:
        raise MalformedFile(f"capacity {g.U:g} exceeds header bound U = {U}")
    return g, U


def write_capacity_file(path, g, U=None):
    U = int(g.U if U is None else U)
    with open(path, "w") as fh:
        fh.write(f"{g.n} {g.m} {U}\n")
        for a, b, cp, cm in zip(g.tail.tolist(), g.head.tolist(), g.up.tolist(), g.um.tolist()):
            fh.write(f"{a} {b} {int(cp)} {int(cm)}\n")


# ------------------------------------------------------------------ flow-preconditioned minors

class FlowPreconditionedMinor:
    """Minor distribution where `special` vertices span the whole host through a BFS
    tree of depth <= D and every other vertex sits on a single host vertex."""

    def __init__(self, md, special, depth):
        self.md = md
        self.special = [int(x) for x in special]
        self.depth = int(depth)

    @property
    def alpha(self):
        return len(self.special)

    @property
    def rho(self):
        return self.md.edge_congestion()

    @property
    def host(self):
        return self.md.host

    @property
    def D(self):
        return max(self.host.diameter, 1)

    @classmethod
    def build(cls, net, n, tail, head, special, placement=None, images=None):
        """placement[v] is the host vertex of a non-special vertex (identity by default).
        images[e] gives (hx, hy, host_edge); by default edges between non-special vertices
        use the host edge joining their placements and edges touching a special vertex
        become self-loops at the other endpoint's host."""
        special = sorted(set(int(x) for x in special))
        placement = np.arange(n) if placement is None else np.asarray(placement, dtype=np.int64)
        hu, hv = net.eu, net.ev
        root = special[0] if special and special[0] < net.n else 0
        parent_edge, depth = _bfs_parent_edges(net, root)
        tree = [int(e) for e in parent_edge if e >= 0]
        members, roots, trees = [], [], []
        for v in range(n):
            if v in special:
                members.append(list(range(net.n)))
                roots.append(int(placement[v]) if v < len(placement) and placement[v] < net.n
                             else root)
                trees.append(tree)
            else:
                members.append([int(placement[v])])
                roots.append(int(placement[v]))
                trees.append([])
        if images is None:
            table = {}
            for e, (a, b) in enumerate(zip(hu.tolist(), hv.tolist())):
                table.setdefault((min(a, b), max(a, b)), e)
            sp_set = set(special)
            images = []
            for a, b in zip(np.asarray(tail).tolist(), np.asarray(head).tolist()):
                if a in sp_set and b in sp_set:
                    images.append((root, root, -1))
                elif a in sp_set or b in sp_set:
                    x = int(placement[b if a in sp_set else a])
                    images.append((x, x, -1))
                else:
                    x, y = int(placement[a]), int(placement[b])
                    if x == y:
                        images.append((x, x, -1))
                    else:
                        he = table.get((min(x, y), max(x, y)))
                        if he is None:
                            raise InvalidParams(f"edge ({a},{b}) has no host edge")
                        images.append((x, y, he))
        md = MinorDistribution(net, members, roots, trees, images)
        return cls(md, special, depth)

    def check(self, g=None):
        """Structural check: minor validity, special spans and depth, singletons elsewhere."""
        rep = validate(self.md, g)
        if not rep:
            return rep
        for v in range(self.md.n):
            size = len(self.md.members[v])
            if v in self.special:
                if size != self.host.n:
                    return type(rep)(False, f"special vertex {v} does not span the host")
            elif size != 1:
                return type(rep)(False, f"vertex {v} is spread over {size} host vertices")
        if self.depth > self.D:
            return type(rep)(False, "spanning tree deeper than the host diameter")
        return rep


def _bfs_parent_edges(net, root):
    par = np.full(net.n, -1, dtype=np.int64)
    dist = np.full(net.n, -1, dtype=np.int64)
    dist[root] = 0
    q = deque([root])
    while q:
        x = q.popleft()
        for e, y in net.adjacency[x]:
            if dist[y] < 0:
                dist[y] = dist[x] + 1
                par[y] = e
                q.append(y)
    if np.any(dist < 0):
        raise Disconnected("host network is disconnected")
    return par, int(dist.max())


def _charge(sim, rounds, label, words=1):
    if sim is not None and rounds > 0:
        sim.charge(int(math.ceil(rounds)), words, label=label)


def fp_broadcast(fpm, values, t=1, sim=None, exact=False):
    """Every host vertex of S(v) learns v's value; t words per vertex."""
    if exact:
        return broadcast(fpm.md, values, t=t, sim=sim, exact=True)
    _charge(sim, t * (max(fpm.alpha, 1) * fpm.D + 1), "fp_broadcast", min(t, fpm.host.word_budget))
    return broadcast(fpm.md, values, t=t)


def fp_aggregate(fpm, member_values, op="sum", t=1, sim=None, exact=False):
    """Fold the values held on S(v) to v's root."""
    if exact:
        return aggregate(fpm.md, member_values, op=op, t=t, sim=sim, exact=True)
    _charge(sim, t * (max(fpm.alpha, 1) * fpm.D + 1), "fp_aggregate", min(t, fpm.host.word_budget))
    return aggregate(fpm.md, member_values, op=op, t=t)


# ---- vector operations

def edge_map(fpm, fn, *vectors, sim=None):
    """Elementwise function of edge (or vertex) vectors; local, one round."""
    _charge(sim, 1, "fp_vector_op")
    return fn(*[np.asarray(v, dtype=float) for v in vectors])


def pnorm(fpm, x, p, sim=None):
    if p < 1:
        raise InvalidParams("p must be >= 1")
    _charge(sim, 2 * (fpm.D if fpm is not None else 1), "fp_norm")
    x = np.abs(np.asarray(x, dtype=float))
    if not len(x):
        return 0.0
    if np.isinf(p):
        return float(x.max())
    return float(np.sum(x ** p) ** (1.0 / p))


def top_k(fpm, x, k, sim=None):
    """Indices of the k largest |x|, found by binary search on a threshold with
    one global count per probe; ties go to the lowest index."""
    a = np.abs(np.asarray(x, dtype=float))
    k = int(min(max(k, 0), len(a)))
    if k == 0:
        return np.array([], dtype=np.int64), {"probes": 0}
    cand = np.unique(a)
    lo, hi = 0, len(cand) - 1          # largest threshold index with count >= k
    probes = 0
    best = 0
    while lo <= hi:
        mid = (lo + hi) // 2
        probes += 1
        if np.count_nonzero(a >= cand[mid]) >= k:
            best = mid
            lo = mid + 1
        else:
            hi = mid - 1
    tau = cand[best]
    above = np.flatnonzero(a > tau)
    tied = np.flatnonzero(a == tau)
    out = np.concatenate([above, tied[:k - len(above)]])
    probes += 1
    _charge(sim, 2 * probes * (fpm.D if fpm is not None else 1), "fp_top_k")
    return np.sort(out), {"probes": probes, "threshold": float(tau)}


def flow_matvec(fpm, n, u, v, f, x, sim=None):
    """(M_f x)_a = sum over edges ab of f_ab x_b."""
    f = np.asarray(f, dtype=float)
    M = sp.csr_matrix((np.concatenate([f, f]), (np.concatenate([u, v]), np.concatenate([v, u]))),
                      shape=(n, n))
    if fpm is not None:
        _charge(sim, max(fpm.rho, 1) + fpm.alpha * fpm.D, "fp_matvec")
    return M @ np.asarray(x, dtype=float)


# ---- path and cycle families

def path_cycle_ops(fpm, edges, links, values=None, sim=None):
    """Label each path/cycle of an edge-disjoint family and sum an edge vector along it.

    edges: edge ids in the family. links: pairs (e1, e2) of consecutive edges, known at
    their shared vertex. Returns (ids, sums) aligned with `edges`; the id of a path is
    its smallest edge id.
    """
    edges = np.asarray(edges, dtype=np.int64)
    pos = {int(e): i for i, e in enumerate(edges.tolist())}
    parent = list(range(len(edges)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in links:
        ra, rb = find(pos[int(a)]), find(pos[int(b)])
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    comp = np.array([find(i) for i in range(len(edges))], dtype=np.int64)
    ids = np.zeros(len(edges), dtype=np.int64)
    if len(edges):
        mins = np.full(len(edges), np.iinfo(np.int64).max)
        np.minimum.at(mins, comp, edges)
        ids = mins[comp]
    sums = None
    if values is not None:
        vals = np.asarray(values, dtype=float)
        tot = np.bincount(comp, vals, len(edges)) if len(edges) else np.zeros(0)
        sums = tot[comp]
    if fpm is not None:
        mbar = max(fpm.host.edge_count, 2)
        rho = max(fpm.rho, 1)
        _charge(sim, rho * math.sqrt(mbar) * math.log(mbar) + fpm.D, "fp_path_cycle")
    return ids, sums


# ------------------------------------------------------------------ flow rounding

def _check_delta(f, Delta):
    if not Delta > 0:
        raise NotMultipleOfDelta("Delta must be positive")
    mant, ex = math.frexp(1.0 / Delta)
    if mant != 0.5:
        raise NotMultipleOfDelta(f"1/Delta = {1 / Delta:g} is not a power of two")
    q = np.asarray(f, dtype=float) / Delta
    units = np.rint(q)
    if np.any(np.abs(q - units) > 1e-9 * np.maximum(1.0, np.abs(q))):
        raise NotMultipleOfDelta("flow is not an integer multiple of Delta")
    return units.astype(np.int64)


def _euler_trails(n, tail, head, odd):
    """Pair odd-edge ends at every vertex and follow the pairings into closed trails.

    Returns a list of trails, each a list of (edge, +1 if walked tail->head else -1),
    and the consecutive-edge links used.
    """
    ends = [[] for _ in range(n)]
    for e in odd:
        ends[tail[e]].append(2 * e)
        ends[head[e]].append(2 * e + 1)
    partner = {}
    links = []
    for x in range(n):
        hs = ends[x]
        if len(hs) % 2:
            raise SolverFailure(f"vertex {x} has an odd number of odd edges")
        for i in range(0, len(hs), 2):
            partner[hs[i]] = hs[i + 1]
            partner[hs[i + 1]] = hs[i]
            links.append((hs[i] // 2, hs[i + 1] // 2))
    seen = set()
    trails = []
    for e0 in odd:
        if e0 in seen:
            continue
        trail = []
        h = 2 * e0                    # leave through the tail end: walk tail -> head
        while True:
            e = h // 2
            seen.add(e)
            sign = 1 if h % 2 == 0 else -1
            trail.append((e, sign))
            arrive = h ^ 1            # the other end of e
            nxt = partner[arrive]
            if nxt == 2 * e0:
                break
            h = nxt
        trails.append(trail)
    return trails, links


def flow_rounding(fpm, g, s, t, f, cost=None, Delta=0.5, sim=None, return_info=False):
    """Round an s-t flow whose entries are multiples of Delta to an integral flow.

    Each entry moves to its floor or ceiling, the value does not drop, and with an
    integral value and integral costs the cost does not rise.
    """
    units = _check_delta(f, Delta)
    K = int(round(1 / Delta))
    tail = g.tail.tolist()
    head = g.head.tolist()
    m = g.m
    c = None if cost is None else np.asarray(cost, dtype=float)
    val_units = int(np.bincount(g.tail, units, g.n)[s] - np.bincount(g.head, units, g.n)[s])
    art = None
    if val_units % K:
        art = m                       # t -> s edge carrying the flow value
        tail = tail + [t]
        head = head + [s]
        units = np.append(units, val_units)
    a = units.copy()
    phases = 0
    trails_total = 0
    while K > 1:
        odd = np.flatnonzero(a % 2).tolist()
        if odd:
            trails, links = _euler_trails(g.n, tail, head, odd)
            trails_total += len(trails)
            if fpm is not None:
                _charge(sim, 1, "rounding_pairing")
                path_cycle_ops(fpm, odd, links, sim=sim)
            for tr in trails:
                es = np.array([e for e, _ in tr])
                sg = np.array([s_ for _, s_ in tr])
                flip = False
                if art is not None and art in es:
                    flip = sg[es == art][0] < 0
                elif c is not None:
                    real = es < m
                    flip = float(np.dot(c[es[real]], sg[real])) > 0
                if flip:
                    sg = -sg
                np.add.at(a, es, sg)
        a //= 2
        K //= 2
        phases += 1
    out = a[:m].astype(float)
    if return_info:
        return out, {"phases": phases, "trails": trails_total,
                     "added_return_edge": art is not None}
    return out


# ------------------------------------------------------------------ interior point state

@dataclass
class FlowState:
    n: int
    tail: np.ndarray
    head: np.ndarray
    up: np.ndarray
    um: np.ndarray
    f: np.ndarray
    y: np.ndarray
    s: int
    t: int
    n_base: int                       # vertices 0..n_base-1 are original; later ones come from boosting
    origin: np.ndarray                # base edge each current edge descends from
    fpm: object = None
    progress: float = 0.0
    boosted: int = 0

    @property
    def m(self):
        return len(self.tail)

    def slack(self, f=None):
        f = self.f if f is None else f
        return np.minimum(self.up - f, self.um + f)

    def resistance(self, f=None):
        f = self.f if f is None else f
        return 1.0 / (self.up - f) ** 2 + 1.0 / (self.um + f) ** 2

    def gradient(self, f=None):
        f = self.f if f is None else f
        return 1.0 / (self.up - f) - 1.0 / (self.um + f)

    def centrality_residual(self):
        """max over edges of |(y_v - y_u) - gradient| scaled by the edge's conductance."""
        gap = (self.y[self.head] - self.y[self.tail]) - self.gradient()
        return float(np.max(np.abs(gap) / np.sqrt(self.resistance()))) if self.m else 0.0

    def divergence(self, f=None):
        f = self.f if f is None else f
        return np.bincount(self.tail, f, self.n) - np.bincount(self.head, f, self.n)


def _as_solver(solver, cfg):
    if solver is None:
        from .chain import recursive_solver
        return recursive_solver(cfg, accuracy=1e-11)
    if solver == "dense":
        from .sketch import oracle_solver
        return oracle_solver()
    return solver


def laplacian_solve(state, r, b, solver):
    """Solve L(w = 1/r) phi = b on the state's graph, eliminating boost-path vertices
    (all of degree two) locally first and restoring their potentials afterwards."""
    n, nb = state.n, state.n_base
    w = 1.0 / r
    b = np.asarray(b, dtype=float).copy()
    inc = [dict() for _ in range(n)]
    eu, ev, ew = list(state.tail.tolist()), list(state.head.tolist()), list(w.tolist())
    alive = [True] * len(eu)
    for e, (a, c) in enumerate(zip(eu, ev)):
        if a == c:
            alive[e] = False
            continue
        inc[a][e] = None
        inc[c][e] = None
    record = []
    for x in range(nb, n):
        es = list(inc[x])
        if len(es) != 2:
            raise SolverFailure(f"boost vertex {x} has degree {len(es)}")
        e1, e2 = es
        a = eu[e1] if ev[e1] == x else ev[e1]
        c = eu[e2] if ev[e2] == x else ev[e2]
        w1, w2 = ew[e1], ew[e2]
        for e, y in ((e1, a), (e2, c)):
            alive[e] = False
            inc[y].pop(e, None)
        inc[x].clear()
        b[a] += b[x] * w1 / (w1 + w2)
        b[c] += b[x] * w2 / (w1 + w2)
        record.append((x, a, c, w1, w2))
        if a != c:
            e = len(eu)
            eu.append(a)
            ev.append(c)
            ew.append(w1 * w2 / (w1 + w2))
            alive.append(True)
            inc[a][e] = None
            inc[c][e] = None
    keep = np.flatnonzero(alive)
    eu, ev, ew = np.array(eu)[keep], np.array(ev)[keep], np.array(ew)[keep]
    # restrict to vertices touched by some edge, plus s and t
    used = np.zeros(nb, dtype=bool)
    used[eu] = True
    used[ev] = True
    used[[state.s, state.t]] = True
    idx = np.flatnonzero(used)
    relabel = -np.ones(nb, dtype=np.int64)
    relabel[idx] = np.arange(len(idx))
    h = WeightedGraph(len(idx), relabel[eu], relabel[ev], ew)
    rhs = b[idx] - b[idx].mean()
    phi = np.zeros(n)
    sol = np.asarray(solver(h, rhs), dtype=float)
    if not np.all(np.isfinite(sol)):
        raise SolverFailure("solver returned non-finite potentials")
    phi[idx] = sol
    for x, a, c, w1, w2 in reversed(record):
        phi[x] = (w1 * phi[a] + w2 * phi[c] + b[x]) / (w1 + w2)
    return phi


def _electrical(state, demand, solver):
    r = state.resistance()
    phi = laplacian_solve(state, r, demand, solver)
    ft = (phi[state.head] - phi[state.tail]) / r
    return phi, ft


def _st_demand(state, F):
    d = np.zeros(state.n)
    d[state.s] = -F
    d[state.t] = F
    return d


def augmentation(state, F, delta, solver, sim=None, _pre=None):
    """Electrical flow of F units from s to t under r = 1/(u+ - f)^2 + 1/(u- + f)^2,
    then a delta step on flow and duals. Returns (f_tilde, f_hat, y_hat)."""
    phi, ft = _pre if _pre is not None else _electrical(state, _st_demand(state, F), solver)
    return ft, state.f + delta * ft, state.y + delta * phi


def congestion(state, ft):
    return ft / state.slack()


def fixing(state, f_hat, y_hat, solver, sim=None):
    """Newton correction toward the central path; returns (f, y)."""
    tail, head = state.tail, state.head
    r = state.resistance(f_hat)
    grad = state.gradient(f_hat)
    theta = ((y_hat[head] - y_hat[tail]) - grad) / r
    f1 = f_hat + theta
    if np.any(state.slack(f1) <= 0):
        # a full Newton step would leave the interior; damp it
        lam = 1.0
        while lam > 1e-6 and np.any(state.slack(f_hat + lam * theta) <= 0):
            lam /= 2
        theta = lam * theta
        f1 = f_hat + theta
    resid = np.bincount(head, theta, state.n) - np.bincount(tail, theta, state.n)
    if not np.any(np.abs(resid) > 0):
        return f1, y_hat.copy()
    r1 = state.resistance(f1)
    phi = laplacian_solve(state, r1, -resid, solver)
    th2 = (phi[head] - phi[tail]) / r1
    f2 = f1 + th2
    if np.any(state.slack(f2) <= 0):
        raise SolverFailure("fixing step left the feasible region")
    return f2, y_hat + phi


def boosting(state, S, U):
    """Replace each edge of S by a path whose extra edges raise its resistance while
    keeping the point central; the path's end duals equal the old endpoints' duals."""
    S = sorted(set(int(e) for e in S))
    if not S:
        return state
    tail, head = state.tail.tolist(), state.head.tolist()
    up, um, f = state.up.tolist(), state.um.tolist(), state.f.tolist()
    origin = state.origin.tolist()
    y = state.y.tolist()
    n = state.n
    fpm = state.fpm
    images = fpm.md.images.tolist() if fpm is not None else None
    members = [list(a) for a in fpm.md.members] if fpm is not None else None
    roots = fpm.md.roots.tolist() if fpm is not None else None
    trees = [list(a) for a in fpm.md.trees] if fpm is not None else None
    boosted = 0
    for e in S:
        u, v = tail[e], head[e]
        if u == v:
            continue
        sl = min(up[e] - f[e], um[e] + f[e])
        g = 1.0 / (up[e] - f[e]) - 1.0 / (um[e] + f[e])
        beta = 2 + int(math.ceil(2 * U / sl))
        new = list(range(n, n + beta - 1))
        n += beta - 1
        path = [u] + new + [v]
        if g > 0:
            cap = ((beta - 2) / g - f[e], math.inf)     # (u-, u+) of the compensating edges
        elif g < 0:
            cap = (math.inf, f[e] + (beta - 2) / (-g))
        else:
            # no gradient to cancel: symmetric room around f, zero gradient on each edge
            cap = ((beta - 2) * sl - f[e], (beta - 2) * sl + f[e])
        # e itself becomes e_1; e_2 .. e_beta are appended
        head[e] = path[1]
        ids = [e]
        for i in range(2, beta + 1):
            tail.append(path[i - 1])
            head.append(path[i])
            if i == 2:
                up.append(up[e])
                um.append(um[e])
            else:
                um.append(cap[0])
                up.append(cap[1])
            f.append(f[e])
            origin.append(origin[e])
            ids.append(len(tail) - 1)
        y.extend([0.0] * (beta - 1))
        y[path[1]] = y[v]
        y[path[2]] = y[v] + g if beta >= 3 else y[v]
        for i in range(3, beta):
            y[path[i]] = y[path[i - 1]] - g / (beta - 2)
        if fpm is not None:
            hx, hy, he = images[e]
            mu, mv = set(members[u]), set(members[v])
            if he < 0:
                p, last = hx, (hx, hx, -1)
            else:
                p = hx if hx in mu and (hy in mv or hx not in mv) else hy
                q = hy if p == hx else hx
                last = (p, q, he)
            for _ in new:
                members.append([p])
                roots.append(p)
                trees.append([])
            images[e] = [p, p, -1]
            for k in ids[1:-1]:
                images.append([p, p, -1])
            images.append(list(last))
        boosted += 1
    st = FlowState(n, np.array(tail), np.array(head), np.array(up), np.array(um), np.array(f),
                   np.array(y), state.s, state.t, state.n_base, np.array(origin), None,
                   state.progress, state.boosted + boosted)
    if fpm is not None:
        md = MinorDistribution(fpm.host, members, roots, trees, images)
        st.fpm = FlowPreconditionedMinor(md, fpm.special, fpm.depth)
    return st


# ------------------------------------------------------------------ max flow

@dataclass
class MaxFlowResult:
    value: int
    flow: np.ndarray
    rounds: int
    info: dict = field(default_factory=dict)

    def to_dict(self):
        return {"value": int(self.value), "flow": [int(x) for x in self.flow],
                "rounds": int(self.rounds)}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def preconditioned_graph(g0, s, t, U):
    """Per-edge tripling (u,v), (s,v), (u,t) with symmetric capacities plus m parallel
    (t,s) edges of capacity 2U. Returns tail, head, up, um, kind (0 copy, 1 to-head,
    2 from-tail, 3 preconditioning) and the source arc of each edge."""
    tail, head, cap, kind, src = [], [], [], [], []
    for e in range(g0.m):
        c = max(g0.up[e], g0.um[e])
        if c <= 0:
            continue
        u, v = int(g0.tail[e]), int(g0.head[e])
        for a, b, k in ((u, v, 0), (s, v, 1), (u, t, 2)):
            tail.append(a)
            head.append(b)
            cap.append(c)
            kind.append(k)
            src.append(e)
    for _ in range(g0.m):
        tail.append(t)
        head.append(s)
        cap.append(2.0 * U)
        kind.append(3)
        src.append(-1)
    cap = np.array(cap, dtype=float)
    return (np.array(tail, dtype=np.int64), np.array(head, dtype=np.int64), cap, cap.copy(),
            np.array(kind), np.array(src, dtype=np.int64))


def ipm_parameters(m, U, cfg=DEFAULT):
    lu = math.log(max(U, 1)) / math.log(max(m, 2))
    llog = math.log(max(math.log(max(m * max(U, 1), 3)), 1e-12))
    eta = 1 / 14 - lu / 7 - cfg.c_eta * llog
    delta_hat = m ** -(0.5 - eta)
    budget = int(math.ceil(100 / delta_hat * max(1.0, math.log(max(U, 1)))))
    return eta, delta_hat, budget


def _snap_to_grid(state, Delta):
    """Multiples of Delta with exact conservation away from s and t (imbalance pushed
    to s along a BFS tree of the flow graph)."""
    units = np.rint(state.f / Delta).astype(np.int64)
    n = state.n
    div = np.bincount(state.tail, units, n) - np.bincount(state.head, units, n)
    adj = [[] for _ in range(n)]
    for e, (a, b) in enumerate(zip(state.tail.tolist(), state.head.tolist())):
        if a != b:
            adj[a].append((e, b))
            adj[b].append((e, a))
    par = [-1] * n
    order = []
    seen = [False] * n
    seen[state.s] = True
    q = deque([state.s])
    while q:
        x = q.popleft()
        order.append(x)
        for e, y in adj[x]:
            if not seen[y]:
                seen[y] = True
                par[y] = e
                q.append(y)
    div = div.astype(np.int64)
    for x in reversed(order):
        if x in (state.s, state.t) or par[x] < 0 or div[x] == 0:
            continue
        e = par[x]
        # send x's net outflow back across its tree edge
        if state.tail[e] == x:
            units[e] -= div[x]
            div[int(state.head[e])] += div[x]
        else:
            units[e] += div[x]
            div[int(state.tail[e])] += div[x]
        div[x] = 0
    f = units * Delta
    if not (np.all(f < state.up) and np.all(f > -state.um)):
        raise SolverFailure("grid snapping left the feasible region")
    return f


def _repair(g0, flow, s, t):
    """Cancel flow until every vertex other than s and t is balanced (integral input)."""
    flow = flow.astype(np.int64).copy()
    n = g0.n
    inc = [[] for _ in range(n)]
    for e, (a, b) in enumerate(zip(g0.tail.tolist(), g0.head.tolist())):
        inc[a].append(e)
        inc[b].append(e)
    div = np.bincount(g0.tail, flow, n) - np.bincount(g0.head, flow, n)
    q = deque(x for x in range(n) if div[x] and x not in (s, t))
    while q:
        x = q.popleft()
        for e in inc[x]:
            if div[x] == 0:
                break
            a, b = int(g0.tail[e]), int(g0.head[e])
            if a == b:
                continue
            out = flow[e] if a == x else -flow[e]      # flow leaving x along e
            if out == 0 or np.sign(out) != np.sign(div[x]):
                continue
            k = min(abs(int(div[x])), abs(int(out))) * int(np.sign(out))
            flow[e] -= k if a == x else -k
            div[x] -= k
            y = b if a == x else a
            div[y] += k
            if y not in (s, t) and div[y]:
                q.append(y)
    return flow


def augment_to_max(g0, flow, s, t, sim=None):
    """BFS augmenting paths in the residual graph until none is left."""
    flow = flow.astype(np.int64).copy()
    up = np.where(np.isfinite(g0.up), g0.up, 1 << 40).astype(np.int64)
    um = np.where(np.isfinite(g0.um), g0.um, 1 << 40).astype(np.int64)
    adj = [[] for _ in range(g0.n)]
    for e, (a, b) in enumerate(zip(g0.tail.tolist(), g0.head.tolist())):
        if a != b:
            adj[a].append((e, b, 1))
            adj[b].append((e, a, -1))
    paths = 0
    bfs_rounds = 0
    while True:
        prev = [None] * g0.n
        prev[s] = (-1, 0)
        depth = {s: 0}
        q = deque([s])
        while q and prev[t] is None:
            x = q.popleft()
            for e, y, d in adj[x]:
                if prev[y] is not None:
                    continue
                res = up[e] - flow[e] if d > 0 else um[e] + flow[e]
                if res > 0:
                    prev[y] = (e, d)
                    depth[y] = depth[x] + 1
                    q.append(y)
        bfs_rounds += max(depth.values()) + 1
        if prev[t] is None:
            break
        path = []
        x = t
        while x != s:
            e, d = prev[x]
            path.append((e, d))
            x = int(g0.tail[e]) if d > 0 else int(g0.head[e])
        b = min((up[e] - flow[e]) if d > 0 else (um[e] + flow[e]) for e, d in path)
        for e, d in path:
            flow[e] += d * b
        bfs_rounds += len(path)
        paths += 1
    _charge(sim, bfs_rounds, "augmenting_paths")
    return flow, {"augmenting_paths": paths, "bfs_rounds": bfs_rounds}


def _solve_cost(net, sim, cfg):
    """Rounds of one chain solve on the host network, measured once and reused."""
    from .chain import solve
    from .congest import Simulator
    probe = Simulator(net)
    g = WeightedGraph(net.n, net.eu, net.ev)
    b = np.zeros(net.n)
    if net.n >= 2:
        b[0], b[-1] = 1.0, -1.0
        solve(g, MinorDistribution.identity(net), b, 1e-8, sim=probe, cfg=cfg)
    return probe.stats.rounds


def max_flow(g0, s, t, U=None, F=None, solver=None, sim=None, cfg=DEFAULT, net=None,
             max_iters=None):
    """Exact maximum s-t flow of an integral-capacity network.

    The interior point phase routes F units through the preconditioned graph; its flow
    is rounded to integers, carried over to g0 and finished with augmenting paths.
    """
    if not (0 <= s < g0.n and 0 <= t < g0.n) or s == t:
        raise InvalidParams("s and t must be distinct vertices")
    caps = np.concatenate([g0.up, g0.um])
    if np.any(caps[np.isfinite(caps)] != np.round(caps[np.isfinite(caps)])):
        raise InvalidParams("capacities must be integers")
    U = int(g0.U if U is None else U)
    if g0.m and g0.U > U:
        raise InvalidParams("a capacity exceeds U")
    if F is None:
        out_s = g0.up[g0.tail == s].sum() + g0.um[g0.head == s].sum()
        in_t = g0.up[g0.head == t].sum() + g0.um[g0.tail == t].sum()
        F = float(min(out_s, in_t))
    rounds0 = sim.stats.rounds if sim is not None else 0
    info = {"F": F}
    zero = np.zeros(g0.m, dtype=np.int64)
    if F <= 0 or g0.m == 0 or U == 0:
        flow, ainfo = augment_to_max(g0, zero, s, t, sim)
        info.update(ainfo, iterations=0, boosts=0, ipm_value=0)
        return MaxFlowResult(int(g0.value(flow, s)), flow, _used(sim, rounds0), info)
    solver = _as_solver(solver, cfg)
    tail, head, up, um, kind, src = preconditioned_graph(g0, s, t, U)
    m = len(tail)
    eta, delta_hat, budget = ipm_parameters(m, U, cfg)
    if max_iters is not None:
        budget = min(budget, max_iters)
    fpm = None
    solve_rounds = 0
    if sim is not None:
        host = net or g0.skeleton()
        fpm = FlowPreconditionedMinor.build(host, g0.n, tail, head, [s, t])
        solve_rounds = _solve_cost(host, sim, cfg)
    state = FlowState(g0.n, tail, head, up, um, np.zeros(m), np.zeros(g0.n), s, t, g0.n,
                      np.arange(m), fpm)
    a = cfg.ipm_alpha
    limit = m ** (0.5 - eta) / (33 * (1 - a))
    n_boost = max(1, int(round(m ** (4 * eta))))
    it = 0
    history = []
    last_boost = None
    while state.progress < 1.0:
        if it >= budget:
            raise NoConvergence(f"interior point phase needed more than {budget} iterations")
        it += 1
        phi, ft = _electrical(state, _st_demand(state, F), solver)
        _charge(sim, solve_rounds, "fp_laplacian_solve")
        rho = edge_map(state.fpm, lambda a_, b_: a_ / b_, ft, state.slack(), sim=sim)
        r3 = pnorm(state.fpm, rho, 3, sim=sim)
        # boost only while boosting still lowers the congestion norm; small graphs sit
        # above the threshold for good and must take (shorter) steps instead
        stalled = last_boost is not None and r3 > 0.99 * last_boost
        if r3 <= limit or stalled:
            last_boost = None
            delta = min(1.0 / (33 * (1 - a) * r3), 1.0 - state.progress)
            _, f_hat, y_hat = augmentation(state, F, delta, solver, _pre=(phi, ft))
            f_new, y_new = fixing(state, f_hat, y_hat, solver)
            _charge(sim, solve_rounds, "fp_laplacian_solve")
            _charge(sim, 6, "fp_vector_op")
            state.f, state.y = f_new, y_new
            state.progress += delta
            history.append(("step", delta, r3))
        else:
            last_boost = r3
            S, _ = top_k(state.fpm, rho, n_boost, sim=sim)
            before = state.boosted
            state = boosting(state, S, U)
            _charge(sim, 1, "fp_boost")
            history.append(("boost", len(S), r3))
            if state.boosted == before:
                raise NoConvergence("congestion too high and no edge can be boosted")
    Delta = 2.0 ** -20
    f_grid = _snap_to_grid(state, Delta)
    rounded = flow_rounding(state.fpm, FlowNetwork(state.n, state.tail, state.head, state.up,
                                                   state.um), s, t, f_grid, Delta=Delta, sim=sim)
    # boosting keeps a base edge's index for the first edge of its path, and every edge
    # of a path carries the same flow
    base = rounded[:m]
    warm = np.zeros(g0.m, dtype=np.int64)
    copies = np.flatnonzero(kind == 0)
    for e in copies:
        a0 = src[e]
        warm[a0] = int(np.clip(base[e], -g0.um[a0], g0.up[a0]))
    warm = _repair(g0, warm, s, t)
    ipm_value = int(g0.value(warm, s))
    flow, ainfo = augment_to_max(g0, warm, s, t, sim)
    info.update(ainfo, iterations=it, boosts=state.boosted, ipm_value=ipm_value, eta=eta,
                delta_hat=delta_hat, budget=budget, rounded_value=float(
                    FlowNetwork(state.n, state.tail, state.head, state.up, state.um)
                    .value(rounded, s)), history=history, final_centrality=state.centrality_residual())
    return MaxFlowResult(int(g0.value(flow, s)), flow, _used(sim, rounds0), info)


def max_flow_tracked(g0, s, t, U=None, F=None, solver=None, cfg=DEFAULT, word_budget=1):
    """max_flow with round counting on the host formed by the component of s.

    Vertices outside that component cannot carry s-t flow, and the simulated
    network must be connected, so they are dropped and the flow is mapped back.
    """
    if not (0 <= s < g0.n and 0 <= t < g0.n) or s == t:
        raise InvalidParams("s and t must be distinct vertices")
    comp = connected_components(sp.coo_matrix((np.ones(g0.m), (g0.tail, g0.head)),
                                              shape=(g0.n, g0.n)), directed=False)[1]
    keep_v = np.flatnonzero(comp == comp[s])
    flow = np.zeros(g0.m, dtype=np.int64)
    if comp[t] != comp[s]:
        return MaxFlowResult(0, flow, 0, {"F": 0.0, "iterations": 0, "component": len(keep_v)})
    new_id = np.full(g0.n, -1, dtype=np.int64)
    new_id[keep_v] = np.arange(len(keep_v))
    keep_e = np.flatnonzero(comp[g0.tail] == comp[s])
    sub = FlowNetwork(len(keep_v), new_id[g0.tail[keep_e]], new_id[g0.head[keep_e]],
                      g0.up[keep_e], g0.um[keep_e])
    sim = Simulator(sub.skeleton(word_budget))
    res = max_flow(sub, int(new_id[s]), int(new_id[t]), U=U, F=F, solver=solver, sim=sim,
                   cfg=cfg)
    flow[keep_e] = res.flow
    return MaxFlowResult(res.value, flow, res.rounds, {**res.info, "component": len(keep_v)})


def _used(sim, rounds0):
    return (sim.stats.rounds - rounds0) if sim is not None else 0


def random_flow_network(kind, n, U=1, seed=0, p=None):
    """Seeded instances. 'bipartite': s -> left -> right -> t with unit capacities
    (n counts all vertices, s = n-2, t = n-1). 'dag': arcs i -> j (i < j) with
    capacities in 1..U, s = 0, t = n-1. 'undirected': G(n, p) edges usable both
    ways. Returns (FlowNetwork, s, t)."""
    rng = np.random.default_rng(seed)
    if n < 2:
        raise InvalidParams("need at least two vertices")
    rows = []
    if kind == "bipartite":
        if n < 4:
            raise InvalidParams("bipartite instances need n >= 4")
        nl = (n - 2) // 2
        nr = n - 2 - nl
        s, t = n - 2, n - 1
        p = 0.25 if p is None else p
        rows += [(s, i, 1) for i in range(nl)] + [(nl + j, t, 1) for j in range(nr)]
        rows += [(i, nl + j, 1) for i in range(nl) for j in range(nr) if rng.random() < p]
        return FlowNetwork.from_edges(n, rows), s, t
    if kind == "dag":
        p = 0.3 if p is None else p
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < p:
                    rows.append((i, j, int(rng.integers(1, U + 1))))
        return FlowNetwork.from_edges(n, rows), 0, n - 1
    if kind == "undirected":
        p = 0.3 if p is None else p
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < p:
                    c = int(rng.integers(1, U + 1))
                    rows.append((i, j, c, c))
        return FlowNetwork.from_edges(n, rows), 0, n - 1
    raise InvalidParams(f"unknown flow instance kind {kind!r}")


def oracle_max_flow(g, s, t):
    """Classical max-flow value (scipy's Edmonds-Karp / Dinic) for cross-checks."""
    from scipy.sparse.csgraph import maximum_flow
    if g.m == 0:
        return 0
    keep = g.tail != g.head
    a, b = g.tail[keep], g.head[keep]
    rows = np.concatenate([a, b])
    cols = np.concatenate([b, a])
    caps = np.concatenate([g.up[keep], g.um[keep]])
    pos = caps > 0
    C = sp.csr_matrix((caps[pos].astype(np.int64), (rows[pos], cols[pos])), shape=(g.n, g.n))
    C.sum_duplicates()
    return int(maximum_flow(C, s, t).flow_value)
