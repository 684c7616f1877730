"""Minor distributions: supervertices embedded in a host network, and their
communication primitives (rooting, broadcast, aggregate, matvec).

Values are computed centrally; the round cost of each communication pattern
is measured by running the actual message schedule on the simulator. The
schedule depends only on the embedding, so its cost is memoized per
(embedding, primitive, width) and charged on every later use.
"""
import json
from collections import defaultdict, deque

import numpy as np
import scipy.sparse as sp

from .congest import QueuedProgram, Simulator, build_bfs_tree
from .errors import InvalidParams, PatternMismatch
from .graph import WeightedGraph


class Report:
    def __init__(self, ok, violation=None, rho=None):
        self.ok = ok
        self.violation = violation
        self.rho = rho

    def __bool__(self):
        return self.ok

    def __repr__(self):
        return f"Report(ok={self.ok}, violation={self.violation!r}, rho={self.rho})"


class MinorDistribution:
    """Embedding of a minor graph into a host.

    members[v]  sorted host vertices of supervertex v
    roots[v]    host vertex holding v's value
    trees[v]    host edge ids spanning members[v]
    images[e]   (hx, hy, host_edge) for minor edge e; host_edge = -1 marks a
                self-loop image at hx == hy
    The host is anything with n, eu, ev (a Network, or a graph for inner maps).
    """

    def __init__(self, host, members, roots, trees, images, rho=None):
        self.host = host
        self.members = [np.asarray(sorted(set(int(a) for a in s)), dtype=np.int64) for s in members]
        self.roots = np.asarray(roots, dtype=np.int64).reshape(-1)
        self.trees = [np.asarray(t, dtype=np.int64).reshape(-1) for t in trees]
        self.images = np.asarray(images, dtype=np.int64).reshape(-1, 3)
        self.declared_rho = rho
        self._cost = {}
        self._orient = None

    # ---- basic accessors
    @property
    def n(self):
        return len(self.members)

    @property
    def m(self):
        return len(self.images)

    @property
    def host_n(self):
        return _host_n(self.host)

    def host_edges(self):
        return _host_uv(self.host)

    @classmethod
    def identity(cls, host, g=None):
        """Each host vertex is its own supervertex; g's edges must be host edges."""
        hu, hv = _host_uv(host)
        n = _host_n(host)
        if g is None or g is host:
            images = np.column_stack([hu, hv, np.arange(len(hu))])
        else:
            images = _lookup_images(hu, hv, g)
        return cls(host, [[x] for x in range(n)], np.arange(n), [[] for _ in range(n)], images)

    def vertex_congestion(self):
        cnt = np.zeros(self.host_n, dtype=np.int64)
        for s in self.members:
            cnt[s] += 1
        return int(cnt.max()) if len(cnt) else 0

    def edge_congestion(self):
        hu, _ = self.host_edges()
        cnt = np.zeros(len(hu), dtype=np.int64)
        for t in self.trees:
            np.add.at(cnt, t, 1)
        he = self.images[:, 2]
        np.add.at(cnt, he[he >= 0], 1)
        return int(cnt.max()) if len(cnt) else 0

    @property
    def rho(self):
        return max(self.vertex_congestion(), self.edge_congestion(), 1)

    def key(self):
        return id(self)

    # ---- derived structures
    def with_images(self, images):
        return MinorDistribution(self.host, self.members, self.roots, self.trees, images)

    def restrict_edges(self, idx):
        """Distribution of the subgraph keeping edges idx (mask or indices)."""
        idx = np.asarray(idx)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        return MinorDistribution(self.host, self.members, self.roots, self.trees,
                                 self.images[idx])

    def drop_vertices(self, keep):
        """Remove minor vertices not in keep; edges must already avoid them."""
        keep = np.asarray(keep)
        if keep.dtype != bool:
            mk = np.zeros(self.n, dtype=bool)
            mk[keep] = True
            keep = mk
        idx = np.flatnonzero(keep)
        return MinorDistribution(self.host, [self.members[i] for i in idx], self.roots[idx],
                                 [self.trees[i] for i in idx], self.images)

    def to_dict(self):
        sv = [{"id": v, "root": int(self.roots[v]), "members": self.members[v].tolist(),
               "tree_edges": self.trees[v].tolist()} for v in range(self.n)]
        em = [{"minor_edge": e, "host_edge": (int(he) if he >= 0 else None),
               "endpoints": [int(hx), int(hy)]}
              for e, (hx, hy, he) in enumerate(self.images.tolist())]
        return {"supervertices": sv, "edge_map": em}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, host, d):
        sv = sorted(d["supervertices"], key=lambda s: s["id"])
        images = [(e["endpoints"][0], e["endpoints"][1],
                   -1 if e["host_edge"] is None else e["host_edge"])
                  for e in sorted(d["edge_map"], key=lambda e: e["minor_edge"])]
        return cls(host, [s["members"] for s in sv], [s["root"] for s in sv],
                   [s["tree_edges"] for s in sv], images)

    def __repr__(self):
        return f"MinorDistribution(n={self.n}, m={self.m}, host_n={self.host_n})"


def _host_n(host):
    return host.n


def _host_uv(host):
    if hasattr(host, "eu"):
        return host.eu, host.ev
    return host.u, host.v


def _lookup_images(hu, hv, g):
    table = {}
    for e, (a, b) in enumerate(zip(hu.tolist(), hv.tolist())):
        table.setdefault((min(a, b), max(a, b)), e)
    out = np.empty((g.m, 3), dtype=np.int64)
    for i, (a, b) in enumerate(zip(g.u.tolist(), g.v.tolist())):
        if a == b:
            out[i] = (a, a, -1)
            continue
        he = table.get((min(a, b), max(a, b)))
        if he is None:
            raise InvalidParams(f"edge ({a},{b}) is not a host edge")
        out[i] = (a, b, he)
    return out


# ------------------------------------------------------------------ validate

def validate(md, g=None):
    """Check every structural invariant; returns a Report with the first violation."""
    hu, hv = md.host_edges()
    nh = md.host_n
    for v in range(md.n):
        s = md.members[v]
        if len(s) == 0:
            return Report(False, f"supervertex {v} is empty")
        if s.min() < 0 or s.max() >= nh:
            return Report(False, f"supervertex {v} has out-of-range members")
        if md.roots[v] not in set(s.tolist()):
            return Report(False, f"root of supervertex {v} is not a member")
        t = md.trees[v]
        if len(t) != len(s) - 1:
            return Report(False, f"tree of supervertex {v} has {len(t)} edges for {len(s)} members")
        if len(t):
            if t.min() < 0 or t.max() >= len(hu):
                return Report(False, f"tree of supervertex {v} uses unknown host edges")
            ends = np.concatenate([hu[t], hv[t]])
            if not np.isin(ends, s).all():
                return Report(False, f"tree of supervertex {v} leaves its supervertex")
            if not _is_spanning_tree(s, hu[t], hv[t]):
                return Report(False, f"tree of supervertex {v} does not span its members")
    if g is not None and (g.n != md.n or g.m != md.m):
        return Report(False, "graph and distribution disagree on size")
    memb = [set(s.tolist()) for s in md.members]
    for e, (hx, hy, he) in enumerate(md.images.tolist()):
        if he >= 0:
            a, b = int(hu[he]), int(hv[he])
            if {a, b} != {hx, hy}:
                return Report(False, f"image of edge {e} does not match host edge {he}")
        elif hx != hy:
            return Report(False, f"self-loop image of edge {e} has distinct endpoints")
        if g is not None:
            a, b = int(g.u[e]), int(g.v[e])
            ok = (hx in memb[a] and hy in memb[b]) or (hy in memb[a] and hx in memb[b])
            if not ok:
                return Report(False, f"image of edge {e} has endpoints outside its supervertices")
    vc, ec = md.vertex_congestion(), md.edge_congestion()
    rho = max(vc, ec, 1)
    if md.declared_rho is not None:
        if vc > md.declared_rho:
            return Report(False, "vertex congestion", rho)
        if ec > md.declared_rho:
            return Report(False, "edge congestion", rho)
    return Report(True, None, rho)


def _is_spanning_tree(verts, eu, ev):
    parent = {int(x): int(x) for x in verts}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in zip(eu.tolist(), ev.tolist()):
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
    return len({find(int(x)) for x in verts}) == 1


# ------------------------------------------------------------------ trees

def _tree_adjacency(md, v):
    hu, hv = md.host_edges()
    adj = defaultdict(list)
    for e in md.trees[v].tolist():
        a, b = int(hu[e]), int(hv[e])
        adj[a].append((e, b))
        adj[b].append((e, a))
    return adj


def orientation(md):
    """Per supervertex: dict host vertex -> (parent edge, parent vertex), root -> (-1, -1)."""
    if md._orient is None:
        out = []
        for v in range(md.n):
            adj = _tree_adjacency(md, v)
            r = int(md.roots[v])
            par = {r: (-1, -1)}
            dq = deque([r])
            while dq:
                x = dq.popleft()
                for e, y in sorted(adj[x]):
                    if y not in par:
                        par[y] = (e, x)
                        dq.append(y)
            out.append(par)
        md._orient = out
    return md._orient


def tree_diameter(md, v):
    adj = _tree_adjacency(md, v)
    if len(md.members[v]) <= 1:
        return 0

    def far(src):
        dist = {src: 0}
        dq = deque([src])
        while dq:
            x = dq.popleft()
            for _, y in adj[x]:
                if y not in dist:
                    dist[y] = dist[x] + 1
                    dq.append(y)
        x = max(dist, key=lambda k: (dist[k], -k))
        return x, dist[x]

    a, _ = far(int(md.members[v][0]))
    return far(a)[1]


def root_trees(md, sim=None):
    """Orientation of every tree toward its root: dict host vertex -> parent host edge.

    Realized as a flood from the roots (first-received edge becomes the parent),
    so its cost equals a one-word tree broadcast.
    """
    par = orientation(md)
    if sim is not None:
        with sim.phase("root_trees"):
            _charge(md, sim, "broadcast", 1, "tree")
    return [{x: e for x, (e, _) in p.items() if e >= 0} for p in par]


# ------------------------------------------------------------------ special vertices

def special_vertices(md, seed=0, radius=None):
    """Per supervertex, the set of special host vertices (sample, propagate, junctions).

    Each member is sampled with probability log n / sqrt(n) (n = host size);
    a member is then added if it can reach sampled vertices within `radius`
    tree hops in three or more directions.
    """
    rng = np.random.default_rng(seed)
    nh = max(md.host_n, 2)
    p = min(1.0, np.log(nh) / np.sqrt(nh))
    R = radius if radius is not None else int(np.ceil(np.sqrt(nh) * np.log(nh)))
    out = []
    for v in range(md.n):
        s = md.members[v]
        sampled = set(s[rng.random(len(s)) < p].tolist())
        if len(s) <= 2 or not sampled:
            out.append(sampled)
            continue
        adj = _tree_adjacency(md, v)
        dist = _directional_distance(adj, int(md.roots[v]), sampled)
        junction = {x for x in s.tolist()
                    if sum(1 for _, y in adj[x] if dist[(x, y)] <= R) >= 3}
        out.append(sampled | junction)
    return out


def _directional_distance(adj, root, K):
    """dist[(x, y)]: hops from x to the nearest K vertex through neighbor y (tree rerooting)."""
    INF = float("inf")
    order, par = [], {root: None}
    dq = deque([root])
    while dq:
        x = dq.popleft()
        order.append(x)
        for _, y in adj[x]:
            if y not in par:
                par[y] = x
                dq.append(y)
    down = {}
    for x in reversed(order):
        best = 0 if x in K else INF
        for _, y in adj[x]:
            if y != par[x]:
                best = min(best, down[y] + 1)
        down[x] = best
    dist = {}
    up = {root: INF}
    for x in order:
        kids = [y for _, y in adj[x] if y != par[x]]
        own = 0 if x in K else INF
        vals = [down[y] + 1 for y in kids]
        for i, y in enumerate(kids):
            others = min([own, up[x]] + vals[:i] + vals[i + 1:])
            up[y] = others + 1 if others < INF else INF
            dist[(x, y)] = down[y] + 1
        if par[x] is not None:
            dist[(x, par[x])] = up[x]
    return dist


# ------------------------------------------------------------------ communication

class DistributedVector:
    """One authoritative value (or t-vector) per minor vertex, held at its root."""

    def __init__(self, md, values):
        self.md = md
        self.values = np.asarray(values, dtype=float)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __repr__(self):
        return f"DistributedVector({self.values!r})"


def _as_values(x):
    return x.values if isinstance(x, DistributedVector) else np.asarray(x, dtype=float)


def pick_method(md):
    """Shortcut through special vertices only pays off for long trees on a shallow host."""
    nh = max(md.host_n, 2)
    diam = max((tree_diameter(md, v) for v in range(md.n) if len(md.trees[v])), default=0)
    if diam > 2 * np.sqrt(nh) and 2 * md.host.diameter < diam:
        return "shortcut"
    return "tree"


def _charge(md, sim, kind, t, method=None, op="sum"):
    """Charge the memoized cost of a primitive, measuring it on first use."""
    if sim is None:
        return 0
    method = method or md._cost.get("method") or md._cost.setdefault("method", pick_method(md))
    if t > 2:
        # wide messages: linear in t, from the measured 1- and 2-word schedules
        r1, p1 = _measured(md, kind, 1, method)
        r2, p2 = _measured(md, kind, 2, method)
        r, peak = r2 + (t - 2) * max(r2 - r1, 0), max(p1, p2)
    else:
        r, peak = _measured(md, kind, t, method)
    sim.charge(r, peak, label=f"minor_{kind}")
    return r


def _measured(md, kind, t, method):
    key = (kind, t, method)
    if key not in md._cost:
        probe = Simulator(md.host)
        if kind == "broadcast":
            _bcast_exact(md, np.zeros((md.n, t)), probe, method)
        else:
            _agg_exact(md, [np.zeros((len(s), t)) for s in md.members], "sum", probe, method)
        md._cost[key] = (probe.stats.rounds, probe.stats.peak_edge_words)
    return md._cost[key]


def broadcast(md, values, t=None, sim=None, exact=False, method=None):
    """Every member of S(v) learns v's value. Returns (DistributedVector, replicas).

    replicas[x] maps supervertex -> value for each host vertex x.
    """
    vals = _as_values(values)
    t = t or (1 if vals.ndim == 1 else vals.shape[1])
    if exact:
        sim = sim or Simulator(md.host)
        known = _bcast_exact(md, vals.reshape(md.n, -1), sim, method or pick_method(md))
        replicas = [{v: (k if vals.ndim > 1 else k[0]) for v, k in d.items()} for d in known]
    else:
        _charge(md, sim, "broadcast", t, method)
        replicas = None
    return DistributedVector(md, vals), replicas


def aggregate(md, member_values, op="sum", t=None, sim=None, exact=False, method=None):
    """Fold values held by members of each supervertex to its root.

    member_values[v] is aligned with md.members[v] (shape (|S(v)|,) or (|S(v)|, t)).
    """
    if op not in ("sum", "min", "max"):
        raise InvalidParams(f"unknown op {op}")
    mv = [np.asarray(a, dtype=float) for a in member_values]
    vec = mv[0].ndim > 1 if mv else False
    t = t or (mv[0].shape[1] if vec else 1)
    if exact:
        sim = sim or Simulator(md.host)
        res = _agg_exact(md, [a.reshape(len(a), -1) for a in mv], op, sim,
                         method or pick_method(md))
        out = np.array(res) if vec else np.array(res)[:, 0]
    else:
        f = {"sum": np.sum, "min": np.min, "max": np.max}[op]
        out = np.array([f(a, axis=0) for a in mv])
        _charge(md, sim, "aggregate", t, method, op)
    return DistributedVector(md, out)


def edge_exchange_rounds(md, t=1):
    """Rounds to push t words each way across every non-loop edge image at once."""
    he = md.images[:, 2]
    he = he[he >= 0]
    if len(he) == 0:
        return 0
    mult = np.bincount(he).max()
    return int(np.ceil(mult * t / md.host.word_budget))


def matvec(md, A, x, sim=None, g=None, t=1):
    """A x for A supported on the minor's edges plus the diagonal.

    Cost: broadcast x, one exchange over every edge image, aggregate to roots.
    """
    A = sp.csr_matrix(A)
    if A.shape != (md.n, md.n):
        raise PatternMismatch(f"matrix shape {A.shape} does not match minor size {md.n}")
    _check_pattern(md, A, g)
    xv = _as_values(x)
    y = A @ xv
    if sim is not None:
        with sim.phase("matvec"):
            _charge(md, sim, "broadcast", t)
            r = edge_exchange_rounds(md, t)
            if r:
                sim.charge(r, min(md.host.word_budget, t), label="minor_edge_exchange")
            _charge(md, sim, "aggregate", t)
    return DistributedVector(md, y)


def _check_pattern(md, A, g):
    if g is None:
        return
    key = getattr(g, "_pattern_cache", None)
    if key is None:
        a = np.concatenate([g.u, g.v, np.arange(g.n)])
        b = np.concatenate([g.v, g.u, np.arange(g.n)])
        key = set((a * g.n + b).tolist())
        g._pattern_cache = key
    C = A.tocoo()
    nz = C.data != 0
    codes = (C.row[nz].astype(np.int64) * g.n + C.col[nz]).tolist()
    bad = [c for c in codes if c not in key]
    if bad:
        raise PatternMismatch(f"{len(bad)} nonzeros outside the minor's edges and diagonal")


def neighbor_round(md, sim, words=1, label="neighbor_round"):
    """Charge one exchange with minor neighbors: broadcast, edge hop, aggregate."""
    if sim is None or md is None:
        return
    with sim.phase(label):
        comm_cost(md, sim, "broadcast", words)
        r = edge_exchange_rounds(md, words)
        if r:
            sim.charge(r, min(words, md.host.word_budget), label="minor_edge_exchange")
        comm_cost(md, sim, "aggregate", words)


def comm_cost(md, sim, kind, t=1):
    """Charge one memoized primitive of the given kind ('broadcast' or 'aggregate')."""
    return _charge(md, sim, kind, t)


# ---- exact message-level schedules

class _TreeBcast(QueuedProgram):
    def __init__(self, x, net, t, nbrs, initial, stop_at, allow_start):
        super().__init__(x, net, 1 + t)
        self.nbrs = nbrs            # v -> list of (edge, neighbor) in T(v)
        self.known = {}
        self.stop_at = stop_at      # supervertices for which x does not forward
        for v, val in initial:
            self.known[v] = val
            if v in allow_start:
                for e, _ in self.nbrs.get(v, ()):
                    self.send(e, (v,) + tuple(val))

    def receive(self, e, msg):
        v = int(msg[0])
        if v in self.known:
            return
        self.known[v] = tuple(msg[1:])
        if v in self.stop_at:
            return
        for e2, _ in self.nbrs.get(v, ()):
            if e2 != e:
                self.send(e2, msg)


def _memberships(md):
    hu, hv = md.host_edges()
    nbrs = [defaultdict(list) for _ in range(md.host_n)]
    for v in range(md.n):
        for e in md.trees[v].tolist():
            a, b = int(hu[e]), int(hv[e])
            nbrs[a][v].append((e, b))
            nbrs[b][v].append((e, a))
    return nbrs


def _special_for(md):
    if "special" not in md._cost:
        sv = special_vertices(md, seed=0)
        md._cost["special"] = sv
    return md._cost["special"]


def _bcast_exact(md, vals, sim, method):
    net = md.host
    nbrs = _memberships(md)
    t = vals.shape[1]
    with sim.phase("minor_broadcast"):
        if method == "tree":
            init = defaultdict(list)
            for v in range(md.n):
                init[int(md.roots[v])].append((v, tuple(vals[v])))
            progs = [_TreeBcast(x, net, t, nbrs[x], init[x], set(), set(range(md.n)))
                     for x in range(net.n)]
            sim.run(progs)
            return [p.known for p in progs]
        special = _special_for(md)
        _charge_special(md, sim)
        stop = defaultdict(set)
        for v, K in enumerate(special):
            for x in K:
                if x != int(md.roots[v]):
                    stop[x].add(v)
        # phase A: flood from roots inside pieces
        init = defaultdict(list)
        for v in range(md.n):
            init[int(md.roots[v])].append((v, tuple(vals[v])))
        progs = [_TreeBcast(x, net, t, nbrs[x], init[x], stop[x], set(range(md.n)))
                 for x in range(net.n)]
        sim.run(progs)
        known = [dict(p.known) for p in progs]
        # phase B: special vertices publish through the global BFS tree
        items = {}
        for v, K in enumerate(special):
            for x in sorted(K):
                if v in known[x]:
                    items.setdefault(x, []).append((v,) + known[x][v])
        allitems = _global_gather_scatter(net, sim, items, 1 + t, dedupe=True)
        # phase C: every special vertex of T(v) floods its pieces
        init = defaultdict(list)
        starts = defaultdict(set)
        for v, K in enumerate(special):
            for x in K:
                val = allitems.get(v)
                if val is not None:
                    init[x].append((v, val))
                    starts[x].add(v)
        progs = [_TreeBcast(x, net, t, nbrs[x], init[x], stop[x], starts[x])
                 for x in range(net.n)]
        sim.run(progs)
        for x in range(net.n):
            for v, val in progs[x].known.items():
                known[x].setdefault(v, val)
        return known


def _charge_special(md, sim):
    """Direction propagation for special vertices: radius hops, one word per tree per edge."""
    nh = max(md.host_n, 2)
    R = int(np.ceil(np.sqrt(nh) * np.log(nh)))
    sim.charge(R * max(md.edge_congestion(), 1), 1, label="special_vertices")


class _Relay(QueuedProgram):
    """Pipelined convergecast to the BFS root, then broadcast of everything back down."""

    def __init__(self, x, net, tree, L, own, dedupe):
        super().__init__(x, net, L)
        self.tree = tree
        self.up_edge = int(tree.parent_edge[x])
        self.child_edges = [int(tree.parent_edge[c]) for c in tree.children[x]]
        self.seen = set()
        self.collected = []
        self.dedupe = dedupe
        self.pending_up = len(self.child_edges)
        self.down_started = False
        for msg in own:
            self._take(msg)
        self.own_done = False

    def _take(self, msg):
        k = msg[0]
        if self.dedupe and k in self.seen:
            return
        self.seen.add(k)
        if self.up_edge >= 0:
            self.send(self.up_edge, msg)
        else:
            self.collected.append(msg)

    def receive(self, e, msg):
        if e == self.up_edge:
            self.collected.append(msg)
            for ce in self.child_edges:
                self.send(ce, msg)
        else:
            if msg[0] == -1:      # end-of-stream marker from a child
                self.pending_up -= 1
                return
            self._take(msg)

    def on_round(self):
        if not self.own_done and self.pending_up == 0:
            # all children finished: forward the end marker after our items
            self.own_done = True
            if self.up_edge >= 0:
                self.send(self.up_edge, (-1,) + (0,) * (self.msg_len - 1))
        if self.up_edge < 0 and self.own_done and not self.down_started:
            self.down_started = True
            for msg in self.collected:
                for ce in self.child_edges:
                    self.send(ce, msg)

    def active(self):
        return super().active() or not self.own_done or (self.up_edge < 0 and not self.down_started)


def global_bfs(net, sim=None):
    cache = getattr(net, "_bfs_cache", None)
    if cache is None:
        probe = Simulator(net)
        tree = build_bfs_tree(net, 0, probe)
        cache = (tree, probe.stats.rounds)
        net._bfs_cache = cache
    return cache[0]


def _global_gather_scatter(net, sim, items, L, dedupe):
    """items: host vertex -> list of messages keyed by msg[0]. Everyone learns all."""
    tree = global_bfs(net)
    progs = [_Relay(x, net, tree, L, items.get(x, []), dedupe) for x in range(net.n)]
    sim.run(progs)
    out = {}
    for msg in progs[tree.root].collected:
        out.setdefault(int(msg[0]), tuple(msg[1:]))
    return out


class _TreeAgg(QueuedProgram):
    def __init__(self, x, net, t, jobs, op):
        super().__init__(x, net, 1 + t)
        self.op = op
        self.jobs = jobs        # v -> [acc, waiting, parent_edge, forward]
        self.result = {}
        self.started = False

    def receive(self, e, msg):
        v = int(msg[0])
        job = self.jobs[v]
        job[0] = self.op(job[0], np.array(msg[1:]))
        job[1] -= 1
        self._maybe_send(v)

    def _maybe_send(self, v):
        job = self.jobs[v]
        if job[1] == 0 and not job[4]:
            job[4] = True
            if job[2] >= 0 and job[3]:
                self.send(job[2], (v,) + tuple(job[0].tolist()))
            else:
                self.result[v] = job[0]

    def on_round(self):
        if not self.started:
            self.started = True
            for v in sorted(self.jobs):
                self._maybe_send(v)

    def active(self):
        return super().active() or not self.started


_FOLD = {"sum": np.add, "min": np.minimum, "max": np.maximum}


def _agg_exact(md, mv, op, sim, method):
    net = md.host
    t = mv[0].shape[1] if mv else 1
    par = orientation(md)
    fold = _FOLD[op]
    special = _special_for(md) if method == "shortcut" else [set() for _ in range(md.n)]
    with sim.phase("minor_aggregate"):
        if method == "shortcut":
            _charge_special(md, sim)
        jobs = [dict() for _ in range(net.n)]
        for v in range(md.n):
            K = special[v]
            root = int(md.roots[v])
            waiting = defaultdict(int)
            for x, (e, p) in par[v].items():
                if p >= 0 and x not in K:
                    waiting[p] += 1
            for i, x in enumerate(md.members[v].tolist()):
                e, p = par[v][x]
                forward = x not in K or x == root
                jobs[x][v] = [mv[v][i].copy(), waiting[x], e, forward and x != root, False]
        progs = [_TreeAgg(x, net, t, jobs[x], fold) for x in range(net.n)]
        sim.run(progs)
        res = [None] * md.n
        for v in range(md.n):
            res[v] = progs[int(md.roots[v])].result[v]
        if method == "shortcut" and any(special):
            items = {}
            for v, K in enumerate(special):
                for x in sorted(K):
                    if x != int(md.roots[v]):
                        items.setdefault(x, []).append((v,) + tuple(progs[x].result[v].tolist()))
            allmsgs = _gather_all(net, sim, items, 1 + t)
            for msg in allmsgs:
                v = int(msg[0])
                res[v] = fold(res[v], np.array(msg[1:]))
        return res


def _gather_all(net, sim, items, L):
    tree = global_bfs(net)
    progs = [_Relay(x, net, tree, L, items.get(x, []), dedupe=False) for x in range(net.n)]
    # items need unique keys for the relay; it does not dedupe here
    sim.run(progs)
    return progs[tree.root].collected


# ------------------------------------------------------------------ spanning forests

def boruvka_tree(vertices, edge_ids, hu, hv, priority=None):
    """Spanning tree of the host subgraph (vertices, edge_ids) by Borůvka phases.

    Every component picks its cheapest incident edge (priority, then lowest
    id); components merge along the picks. Returns (tree edge ids, phases).
    """
    verts = [int(x) for x in vertices]
    if len(verts) <= 1:
        return np.zeros(0, dtype=np.int64), 0
    edge_ids = np.unique(np.asarray(edge_ids, dtype=np.int64))
    pr = edge_ids.astype(float) if priority is None else np.asarray(priority, float)[edge_ids]
    comp = {x: x for x in verts}

    def find(a):
        while comp[a] != a:
            comp[a] = comp[comp[a]]
            a = comp[a]
        return a

    chosen = []
    phases = 0
    eu, ev = hu[edge_ids], hv[edge_ids]
    order = np.lexsort((edge_ids, pr))
    while True:
        best = {}
        for i in order.tolist():
            a, b = find(int(eu[i])), find(int(ev[i]))
            if a == b:
                continue
            for c in (a, b):
                if c not in best:
                    best[c] = i
        if not best:
            break
        phases += 1
        for c in sorted(best):
            i = best[c]
            a, b = find(int(eu[i])), find(int(ev[i]))
            if a != b:
                comp[a] = b
                chosen.append(int(edge_ids[i]))
    roots = {find(x) for x in verts}
    if len(roots) != 1:
        raise InvalidParams("supervertex union is not connected")
    return np.array(sorted(chosen), dtype=np.int64), phases


def _union_tree(members, tree_edges, extra_edges, hu, hv):
    edges = np.concatenate([np.asarray(t, dtype=np.int64) for t in tree_edges] +
                           [np.asarray(extra_edges, dtype=np.int64)])
    return boruvka_tree(members, edges, hu, hv)


# ------------------------------------------------------------------ compose / contract

def compose(outer, inner, sim=None):
    """inner embeds G1 into G2 (host: G2 graph); outer embeds G2 into the network."""
    hu, hv = outer.host_edges()
    members, roots, trees = [], [], []
    max_phases = 0
    for v in range(inner.n):
        ws = inner.members[v].tolist()
        S = np.unique(np.concatenate([outer.members[w] for w in ws]))
        extra = []
        for f in inner.trees[v].tolist():
            he = outer.images[f, 2]
            if he >= 0:
                extra.append(he)
        tr, ph = _union_tree(S, [outer.trees[w] for w in ws], extra, hu, hv)
        max_phases = max(max_phases, ph)
        members.append(S)
        roots.append(outer.roots[inner.roots[v]])
        trees.append(tr)
    images = np.empty((inner.m, 3), dtype=np.int64)
    for e, (wx, wy, f) in enumerate(inner.images.tolist()):
        if f >= 0:
            images[e] = outer.images[f]
        else:
            r = outer.roots[wx]
            images[e] = (r, r, -1)
    res = MinorDistribution(outer.host, members, roots, trees, images)
    if sim is not None and max_phases:
        with sim.phase("compose"):
            for _ in range(max_phases):
                _charge(outer, sim, "aggregate", 2)
                _charge(outer, sim, "broadcast", 2)
    return res


def star_contraction_labels(n, fu, fv, seed=0):
    """Random-mate star contraction of the edges (fu, fv) until none cross classes.

    Each round every class flips a coin; a tail class adjacent (via a
    remaining edge) to head classes joins the one with maximum random
    priority, ties to the lowest id. Returns (labels, rounds).
    """
    rng = np.random.default_rng(seed)
    lab = np.arange(n)
    fu, fv = np.asarray(fu, dtype=np.int64), np.asarray(fv, dtype=np.int64)
    rounds = 0
    while True:
        a, b = lab[fu], lab[fv]
        live = a != b
        if not live.any():
            break
        rounds += 1
        a, b = a[live], b[live]
        head = rng.random(n) < 0.5
        prio = rng.random(n)
        target = {}
        for x, y in zip(np.concatenate([a, b]).tolist(), np.concatenate([b, a]).tolist()):
            if not head[x] and head[y]:
                cur = target.get(x)
                if cur is None or prio[y] > prio[cur] or (prio[y] == prio[cur] and y < cur):
                    target[x] = y
        if target:
            remap = np.arange(n)
            for x, y in target.items():
                remap[x] = y
            lab = remap[lab]
        if rounds > 64 * max(1, int(np.log2(n + 1))) + 64:
            raise RuntimeError("star contraction did not converge")
    return lab, rounds


def contract_edges(md, g, F, seed=0, sim=None):
    """Contract minor edges F. Returns (quotient graph, new distribution, labels).

    Contracted edges vanish; other edges inside a class become self-loops.
    labels maps each old minor vertex to its new vertex id (classes ordered
    by smallest old id).
    """
    F = np.asarray(F)
    if F.dtype == bool:
        F = np.flatnonzero(F)
    F = np.unique(F.astype(np.int64))
    if len(F) == 0:
        return g.copy(), md, np.arange(g.n)
    raw, rounds = star_contraction_labels(g.n, g.u[F], g.v[F], seed)
    # canonical ids by smallest member
    classes = defaultdict(list)
    for x in range(g.n):
        classes[int(raw[x])].append(x)
    groups = sorted(classes.values(), key=lambda c: c[0])
    labels = np.empty(g.n, dtype=np.int64)
    for i, c in enumerate(groups):
        labels[c] = i
    hu, hv = md.host_edges()
    fmask = np.zeros(g.m, dtype=bool)
    fmask[F] = True
    extra_by_class = defaultdict(list)
    for e in F.tolist():
        he = md.images[e, 2]
        if he >= 0:
            extra_by_class[int(labels[g.u[e]])].append(he)
    members, roots, trees = [], [], []
    for i, c in enumerate(groups):
        if len(c) == 1:
            members.append(md.members[c[0]])
            roots.append(md.roots[c[0]])
            trees.append(md.trees[c[0]])
            continue
        S = np.unique(np.concatenate([md.members[x] for x in c]))
        tr, _ = _union_tree(S, [md.trees[x] for x in c], extra_by_class[i], hu, hv)
        members.append(S)
        roots.append(md.roots[c[0]])
        trees.append(tr)
    keep = ~fmask
    q = WeightedGraph(len(groups), labels[g.u[keep]], labels[g.v[keep]], g.w[keep])
    res = MinorDistribution(md.host, members, roots, trees, md.images[keep])
    if sim is not None:
        with sim.phase("contract"):
            for _ in range(rounds):
                _charge(md, sim, "aggregate", 1)
                _charge(md, sim, "broadcast", 1)
    return q, res, labels
