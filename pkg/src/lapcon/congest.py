"""Synchronous CONGEST simulator: word budgets per edge per round, round counters."""
import hashlib
import json
from collections import defaultdict, deque
from contextlib import contextmanager

import numpy as np
from scipy.sparse.csgraph import shortest_path
import scipy.sparse as sp

from .errors import BudgetExceeded, Disconnected, InvalidParams, MalformedFile
from .graph import WeightedGraph


class Network:
    """Communication graph. adjacency[x] lists (edge id, neighbor)."""

    def __init__(self, n, u, v, word_budget=1):
        if word_budget < 1:
            raise InvalidParams("word_budget must be >= 1")
        self.vertex_count = int(n)
        self.eu = np.asarray(u, dtype=np.int64)
        self.ev = np.asarray(v, dtype=np.int64)
        self.word_budget = int(word_budget)
        self.adjacency = [[] for _ in range(self.vertex_count)]
        for e, (a, b) in enumerate(zip(self.eu.tolist(), self.ev.tolist())):
            if a == b:
                raise InvalidParams("host network cannot have self-loops")
            self.adjacency[a].append((e, b))
            self.adjacency[b].append((e, a))
        self._diameter = None

    @classmethod
    def from_graph(cls, g, word_budget=1):
        keep = g.u != g.v
        return cls(g.n, g.u[keep], g.v[keep], word_budget)

    @property
    def n(self):
        return self.vertex_count

    @property
    def edge_count(self):
        return len(self.eu)

    def other(self, e, x):
        a = int(self.eu[e])
        return int(self.ev[e]) if a == x else a

    def hop_distances(self):
        A = sp.csr_matrix((np.ones(len(self.eu)), (self.eu, self.ev)),
                          shape=(self.n, self.n))
        return shortest_path(A, unweighted=True, directed=False)

    @property
    def diameter(self):
        if self._diameter is None:
            if self.n <= 1:
                self._diameter = 0
            else:
                d = self.hop_distances()
                if np.isinf(d).any():
                    raise Disconnected("network is disconnected")
                self._diameter = int(d.max())
        return self._diameter

    def is_connected(self):
        try:
            self.diameter
        except Disconnected:
            return False
        return True


class RoundStats:
    def __init__(self):
        self.rounds = 0
        self.peak_edge_words = 0
        self.phases = defaultdict(int)
        self.messages = 0

    def charge(self, label, rounds, peak=0):
        """Account for a schedule whose cost was measured earlier (memoized replay)."""
        self.rounds += int(rounds)
        self.phases[label] += int(rounds)
        self.peak_edge_words = max(self.peak_edge_words, int(peak))

    def merge(self, other):
        self.rounds += other.rounds
        self.peak_edge_words = max(self.peak_edge_words, other.peak_edge_words)
        self.messages += other.messages
        for k, v in other.phases.items():
            self.phases[k] += v

    def to_dict(self):
        return {"rounds": int(self.rounds), "peak_edge_words": int(self.peak_edge_words),
                "phases": {k: int(v) for k, v in sorted(self.phases.items())}}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def __repr__(self):
        return f"RoundStats(rounds={self.rounds}, peak={self.peak_edge_words})"


class VertexProgram:
    """Per-vertex state machine. `step(inbox) -> outbox`.

    inbox and outbox are lists of (edge id, tuple of words). Subclasses keep all
    state on self and must be deterministic given that state and the inbox.
    """

    def step(self, inbox):
        return []

    def active(self):
        return False


class FunctionProgram(VertexProgram):
    """Wraps a pure function step(state, inbox) -> (outbox, new_state)."""

    def __init__(self, state, fn, active=None):
        self.state = state
        self.fn = fn
        self._active = active

    def step(self, inbox):
        out, self.state = self.fn(self.state, inbox)
        return out

    def active(self):
        return bool(self._active(self.state)) if self._active else False


class Simulator:
    """Owns in-flight messages, the RoundStats counter and an optional trace."""

    def __init__(self, net, stats=None, trace=False):
        self.net = net
        self.stats = stats if stats is not None else RoundStats()
        self.trace = [] if trace else None
        self._phase = []
        self.inboxes = [[] for _ in range(net.n)]

    @contextmanager
    def phase(self, label):
        self._phase.append(label)
        try:
            yield
        finally:
            self._phase.pop()

    def _label(self):
        return self._phase[-1] if self._phase else "other"

    def charge(self, rounds, peak=0, label=None):
        self.stats.charge(label or self._label(), rounds, peak)

    def pending(self):
        return any(self.inboxes)

    def run_round(self, programs):
        """One synchronous round. Returns a RoundStats delta."""
        net = self.net
        budget = net.word_budget
        load = defaultdict(int)
        nxt = [[] for _ in range(net.n)]
        nmsg = 0
        rnd = self.stats.rounds
        for x in range(net.n):
            inbox = self.inboxes[x]
            out = programs[x].step(inbox) if programs[x] is not None else []
            for e, words in out:
                if e < 0 or e >= net.edge_count:
                    raise InvalidParams(f"vertex {x} sent on unknown edge {e}")
                a, b = int(net.eu[e]), int(net.ev[e])
                if x != a and x != b:
                    raise InvalidParams(f"vertex {x} sent on non-incident edge {e}")
                y = b if x == a else a
                words = tuple(words)
                load[(e, x)] += len(words)
                if load[(e, x)] > budget:
                    raise BudgetExceeded(
                        f"edge {e} direction {x}->{y} carried {load[(e, x)]} words "
                        f"in round {rnd + 1} (budget {budget})")
                nxt[y].append((e, words))
                nmsg += 1
                if self.trace is not None:
                    self.trace.append((rnd + 1, x, e, words))
        self.inboxes = nxt
        delta = RoundStats()
        delta.rounds = 1
        delta.peak_edge_words = max(load.values()) if load else 0
        delta.messages = nmsg
        delta.phases[self._label()] = 1
        self.stats.merge(delta)
        return delta

    def run(self, programs, max_rounds=10 ** 6):
        """Run rounds until no program is active and nothing is in flight."""
        start = self.stats.rounds
        peak = 0
        while self.pending() or any(p.active() for p in programs if p is not None):
            if self.stats.rounds - start >= max_rounds:
                raise RuntimeError("round cap exceeded")
            peak = max(peak, self.run_round(programs).peak_edge_words)
        return self.stats.rounds - start, peak

    def trace_digest(self):
        h = hashlib.sha256()
        for item in self.trace or []:
            h.update(repr(item).encode())
        return h.hexdigest()


def run_round(net, programs, sim=None):
    """Execute one round on `net`; returns the RoundStats delta."""
    sim = sim or Simulator(net)
    return sim.run_round(programs)


class QueuedProgram(VertexProgram):
    """Vertex program with per-edge FIFO queues of fixed-length messages.

    Each round at most word_budget words leave on each edge; longer messages
    are split into chunks and reassembled on the far side.
    """

    def __init__(self, x, net, msg_len):
        self.x = x
        self.net = net
        self.msg_len = msg_len
        self.queues = {}
        self.partial = defaultdict(list)

    def send(self, e, msg):
        assert len(msg) == self.msg_len
        self.queues.setdefault(e, deque()).extend(msg)

    def receive(self, e, msg):
        raise NotImplementedError

    def on_round(self):
        """Hook after inbox processing, before draining queues."""

    def step(self, inbox):
        for e, words in inbox:
            buf = self.partial[e]
            buf.extend(words)
            while len(buf) >= self.msg_len:
                msg = tuple(buf[:self.msg_len])
                del buf[:self.msg_len]
                self.receive(e, msg)
        self.on_round()
        out = []
        B = self.net.word_budget
        for e in sorted(self.queues):
            q = self.queues[e]
            if q:
                k = min(B, len(q))
                out.append((e, tuple(q.popleft() for _ in range(k))))
        return out

    def active(self):
        return any(self.queues.values())


# ---------------------------------------------------------------- BFS tree

class BFSTree:
    def __init__(self, root, parent, parent_edge, depth, children):
        self.root = root
        self.parent = parent
        self.parent_edge = parent_edge
        self.depth = depth
        self.children = children

    @property
    def height(self):
        return int(max(self.depth)) if len(self.depth) else 0


class _BFSProgram(VertexProgram):
    ACK = -1

    def __init__(self, x, net, root):
        self.x, self.net = x, net
        self.depth = 0 if x == root else None
        self.parent = -1
        self.parent_edge = -1
        self.children = []
        self.to_send = x == root

    def step(self, inbox):
        for e, (w,) in inbox:
            if w == self.ACK:
                self.children.append(self.net.other(e, self.x))
        if self.depth is None:
            waves = sorted((w, e) for e, (w,) in inbox if w != self.ACK)
            if waves:
                d, e = waves[0]
                self.depth = int(d) + 1
                self.parent_edge = e
                self.parent = self.net.other(e, self.x)
                self.to_send = True
        out = []
        if self.to_send:
            self.to_send = False
            for e, y in self.net.adjacency[self.x]:
                if e == self.parent_edge:
                    out.append((e, (self.ACK,)))
                elif y != self.parent:
                    out.append((e, (self.depth,)))
        return out

    def active(self):
        return self.to_send


def build_bfs_tree(net, root=0, sim=None):
    """Flood from root; each vertex keeps the lowest-depth, lowest-edge sender as parent."""
    sim = sim or Simulator(net)
    progs = [_BFSProgram(x, net, root) for x in range(net.n)]
    with sim.phase("bfs"):
        sim.run(progs)
    if any(p.depth is None for p in progs):
        raise Disconnected("some vertex was not reached from the root")
    return BFSTree(root,
                   np.array([p.parent for p in progs]),
                   np.array([p.parent_edge for p in progs]),
                   np.array([p.depth for p in progs]),
                   [sorted(p.children) for p in progs])


_OPS = {"sum": lambda a, b: a + b, "min": min, "max": max}


class _AggProgram(VertexProgram):
    def __init__(self, x, tree, value, op):
        self.x = x
        self.tree = tree
        self.acc = value
        self.op = _OPS[op]
        self.waiting = len(tree.children[x])
        self.sent_up = False
        self.result = None
        self.sent_down = False

    def step(self, inbox):
        pe = self.tree.parent_edge[self.x]
        for e, (w,) in inbox:
            if e == pe:
                self.result = w
            else:
                self.acc = self.op(self.acc, w)
                self.waiting -= 1
        out = []
        if self.waiting == 0 and not self.sent_up:
            self.sent_up = True
            if pe >= 0:
                out.append((pe, (self.acc,)))
            else:
                self.result = self.acc
        if self.result is not None and not self.sent_down:
            self.sent_down = True
            for c in self.tree.children[self.x]:
                e = self._child_edge(c)
                out.append((e, (self.result,)))
        return out

    def _child_edge(self, c):
        return int(self.tree.parent_edge[c])

    def active(self):
        return not self.sent_down


def global_aggregate(net, tree, values, op="sum", sim=None):
    """Convergecast then broadcast along a BFS tree; every vertex learns the fold."""
    if op not in _OPS:
        raise InvalidParams(f"unknown op {op}")
    sim = sim or Simulator(net)
    progs = [_AggProgram(x, tree, values[x], op) for x in range(net.n)]
    with sim.phase("global_aggregate"):
        sim.run(progs)
    res = [p.result for p in progs]
    return res


# ---------------------------------------------------------------- generators

def _connect_components(n, edges):
    g = WeightedGraph.from_edges(n, edges) if edges else WeightedGraph(n, [], [], [])
    k, lab = g.components()
    if k > 1:
        reps = [int(np.flatnonzero(lab == c)[0]) for c in range(k)]
        for a, b in zip(reps[:-1], reps[1:]):
            edges.append((a, b))
    return edges


def generate_graph(kind, params=(), seed=0, weights="unit", word_budget=1):
    """Seeded generator. Returns (Network, WeightedGraph).

    kinds and params: path (n), star (n), cycle (n), grid (rows, cols),
    erdos_renyi (n, p), barbell (clique size, path length).
    weights: "unit" or "random" (uniform in [1, 10]).
    """
    rng = np.random.default_rng(seed)
    params = tuple(params) if isinstance(params, (tuple, list)) else (params,)
    try:
        if kind == "path":
            (n,) = params
            n = int(n)
            edges = [(i, i + 1) for i in range(n - 1)]
        elif kind == "star":
            (n,) = params
            n = int(n)
            edges = [(0, i) for i in range(1, n)]
        elif kind == "cycle":
            (n,) = params
            n = int(n)
            if n < 3:
                raise InvalidParams("cycle needs n >= 3")
            edges = [(i, (i + 1) % n) for i in range(n)]
        elif kind == "grid":
            if len(params) == 1:
                params = (params[0], params[0])
            a, b = int(params[0]), int(params[1])
            n = a * b
            edges = [(i * b + j, i * b + j + 1) for i in range(a) for j in range(b - 1)]
            edges += [(i * b + j, (i + 1) * b + j) for i in range(a - 1) for j in range(b)]
        elif kind == "erdos_renyi":
            n, p = int(params[0]), float(params[1])
            if not 0 <= p <= 1:
                raise InvalidParams("p must be in [0, 1]")
            iu, ju = np.triu_indices(n, 1)
            keep = rng.random(len(iu)) < p
            edges = list(zip(iu[keep].tolist(), ju[keep].tolist()))
            edges = _connect_components(n, edges)
        elif kind == "barbell":
            k = int(params[0])
            ell = int(params[1]) if len(params) > 1 else 1
            if k < 2 or ell < 1:
                raise InvalidParams("barbell needs clique size >= 2 and path length >= 1")
            edges = [(i, j) for i in range(k) for j in range(i + 1, k)]
            # path of ell edges from vertex k-1 through ell-1 new vertices to the second clique
            mids = list(range(2 * k, 2 * k + ell - 1))
            chain = [k - 1] + mids + [k]
            edges += list(zip(chain[:-1], chain[1:]))
            edges += [(k + i, k + j) for i in range(k) for j in range(i + 1, k)]
            n = 2 * k + ell - 1
        else:
            raise InvalidParams(f"unknown graph kind {kind!r}")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidParams):
            raise
        raise InvalidParams(f"bad params {params!r} for {kind}: {exc}")
    if n < 1:
        raise InvalidParams("graph needs at least one vertex")
    edges = sorted((min(a, b), max(a, b)) for a, b in edges)
    m = len(edges)
    if weights == "unit":
        w = np.ones(m)
    elif weights == "random":
        w = rng.uniform(1.0, 10.0, m)
    else:
        raise InvalidParams(f"unknown weights mode {weights!r}")
    arr = np.array(edges, dtype=np.int64).reshape(-1, 2)
    g = WeightedGraph(n, arr[:, 0], arr[:, 1], w)
    return Network.from_graph(g, word_budget), g


# ---------------------------------------------------------------- file formats

def read_graph(path):
    """Text format: 'n m' then m lines 'u v w' (0-based ids, positive weights)."""
    try:
        with open(path) as fh:
            lines = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    except OSError as exc:
        raise MalformedFile(f"cannot read {path}: {exc}")
    try:
        n, m = int(lines[0][0]), int(lines[0][1])
        if len(lines) - 1 != m:
            raise MalformedFile(f"header announces {m} edges, file has {len(lines) - 1}")
        rows = [(int(a), int(b), float(c)) for a, b, c in lines[1:]]
    except MalformedFile:
        raise
    except (IndexError, ValueError) as exc:
        raise MalformedFile(f"malformed graph file {path}: {exc}")
    if not rows:
        return WeightedGraph(n, [], [], [])
    try:
        return WeightedGraph.from_edges(n, rows)
    except InvalidParams as exc:
        raise MalformedFile(str(exc))


def write_graph(path, g):
    with open(path, "w") as fh:
        fh.write(f"{g.n} {g.m}\n")
        for a, b, w in g.edges():
            fh.write(f"{a} {b} {w!r}\n")
