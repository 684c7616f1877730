"""Undirected weighted multigraph with Laplacian accessors."""
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import InvalidParams


class WeightedGraph:
    """Edges (u[e], v[e]) with weight w[e] > 0; resistance r = 1/w.

    Parallel edges and self-loops are allowed. Self-loops never touch the
    Laplacian. Edge e is oriented u -> v in the incidence matrix.
    """

    def __init__(self, n, u, v, w=None):
        self.n = int(n)
        self.u = np.asarray(u, dtype=np.int64).reshape(-1)
        self.v = np.asarray(v, dtype=np.int64).reshape(-1)
        if w is None:
            w = np.ones(len(self.u))
        self.w = np.asarray(w, dtype=float).reshape(-1)
        if not (len(self.u) == len(self.v) == len(self.w)):
            raise InvalidParams("edge arrays differ in length")
        if len(self.u) and (self.u.min() < 0 or self.v.min() < 0
                            or max(self.u.max(), self.v.max()) >= self.n):
            raise InvalidParams("edge endpoint out of range")
        if not np.all(np.isfinite(self.w)) or np.any(self.w <= 0):
            raise InvalidParams("weights must be finite and positive")

    @classmethod
    def from_edges(cls, n, edges):
        edges = list(edges)
        if not edges:
            return cls(n, [], [], [])
        arr = np.array(edges, dtype=float)
        if arr.shape[1] == 2:
            arr = np.column_stack([arr, np.ones(len(arr))])
        return cls(n, arr[:, 0].astype(int), arr[:, 1].astype(int), arr[:, 2])

    @property
    def m(self):
        return len(self.u)

    @property
    def r(self):
        return 1.0 / self.w

    def edges(self):
        return list(zip(self.u.tolist(), self.v.tolist(), self.w.tolist()))

    def copy(self):
        return WeightedGraph(self.n, self.u.copy(), self.v.copy(), self.w.copy())

    def with_weights(self, w):
        return WeightedGraph(self.n, self.u, self.v, w)

    def subgraph(self, idx, w=None):
        """Edge-induced subgraph on the same vertex set (idx: mask or indices)."""
        idx = np.asarray(idx)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        ww = self.w[idx] if w is None else np.asarray(w, dtype=float)
        return WeightedGraph(self.n, self.u[idx], self.v[idx], ww)

    def loops(self):
        return self.u == self.v

    def incidence(self):
        """Sparse m x n signed incidence: row e = chi_u - chi_v."""
        m = self.m
        rows = np.concatenate([np.arange(m), np.arange(m)])
        cols = np.concatenate([self.u, self.v])
        vals = np.concatenate([np.ones(m), -np.ones(m)])
        return sp.csr_matrix((vals, (rows, cols)), shape=(m, self.n))

    def laplacian(self):
        """Sparse CSR Laplacian; parallel edges summed, loops ignored."""
        keep = self.u != self.v
        u, v, w = self.u[keep], self.v[keep], self.w[keep]
        n = self.n
        rows = np.concatenate([u, v, u, v])
        cols = np.concatenate([v, u, u, v])
        vals = np.concatenate([-w, -w, w, w])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def dense_laplacian(self):
        return self.laplacian().toarray()

    def weighted_degree(self):
        keep = self.u != self.v
        return (np.bincount(self.u[keep], self.w[keep], minlength=self.n)
                + np.bincount(self.v[keep], self.w[keep], minlength=self.n))

    def degree(self):
        keep = self.u != self.v
        return (np.bincount(self.u[keep], minlength=self.n)
                + np.bincount(self.v[keep], minlength=self.n))

    def adjacency_lists(self):
        """Per vertex list of (edge id, other endpoint); loops listed once."""
        adj = [[] for _ in range(self.n)]
        for e, (a, b) in enumerate(zip(self.u.tolist(), self.v.tolist())):
            adj[a].append((e, b))
            if a != b:
                adj[b].append((e, a))
        return adj

    def components(self):
        A = sp.csr_matrix((np.ones(self.m), (self.u, self.v)), shape=(self.n, self.n))
        return connected_components(A, directed=False)

    def is_connected(self):
        if self.n <= 1:
            return True
        return self.components()[0] == 1

    def simple(self):
        """Merge parallel edges (conductances add) and drop self-loops."""
        keep = self.u != self.v
        a = np.minimum(self.u[keep], self.v[keep])
        b = np.maximum(self.u[keep], self.v[keep])
        if len(a) == 0:
            return WeightedGraph(self.n, [], [], [])
        key = a * self.n + b
        uniq, inv = np.unique(key, return_inverse=True)
        w = np.bincount(inv, self.w[keep])
        return WeightedGraph(self.n, uniq // self.n, uniq % self.n, w)

    def induced(self, vertices):
        """Subgraph induced on `vertices`, relabeled 0..k-1 in the given order."""
        vertices = np.asarray(vertices, dtype=np.int64)
        pos = -np.ones(self.n, dtype=np.int64)
        pos[vertices] = np.arange(len(vertices))
        keep = (pos[self.u] >= 0) & (pos[self.v] >= 0)
        return WeightedGraph(len(vertices), pos[self.u[keep]], pos[self.v[keep]], self.w[keep])

    def __repr__(self):
        return f"WeightedGraph(n={self.n}, m={self.m})"

    def __eq__(self, other):
        return (isinstance(other, WeightedGraph) and self.n == other.n
                and np.array_equal(self.u, other.u) and np.array_equal(self.v, other.v)
                and np.array_equal(self.w, other.w))

    __hash__ = None


def from_laplacian(L, tol=0.0):
    """Graph whose Laplacian is L (off-diagonals below -tol become edges)."""
    L = sp.coo_matrix(L)
    mask = (L.row < L.col) & (L.data < -tol)
    return WeightedGraph(L.shape[0], L.row[mask], L.col[mask], -L.data[mask])
