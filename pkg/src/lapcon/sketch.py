"""Randomized estimators phrased against an abstract Laplacian-solve callback."""
import numpy as np
from scipy.linalg import hadamard

from .config import DEFAULT
from .errors import EmptyTerminals, SolverFailure
from .minor import comm_cost, edge_exchange_rounds
from .oracle import DenseLaplacianSolver, gremban_expand, project_mean_zero, kernel_components


class SolverHandle:
    """callback(graph, B) -> X approximately solving L(graph) X = B column-wise.

    `accuracy` is the relative L-norm error the callback guarantees.
    """

    def __init__(self, callback, accuracy, name="custom"):
        self.callback = callback
        self.accuracy = accuracy
        self.name = name
        self.calls = 0

    def __call__(self, g, B):
        self.calls += 1 if np.ndim(B) == 1 else np.shape(B)[1]
        X = self.callback(g, B)
        if not np.all(np.isfinite(X)):
            raise SolverFailure("solver returned non-finite values")
        return X


def oracle_solver(cache_size=4):
    """Exact dense solves (factorization cached per graph object)."""
    cache = {}

    def cb(g, B):
        key = id(g)
        hit = cache.get(key)
        if hit is None or hit[0] is not g:
            if len(cache) >= cache_size:
                cache.pop(next(iter(cache)))
            hit = (g, DenseLaplacianSolver(g.laplacian().toarray()))
            cache[key] = hit
        return hit[1].solve(B, check=False)

    return SolverHandle(cb, 1e-12, "oracle")


def _charge_edges(md, sim, t, kinds):
    if sim is None or md is None:
        return
    with sim.phase("sketch"):
        for k in kinds:
            if k == "exchange":
                r = edge_exchange_rounds(md, t)
                if r:
                    sim.charge(r, min(t, md.host.word_budget), label="minor_edge_exchange")
            else:
                comm_cost(md, sim, k, t)


def jl_rows(n, delta, cfg=DEFAULT):
    return int(np.ceil(cfg.c_jl * delta ** -2 * np.log(max(n, 2))))


def lev_apx(g, md, solver, delta, seed=0, sim=None, cfg=DEFAULT):
    """Leverage estimates w_e ||Q W^{1/2} B L^+ b_e||^2 / t with Q random +-1 (t x m)."""
    rng = np.random.default_rng(seed)
    t = jl_rows(g.n, delta, cfg)
    B = g.incidence()
    sw = np.sqrt(g.w)
    Q = rng.choice([-1.0, 1.0], size=(g.m, t))
    rhs = B.T @ (sw[:, None] * Q)          # n x t, columns mean-zero
    _charge_edges(md, sim, t, ["exchange", "aggregate"])
    Y = solver(g, rhs)
    _charge_edges(md, sim, t, ["broadcast", "exchange"])
    D = B @ Y
    return g.w * np.einsum("ij,ij->i", D, D) / t


def _cauchy_batch(g, solver, groups, t, rng, md, sim):
    """For each (src, dst) pair: median-recovered sum_{f in src} |b_e^T L^+ b_f| / sqrt(r_e r_f), e in dst.

    All groups share one multi-column solve.
    """
    B = g.incidence()
    sw = np.sqrt(g.w)
    k = len(groups)
    C = rng.standard_cauchy(size=(g.m, k * t))
    mask = np.zeros((g.m, k * t))
    for i, (src, _) in enumerate(groups):
        mask[src, i * t:(i + 1) * t] = 1.0
    rhs = B.T @ (sw[:, None] * mask * C)
    _charge_edges(md, sim, k * t, ["exchange", "aggregate"])
    Y = solver(g, rhs)
    _charge_edges(md, sim, k * t, ["broadcast", "exchange"])
    Z = np.abs(B @ Y) * sw[:, None]
    # median of |standard Cauchy| is 1
    return [np.median(Z[dst, i * t:(i + 1) * t], axis=1) for i, (_, dst) in enumerate(groups)]


def column_apx(g, md, solver, W=None, seed=0, sim=None, cfg=DEFAULT, repeats=None, rows=None):
    """Estimates of s_e = sum_{f in W, f != e} |b_e^T L^+ b_f| / sqrt(r_e r_f) for e in W.

    Returns an array over all edges; edges outside W get the full sum over W.
    Bipartitions come from the columns of a K x K Hadamard matrix: each edge of
    W gets a random row, and two distinct rows disagree in exactly K/2 columns,
    so each pair is split K/2 times unless the rows collide.
    """
    rng = np.random.default_rng(seed)
    W = np.arange(g.m) if W is None else np.asarray(W, dtype=np.int64)
    if W.dtype == bool:
        W = np.flatnonzero(W)
    ln = np.log(max(g.n, 2))
    t = rows or int(np.ceil(cfg.c_cauchy * ln))
    want = repeats or max(cfg.min_partitions, int(np.ceil(cfg.c_partitions * ln)))
    K = 1 << int(np.ceil(np.log2(max(want, 2))))
    out = np.zeros(g.m)
    if len(W) <= 1:
        return out
    Hd = hadamard(K)
    code = rng.permutation(K)[: len(W)] if len(W) <= K else rng.integers(K, size=len(W))
    groups = []
    for j in range(1, K):
        side = Hd[code, j] > 0
        U, V = W[side], W[~side]
        if len(U) and len(V):
            groups += [(V, U), (U, V)]
    rest = np.setdiff1d(np.arange(g.m), W)
    if len(rest):
        groups.append((W, rest))
    res = _cauchy_batch(g, solver, groups, t, rng, md, sim)
    acc = np.zeros(g.m)
    for (_, dst), r in zip(groups, res):
        acc[dst] += r
    out[W] = 2 * acc[W] / K
    if len(rest):
        out[rest] = res[-1]
    return out


def _sdd_solver(g, solver, S):
    """Solve L_SS x = a through the Gremban expansion of the interior block."""
    L = g.laplacian().tocsr()
    LSS = L[S][:, S]
    H, recover = gremban_expand(LSS.toarray())

    def solve(a):
        rhs = np.vstack([a, -a]) if a.ndim == 2 else np.concatenate([a, -a])
        return recover(solver(H, rhs))

    return solve, L


def diff_target_exact(g, T):
    """r_e^{-1} b_e^T L^+ [SC 0; 0 0] L^+ b_e computed densely."""
    from .oracle import exact_schur
    T = np.asarray(sorted(set(int(x) for x in T)), dtype=np.int64)
    L = g.dense_laplacian()
    P = DenseLaplacianSolver(L).pinv()
    SC = exact_schur(L, T)
    B = g.incidence().toarray()
    Y = (B @ P)[:, T]
    return g.w * np.einsum("ij,jk,ik->i", Y, SC, Y)


def diff_apx(g, md, solver, T, seed=0, sim=None, cfg=DEFAULT, delta=0.5):
    """Estimates of w_e b_e^T L^+ [SC(G,T) 0; 0 0] L^+ b_e.

    SC energy of y_T equals the energy of its harmonic extension
    x = [y_T; -L_SS^{-1} L_ST y_T], so the target is w_e ||W^{1/2} B H L^+ b_e||^2
    with H the harmonic-extension operator; JL-sketched with +-1 rows.
    """
    T = np.asarray(sorted(set(int(x) for x in T)), dtype=np.int64)
    if len(T) == 0:
        raise EmptyTerminals("terminal set is empty")
    rng = np.random.default_rng(seed)
    n = g.n
    S = np.setdiff1d(np.arange(n), T)
    t = jl_rows(n, delta, cfg)
    B = g.incidence()
    sw = np.sqrt(g.w)
    Q = rng.choice([-1.0, 1.0], size=(g.m, t))
    A = B.T @ (sw[:, None] * Q)                       # n x t
    c = np.zeros_like(A)
    c[T] = A[T]
    if len(S):
        ssolve, L = _sdd_solver(g, solver, S)
        X = ssolve(A[S])                              # L_SS^{-1} a_S
        c[T] -= L[T][:, S] @ X
    c = project_mean_zero(c, kernel_components(g.laplacian()))
    _charge_edges(md, sim, t, ["exchange", "aggregate", "aggregate"])
    Y = solver(g, c)
    _charge_edges(md, sim, t, ["broadcast", "exchange"])
    D = B @ Y
    return g.w * np.einsum("ij,ij->i", D, D) / t


def column_exact(g, W=None):
    """Dense reference for column_apx."""
    P = DenseLaplacianSolver(g.dense_laplacian()).pinv()
    B = g.incidence().toarray()
    sw = np.sqrt(g.w)
    M = np.abs((B @ P @ B.T) * np.outer(sw, sw))
    W = np.arange(g.m) if W is None else np.asarray(W)
    if W.dtype == bool:
        W = np.flatnonzero(W)
    mask = np.zeros(g.m, dtype=bool)
    mask[W] = True
    out = M[:, mask].sum(axis=1) - np.where(mask, np.diag(M), 0.0)
    return out
