"""Sparsified block Cholesky: diagonally dominant subsets, Jacobi blocks and random-walk Schur complements."""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .config import DEFAULT
from .errors import Failure, NotAlphaDD, InvalidParams
from .graph import WeightedGraph
from .minor import MinorDistribution, neighbor_round, boruvka_tree
from .oracle import project_mean_zero
from .sparsify import sparsify_kx


def _csr(L):
    if isinstance(L, WeightedGraph):
        return L.laplacian()
    return sp.csr_matrix(L, dtype=float)


def _offdiag_abs_rowsum(L, cols_mask):
    """Row sums of |L_ij| over j != i with cols_mask[j]."""
    C = sp.coo_matrix(L)
    ok = (C.row != C.col) & cols_mask[C.col]
    return np.bincount(C.row[ok], np.abs(C.data[ok]), minlength=L.shape[0])


def _global_round(md, sim, label):
    """Leader aggregate plus broadcast over a BFS tree of the host: 2 D rounds."""
    if sim is None or md is None:
        return
    D = getattr(md.host, "diameter", 0)
    sim.charge(2 * max(int(D), 1), label=label)


def is_alpha_dd(L, F, alpha, tol=1e-12):
    """Row-wise check |L_ii| >= (1 + alpha) sum_{j in F, j != i} |L_ij| for i in F."""
    L = _csr(L)
    F = np.asarray(F, dtype=np.int64)
    mask = np.zeros(L.shape[0], dtype=bool)
    mask[F] = True
    off = _offdiag_abs_rowsum(L, mask)[F]
    diag = np.abs(L.diagonal()[F])
    return bool(np.all(diag >= (1 + alpha) * off - tol * np.maximum(diag, 1.0)))


def dd_alpha(L_FF):
    """Largest alpha for which the block is alpha-DD (inf for a diagonal block)."""
    L_FF = _csr(L_FF)
    off = _offdiag_abs_rowsum(L_FF, np.ones(L_FF.shape[0], dtype=bool))
    diag = np.abs(L_FF.diagonal())
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(off > 0, diag / off - 1, np.inf)
    return float(r.min()) if len(r) else np.inf


def dd_subset(L, md=None, alpha=4.0, seed=0, sim=None, cfg=DEFAULT, return_info=False):
    """Random alpha-DD subset of size at least n / (8 (1 + alpha)).

    Each index is sampled with probability 1 / (4 (1 + alpha)); sampled rows
    failing the dominance test against the sample are dropped; the whole
    draw repeats until the size target is met.
    """
    if alpha < 0:
        raise InvalidParams("alpha must be nonnegative")
    L = _csr(L)
    n = L.shape[0]
    rng = np.random.default_rng(seed)
    p = 1.0 / (4 * (1 + alpha))
    need = int(np.ceil(n / (8 * (1 + alpha))))
    diag = np.abs(L.diagonal())
    for attempt in range(1, cfg.dd_retry_cap + 1):
        sample = rng.random(n) < p
        off = _offdiag_abs_rowsum(L, sample)
        F = np.flatnonzero(sample & (diag >= (1 + alpha) * off))
        neighbor_round(md, sim, 1, "dd_subset")
        _global_round(md, sim, "dd_subset")
        if len(F) >= need:
            return (F, {"retries": attempt - 1, "need": need}) if return_info else F
    raise Failure(f"no alpha-DD subset of size {need} after {cfg.dd_retry_cap} draws")


def jacobi_steps(eps):
    """Smallest odd k with 3 * 2^-k <= eps (the alpha >= 4 contraction rate is 1/2)."""
    k = max(1, int(np.ceil(np.log2(3.0 / eps))))
    return k if k % 2 else k + 1


class JacobiOperator:
    """Z = sum_{i=0}^{k} X^-1 (-Y X^-1)^i for L_FF = X + Y, X diagonal, Y a Laplacian."""

    def __init__(self, L_FF, eps, md=None, sim=None, min_alpha=4.0):
        L_FF = _csr(L_FF)
        a = dd_alpha(L_FF)
        if a < min_alpha - 1e-9:
            raise NotAlphaDD(f"block is only {a:.3g}-DD, need {min_alpha}")
        self.L = L_FF
        off = L_FF - sp.diags(L_FF.diagonal())
        ydiag = -np.asarray(off.sum(axis=1)).ravel()
        self.Y = (off + sp.diags(ydiag)).tocsr()
        self.xdiag = L_FF.diagonal() - ydiag
        self.k = jacobi_steps(eps)
        self.eps = eps
        self.md, self.sim = md, sim

    @property
    def size(self):
        return self.L.shape[0]

    def apply(self, b):
        b = np.asarray(b, dtype=float)
        if self.size == 0:
            return b.copy()
        xinv = 1.0 / self.xdiag if b.ndim == 1 else (1.0 / self.xdiag)[:, None]
        xb = xinv * b
        x = xb
        words = 1 if b.ndim == 1 else b.shape[1]
        for _ in range(self.k):
            neighbor_round(self.md, self.sim, words, "jacobi")
            x = xb - xinv * (self.Y @ x)
        return x

    __call__ = apply

    def matrix(self):
        return self.apply(np.eye(self.size))

    def residue(self, b):
        """||L_FF Z b - b|| / ||b||."""
        b = np.asarray(b, dtype=float)
        nb = np.linalg.norm(b)
        return float(np.linalg.norm(self.L @ self.apply(b) - b) / nb) if nb else 0.0


def jacobi(L_FF, md, b_F, eps, sim=None):
    """Approximate L_FF^-1 b_F with the odd-length Jacobi series."""
    return JacobiOperator(L_FF, eps, md, sim).apply(b_F)


# ------------------------------------------------------------------ random walks

class _WalkGraph:
    """CSR adjacency with per-vertex cumulative weights for inverse-CDF steps."""

    def __init__(self, g):
        keep = np.flatnonzero(g.u != g.v)
        src = np.concatenate([g.u[keep], g.v[keep]])
        dst = np.concatenate([g.v[keep], g.u[keep]])
        eid = np.concatenate([keep, keep])
        order = np.lexsort((eid, src))
        self.dst, self.eid = dst[order], eid[order]
        self.w = g.w[self.eid]
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(src, minlength=g.n))])
        self.cum = np.cumsum(self.w)
        self.start = np.concatenate([[0.0], self.cum])[self.indptr[:-1]]
        self.deg = np.bincount(src, g.w[eid], minlength=g.n)[:g.n] if len(src) else np.zeros(g.n)
        self.n = g.n
        self.w_of = g.w

    def step(self, pos, rng):
        """Sample one weighted out-edge per walker; returns (next vertex, edge id)."""
        target = self.start[pos] + rng.random(len(pos)) * self.deg[pos]
        j = np.searchsorted(self.cum, target, side="right")
        j = np.clip(j, self.indptr[pos], self.indptr[pos + 1] - 1)
        return self.dst[j], self.eid[j]

    def transition(self, mass, free):
        """Move mass one step along P = D^-1 A; mass on terminals is absorbed."""
        deg = np.repeat(self.deg, np.diff(self.indptr))
        src = np.repeat(np.arange(self.n), np.diff(self.indptr))
        out = np.bincount(self.dst, mass[src] * self.w / np.where(deg > 0, deg, 1), minlength=self.n)
        return np.where(free, out, 0.0)


def walk_count(n, eps, cfg=DEFAULT):
    return int(np.ceil(cfg.c_walks * eps ** -2 * np.log(max(n, 2))))


def expected_congestion(g, is_t, mu, alpha, cutoff=None):
    """Expected visits of mu walks per non-terminal edge endpoint, by mass propagation.

    Mass left after the cutoff is added to where it sits, so the estimate
    only errs toward promotion.
    """
    wg = _WalkGraph(g)
    free = ~is_t
    keep = g.u != g.v
    start = (np.bincount(g.u[keep], minlength=g.n) + np.bincount(g.v[keep], minlength=g.n)) * mu
    cur = np.where(free, start, 0).astype(float)
    cutoff = cutoff or int(np.ceil(4 * max(alpha, 1) * np.log(max(g.n, 2))))
    cong = np.zeros(g.n)
    steps = 0
    for _ in range(cutoff):
        if not cur.any():
            break
        cong += cur
        cur = wg.transition(cur, free)
        steps += 1
    return cong + cur, steps


def _simulate(wg, starts, is_t, rng, max_steps):
    """Walk from each start until a terminal. Returns end, resistance, visit and edge logs."""
    k = len(starts)
    pos = starts.copy()
    res = np.zeros(k)
    active = np.flatnonzero(~is_t[pos])
    visits_w, visits_x, edges_w, edges_e = [active], [pos[active]], [], []
    per_step = []
    steps = 0
    while len(active):
        if steps >= max_steps:
            raise Failure("random walk exceeded the step cap")
        nxt, e = wg.step(pos[active], rng)
        res[active] += 1.0 / wg.w_of[e]
        pos[active] = nxt
        edges_w.append(active)
        edges_e.append(e)
        per_step.append(np.bincount(pos[active][~is_t[nxt]], minlength=wg.n).max(initial=0))
        active = active[~is_t[nxt]]
        visits_w.append(active)
        visits_x.append(pos[active])
        steps += 1
    cat = lambda a: np.concatenate(a) if a else np.zeros(0, dtype=np.int64)
    return pos, res, (cat(visits_w), cat(visits_x)), (cat(edges_w), cat(edges_e)), per_step


def _walk_minor(md, g, T_hat, visit_log, edge_log, walker_end):
    """Each terminal owns the supervertices of every vertex on walks ending at it."""
    hu, hv = md.host_edges()
    pos_of = -np.ones(g.n, dtype=np.int64)
    pos_of[T_hat] = np.arange(len(T_hat))
    ww, xx = visit_log
    owners = [set() for _ in T_hat]
    extra = [set() for _ in T_hat]
    for t, x in set(zip(pos_of[walker_end[ww]].tolist(), xx.tolist())):
        owners[t].add(x)
    he = md.images[:, 2]
    ew, ee = edge_log
    for t, e in set(zip(pos_of[walker_end[ew]].tolist(), ee.tolist())):
        if he[e] >= 0:
            extra[t].add(int(he[e]))
    members, roots, trees = [], [], []
    for i, t in enumerate(T_hat.tolist()):
        vs = [t] + sorted(owners[i] - {t})
        if len(vs) == 1:
            members.append(md.members[t])
            roots.append(md.roots[t])
            trees.append(md.trees[t])
            continue
        S = np.unique(np.concatenate([md.members[x] for x in vs]))
        E = np.concatenate([md.trees[x] for x in vs] + [np.array(sorted(extra[i]), dtype=np.int64)])
        tr, _ = boruvka_tree(S, E, hu, hv)
        members.append(S)
        roots.append(md.roots[t])
        trees.append(tr)
    return members, roots, trees


def random_walk_schur(g, md, T, eps, gamma, alpha=4.0, seed=0, sim=None, cfg=DEFAULT,
                      mu=None):
    """Sample L(H) ~ SC(L(g), T_hat) from terminal-free walks.

    Every edge with an endpoint outside T_hat spawns mu walk pairs, one from
    each endpoint until T_hat; the pair becomes an edge between the two hit
    terminals with weight 1 / (mu * total resistance). Edges inside T_hat are
    copied. Non-terminals with expected congestion above gamma join T_hat.
    Returns (H, T_hat, md_H, info); vertex i of H is T_hat[i].
    """
    if gamma < 1:
        raise InvalidParams("gamma must be >= 1")
    rng = np.random.default_rng(seed)
    n = g.n
    is_t = np.zeros(n, dtype=bool)
    is_t[np.asarray(T, dtype=np.int64)] = True
    mu = mu or walk_count(n, eps, cfg)
    cong, steps = expected_congestion(g, is_t, mu, alpha)
    for _ in range(steps):
        neighbor_round(md, sim, 1, "walk_congestion")
    promoted = np.flatnonzero(~is_t & (cong > gamma))
    is_t[promoted] = True
    T_hat = np.flatnonzero(is_t)
    pos_of = -np.ones(n, dtype=np.int64)
    pos_of[T_hat] = np.arange(len(T_hat))

    wg = _WalkGraph(g)
    keep = g.u != g.v
    inside = keep & is_t[g.u] & is_t[g.v]
    walked = np.flatnonzero(keep & ~inside)
    eu = np.repeat(g.u[walked], mu)
    ev = np.repeat(g.v[walked], mu)
    ew = np.repeat(walked, mu)
    starts = np.concatenate([eu, ev])
    cap = max(10 ** 6, 1000 * n)
    end, res, vlog, elog, per_step = _simulate(wg, starts, is_t, rng, cap)
    k = len(ew)
    t1, t2 = end[:k], end[k:]
    total_r = res[:k] + res[k:] + 1.0 / g.w[ew]
    wts = 1.0 / (mu * total_r)
    real = np.bincount(vlog[1], minlength=n)
    for c in per_step:
        neighbor_round(md, sim, max(int(c), 1), "walk_generation")

    hu = np.concatenate([pos_of[g.u[inside]], pos_of[t1]])
    hv = np.concatenate([pos_of[g.v[inside]], pos_of[t2]])
    hw = np.concatenate([g.w[inside], wts])
    src_edge = np.concatenate([np.flatnonzero(inside), ew])
    ok = hu != hv
    hu, hv, hw, src_edge = hu[ok], hv[ok], hw[ok], src_edge[ok]
    a, b = np.minimum(hu, hv), np.maximum(hu, hv)
    nT = len(T_hat)
    key = a * nT + b
    uniq, first, inv = np.unique(key, return_index=True, return_inverse=True)
    H = WeightedGraph(nT, uniq // nT, uniq % nT, np.bincount(inv, hw))
    md_H = None
    if md is not None:
        members, roots, trees = _walk_minor(md, g, T_hat, vlog, elog, end)
        md_H = MinorDistribution(md.host, members, roots, trees, md.images[src_edge[first]])
    lengths = np.bincount(elog[0], minlength=len(starts))
    info = {"mu": mu, "promoted": promoted, "expected_congestion": cong,
            "realized_congestion": real, "max_realized": int(real[~is_t].max(initial=0)),
            "mean_walk_length": float(lengths.mean()) if len(starts) else 0.0,
            "walks": len(starts), "steps": len(per_step)}
    return H, T_hat, md_H, info


# ------------------------------------------------------------------ elimination

@dataclass
class EliminationStage:
    vertices: np.ndarray     # stage input vertices, as ids of the original graph
    F: np.ndarray            # eliminated positions within the stage input
    T_hat: np.ndarray        # surviving positions (terminals plus promoted vertices)
    Z: JacobiOperator        # approximate inverse of the F block
    L_CF: sp.csr_matrix      # off-diagonal block of the stage input Laplacian
    promoted: np.ndarray
    info: dict = field(default_factory=dict)

    def forward(self, b):
        y = self.Z.apply(b[self.F])
        return y, b[self.T_hat] - self.L_CF @ y

    def backward(self, y, x_C, n):
        x = np.zeros((n,) + np.shape(x_C)[1:])
        x[self.T_hat] = x_C
        x[self.F] = y - self.Z.apply(self.L_CF.T @ x_C)
        return x


@dataclass
class Elimination:
    """Z1^T diag(Z2, inner) Z1 as a sequence of block eliminations."""
    n: int
    stages: list
    terminals: np.ndarray    # original ids of the final vertex set
    graph: WeightedGraph     # M^(d) on the terminals, vertex i = terminals[i]
    md: object = None
    info: dict = field(default_factory=dict)

    def forward(self, b):
        ys = []
        for st in self.stages:
            y, b = st.forward(b)
            ys.append(y)
        return ys, b

    def backward(self, ys, x):
        for st, y in zip(reversed(self.stages), reversed(ys)):
            x = st.backward(y, x, len(st.vertices))
        return x

    def solve(self, b, inner=None):
        """Apply the composed operator; inner defaults to the exact pseudoinverse of M^(d)."""
        b = np.asarray(b, dtype=float)
        ys, bT = self.forward(b)
        if inner is None:
            from .oracle import DenseLaplacianSolver
            inner = DenseLaplacianSolver(self.graph.dense_laplacian()).solve
        labels = self.graph.components()[1]
        xT = inner(project_mean_zero(bT, labels))
        x = self.backward(ys, xT)
        return x - x.mean(axis=0)

    def matrix(self, inner=None):
        return self.solve(np.eye(self.n) - 1.0 / self.n, inner)


def default_gamma(n, eps, alpha=4.0, cfg=DEFAULT):
    return 1000 * cfg.c_gamma * alpha * eps ** -2 * np.log(max(n, 2)) ** 6


def eliminate(g, md=None, d=1, eps=0.1, seed=0, sim=None, cfg=DEFAULT, gamma=None,
              sparsify=True):
    """d rounds of alpha-DD elimination with random-walk Schur complements.

    Returns an Elimination whose solve(b, inner) applies the block Cholesky
    operator with inner standing in for SC(M^(d))^+.
    """
    if d < 1:
        raise InvalidParams("d must be >= 1")
    if not 0 < eps < 1:
        raise InvalidParams("eps must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    alpha = cfg.dd_alpha
    M, M_md = g, md
    if sparsify:
        M, M_md, _ = sparsify_kx(g, md, eps, seed=int(rng.integers(2 ** 31)), sim=sim, cfg=cfg)
    vertices = np.arange(g.n)
    stages, sizes = [], [g.n]
    for i in range(d):
        if M.n <= 2:
            break
        L = M.laplacian()
        F, dd_info = dd_subset(L, M_md, alpha, seed=int(rng.integers(2 ** 31)), sim=sim,
                               cfg=cfg, return_info=True)
        T = np.setdiff1d(np.arange(M.n), F)
        gam = gamma if gamma is not None else default_gamma(M.n, eps, alpha, cfg)
        H, T_hat, md_H, winfo = random_walk_schur(M, M_md, T, eps, gam, alpha,
                                                  seed=int(rng.integers(2 ** 31)), sim=sim, cfg=cfg)
        F_eff = np.setdiff1d(np.arange(M.n), T_hat)
        Z = JacobiOperator(L[F_eff][:, F_eff], eps, M_md, sim, min_alpha=alpha)
        stages.append(EliminationStage(vertices, F_eff, T_hat, Z, L[T_hat][:, F_eff].tocsr(),
                                       winfo["promoted"], {"dd": dd_info, "walks": winfo}))
        vertices = vertices[T_hat]
        M, M_md = H, md_H
        if sparsify:
            M, M_md, _ = sparsify_kx(H, md_H, eps, seed=int(rng.integers(2 ** 31)), sim=sim, cfg=cfg)
        sizes.append(M.n)
    return Elimination(g.n, stages, vertices, M, M_md,
                       {"sizes": sizes, "promoted": sum(len(s.promoted) for s in stages)})
