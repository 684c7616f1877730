"""Schur-complement solver chains, Chebyshev iteration and the end-to-end Laplacian solver."""
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT
from .elim import eliminate
from .errors import (BadBounds, ChainInvalid, Disconnected, InvalidParams, NotMeanZero,
                     NonConvergence)
from .graph import WeightedGraph
from .minor import neighbor_round
from .oracle import DenseLaplacianSolver, exact_schur, approx_factor
from .schur import approx_sc, schur_on_terminals
from .sketch import SolverHandle
from .sparsify import sparsify_kx
from .ultra import ultrasparsify


def parameters_default(n_bar):
    """(eps, d, k) = ((1/log n)^10, (log log n)^2, 2^((log n)^(2/3))), log base 2, clamped."""
    if n_bar < 2:
        raise InvalidParams("n_bar must be >= 2")
    lg = np.log2(n_bar)
    eps = min(lg ** -10, 0.1)
    d = max(1, int(round(np.log2(lg) ** 2))) if lg > 1 else 1
    k = max(8, int(round(2 ** (lg ** (2 / 3)))))
    return eps, d, k


def _center(x):
    return x - x.mean(axis=0)


def _charge_global(md, sim, label, words=1):
    if sim is None or md is None:
        return
    D = getattr(md.host, "diameter", 0)
    sim.charge(2 * max(int(D), 1) + words - 1, label=label)


@dataclass
class ChainStage:
    G: WeightedGraph
    md: object
    elim: object           # Elimination on G; elim.terminals are the vertices kept
    T_next: np.ndarray     # where each kept vertex sits in the next graph
    source: str            # "approx_sc" or "elimination"
    checks: dict = field(default_factory=dict)


@dataclass
class SCChain:
    stages: list
    base_graph: WeightedGraph
    base_md: object
    params: dict
    base: object = None
    sim: object = None

    def __post_init__(self):
        if self.base_graph.n > 0:
            self.base = DenseLaplacianSolver(self.base_graph.dense_laplacian())

    @property
    def n(self):
        return self.stages[0].G.n if self.stages else self.base_graph.n

    def sizes(self):
        return [st.G.n for st in self.stages] + [self.base_graph.n]

    def apply(self, b):
        return pseudoinverse_multi(self, b)

    __call__ = apply

    def to_dict(self):
        return {"sizes": self.sizes(), "params": {k: v for k, v in self.params.items()},
                "stages": [{"n": st.G.n, "m": st.G.m, "kept": int(len(st.elim.terminals)),
                            "source": st.source, "checks": st.checks} for st in self.stages]}


def _base_solve(chain, b):
    _charge_global(chain.base_md, chain.sim, "chain_base", chain.base_graph.n)
    if chain.base is None:
        return np.zeros_like(b)
    return chain.base.solve(b, check=False)


def pseudoinverse_multi(chain, b, level=0):
    """Recursive application of the chain: forward elimination, recurse on the kept block, back-substitute."""
    b = np.asarray(b, dtype=float)
    if level == 0 and b.shape[0] != chain.n:
        raise ChainInvalid(f"vector of length {b.shape[0]} for a chain on {chain.n} vertices")
    if level == len(chain.stages):
        return _center(_base_solve(chain, b))
    st = chain.stages[level]
    nxt = chain.stages[level + 1].G.n if level + 1 < len(chain.stages) else chain.base_graph.n
    if nxt >= st.G.n:
        raise ChainInvalid("chain sizes must strictly decrease")
    ys, u = st.elim.forward(b)
    neighbor_round(st.md, chain.sim, 1 if b.ndim == 1 else b.shape[1], "chain_apply")
    c = np.zeros((nxt,) + b.shape[1:])
    c[st.T_next] = _center(u)
    v = pseudoinverse_multi(chain, c, level + 1)
    x = st.elim.backward(ys, _center(v[st.T_next]))
    neighbor_round(st.md, chain.sim, 1 if b.ndim == 1 else b.shape[1], "chain_apply")
    return _center(x)


def check_stage(st, eps):
    """Oracle checks of the operator sandwich and of the Schur-complement match for one stage."""
    G, E = st.G, st.elim
    L = G.dense_laplacian()
    C = E.terminals
    sc = exact_schur(L, C)
    sc_pinv = DenseLaplacianSolver(sc) if len(C) > 0 else None
    W = E.matrix(inner=(lambda y: sc_pinv.solve(y, check=False)) if sc_pinv else None)
    op = approx_factor(np.linalg.pinv(L), W)
    return {"operator_factor": op, "sc_factor": None}


def _stage_sc_factor(G, C, H, T_next):
    return approx_factor(exact_schur(G.dense_laplacian(), C), schur_on_terminals(H, T_next))


def build_chain(g, md=None, d=1, eps=0.5, k=8, seed=0, sim=None, cfg=DEFAULT, solver=None,
                check=False):
    """Alternate elimination and minor Schur sparsification until at most max(k, base_size) vertices remain.

    Each stage keeps the approx_sc output when it has fewer vertices than
    the stage input; otherwise the elimination's own sparsified Schur
    complement becomes the next graph.
    """
    if d < 1 or k < 1 or not 0 < eps < 1:
        raise InvalidParams("need d >= 1, k >= 1 and eps in (0, 1)")
    rng = np.random.default_rng(seed)
    stages = []
    cur, cur_md = g, md
    limit = max(k, cfg.base_size)
    while cur.n > limit:
        if len(stages) >= cfg.max_depth * 10:
            raise ChainInvalid("chain did not shrink below the base size")
        E = eliminate(cur, cur_md, d, eps, seed=int(rng.integers(2 ** 31)), sim=sim, cfg=cfg)
        C = E.terminals
        H, mdH, T_next, source = None, None, None, "elimination"
        if solver is not None:
            Hs, mds, Ts, _ = approx_sc(cur, cur_md, C, eps, solver, seed=int(rng.integers(2 ** 31)),
                                       sim=sim, cfg=cfg)
            if Hs.n < cur.n:
                H, mdH, T_next, source = Hs, mds, Ts, "approx_sc"
        if H is None:
            H, mdH, T_next = E.graph, E.md, np.arange(len(C))
        st = ChainStage(cur, cur_md, E, np.asarray(T_next, dtype=np.int64), source)
        if check and cur.n <= cfg.oracle_cutoff:
            st.checks = check_stage(st, eps)
            st.checks["sc_factor"] = _stage_sc_factor(cur, C, H, st.T_next)
            st.checks["kept"] = int(len(C))
        stages.append(st)
        cur, cur_md = H, mdH
    return SCChain(stages, cur, cur_md, {"d": d, "eps": eps, "k": k}, sim=sim)


# ------------------------------------------------------------------ Chebyshev

def chebyshev(apply_A, apply_precond, b, iters, eig_bounds, x0=None, history=None,
              patience=5):
    """Preconditioned Chebyshev iteration for eigenvalues of P^-1 A inside eig_bounds.

    Raises BadBounds if the residual grows for `patience` consecutive steps.
    """
    lo, hi = map(float, eig_bounds)
    if not 0 < lo <= hi:
        raise InvalidParams("eig_bounds must satisfy 0 < lo <= hi")
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_A(x) if x0 is not None else b.copy()
    theta, delta = (hi + lo) / 2, (hi - lo) / 2
    z = apply_precond(r)
    if delta <= 1e-12 * theta:
        for _ in range(iters):
            x = x + z / theta
            r = b - apply_A(x)
            z = apply_precond(r)
            if history is not None:
                history.append(float(np.linalg.norm(r)))
        return x
    sigma = theta / delta
    rho = 1 / sigma
    dvec = z / theta
    last, grow = np.linalg.norm(r), 0
    for _ in range(iters):
        x = x + dvec
        r = r - apply_A(dvec)
        nr = float(np.linalg.norm(r))
        if history is not None:
            history.append(nr)
        grow = grow + 1 if nr > last else 0
        if grow >= patience:
            raise BadBounds("residual grew for %d consecutive iterations" % patience)
        last = nr
        z = apply_precond(r)
        rho_new = 1 / (2 * sigma - rho)
        dvec = rho_new * rho * dvec + (2 * rho_new / delta) * z
        rho = rho_new
    return x


def chebyshev_iterations(kappa, reduction):
    """Iterations for 2 ((sqrt k - 1)/(sqrt k + 1))^i <= reduction."""
    if kappa <= 1 + 1e-12:
        return 1
    s = np.sqrt(kappa)
    return int(np.ceil(np.log(2 / reduction) / np.log((s + 1) / (s - 1))))


def lanczos_bounds(apply_A, apply_precond, n, steps=30, seed=0):
    """Extreme Ritz values of P^-1 A from preconditioned conjugate-gradient coefficients."""
    rng = np.random.default_rng(seed)
    b = _center(rng.standard_normal(n))
    x = np.zeros(n)
    r = b.copy()
    z = apply_precond(r)
    p = z.copy()
    rz = r @ z
    rz0 = rz
    alphas, betas = [], []
    for _ in range(min(steps, max(n - 1, 1))):
        Ap = apply_A(p)
        pAp = p @ Ap
        if pAp <= 0 or rz <= 0:
            break
        a = rz / pAp
        alphas.append(a)
        x += a * p
        r -= a * Ap
        z = apply_precond(r)
        rz_new = r @ z
        if rz_new <= 1e-20 * rz0:
            break
        beta = rz_new / rz
        betas.append(beta)
        p = z + beta * p
        rz = rz_new
    if not alphas:
        return 1.0, 1.0
    k = len(alphas)
    T = np.zeros((k, k))
    for i in range(k):
        T[i, i] = 1 / alphas[i] + (betas[i - 1] / alphas[i - 1] if i > 0 else 0)
        if i + 1 < k:
            T[i, i + 1] = T[i + 1, i] = np.sqrt(betas[i]) / alphas[i]
    ev = np.linalg.eigvalsh(T)
    return float(max(ev.min(), 1e-12)), float(ev.max())


# ------------------------------------------------------------------ end-to-end solver

class ChainPreconditioner:
    """Sparsify, ultrasparsify, build the chain on the reduced graph and expose P^-1."""

    def __init__(self, g, md=None, seed=0, sim=None, cfg=DEFAULT, k=None, d=None, check=False):
        if g.n == 0:
            raise InvalidParams("empty graph")
        if not g.is_connected():
            raise Disconnected("graph is disconnected")
        self.g, self.md, self.sim, self.cfg = g, md, sim, cfg
        _, d0, k0 = parameters_default(max(g.n, 2))
        self.k = int(k or cfg.chain_k or k0)
        self.d = int(d or cfg.chain_d or d0)
        rng = np.random.default_rng(seed)
        s = rng.integers(2 ** 31, size=4)
        self.L = g.laplacian()
        self.sparse, self.sparse_md, _ = sparsify_kx(g, md, cfg.chain_eps, seed=int(s[0]), sim=sim, cfg=cfg)
        self.ultra = ultrasparsify(self.sparse, self.sparse_md, self.k, seed=int(s[1]), sim=sim, cfg=cfg)
        self.chain = build_chain(self.ultra.G_hat, self.ultra.md_hat, self.d, cfg.chain_eps, self.k,
                                 seed=int(s[2]), sim=sim, cfg=cfg, check=check)
        self.applications = 0
        self.bounds = lanczos_bounds(self.apply_A, self.apply, g.n, seed=int(s[3]))

    def apply_A(self, x):
        neighbor_round(self.md, self.sim, 1 if np.ndim(x) == 1 else np.shape(x)[1], "matvec")
        return self.L @ x

    def apply(self, r):
        self.applications += 1
        inner = self.chain.apply if self.ultra.G_hat.n > 0 else (lambda y: y)
        for _ in range(self.ultra.info.get("rounds", 0)):
            neighbor_round(self.md, self.sim, 1, "ultra_apply")
        return self.ultra.solve(r, inner)

    __call__ = apply

    def info(self):
        return {"k": self.k, "d": self.d, "bounds": list(self.bounds),
                "ultra_kept": int(self.ultra.G_hat.n), "chain": self.chain.to_dict()}


def _check_rhs(b, n, tol=1e-8):
    b = np.asarray(b, dtype=float)
    if b.shape[0] != n:
        raise InvalidParams(f"right-hand side has {b.shape[0]} rows, graph has {n} vertices")
    s = np.abs(b.sum(axis=0))
    if np.any(s > tol * np.maximum(np.abs(b).sum(axis=0), 1.0)):
        raise NotMeanZero("right-hand side is not orthogonal to the all-ones vector")
    return _center(b)


def solve_with(pre, b, eps_target=1e-8, max_refine=60, reduction=1e-4, history=None):
    """Chebyshev steps with P as preconditioner inside iterative refinement."""
    b = _check_rhs(b, pre.g.n)
    if not np.any(b):
        return np.zeros_like(b), {"refinements": 0, "iterations": 0}
    lo, hi = pre.bounds
    hi *= 1.2
    lo_safe = lo / 2
    x = np.zeros_like(b)
    bnorm = np.sqrt(np.maximum(np.sum(b * pre.apply(b), axis=0), 0) / hi)
    total, attempts = 0, 0
    for it in range(max_refine):
        r = b - pre.apply_A(x)
        z = pre.apply(r)
        _charge_global(pre.md, pre.sim, "refinement")
        est = np.sqrt(np.maximum(np.sum(r * z, axis=0), 0) / lo_safe)
        if np.all(est <= 0.1 * eps_target * bnorm):
            return _center(x), {"refinements": it, "iterations": total, "bounds": (lo, hi)}
        iters = chebyshev_iterations(hi / lo, reduction)
        try:
            dx = chebyshev(pre.apply_A, pre.apply, r, iters, (lo, hi), history=history)
        except BadBounds:
            attempts += 1
            if attempts > 8:
                raise
            hi *= 2
            continue
        total += iters
        x = _center(x + dx)
    raise NonConvergence(f"no convergence to {eps_target} after {max_refine} refinements")


def solve(g, md, b, eps_target=1e-8, seed=0, sim=None, cfg=DEFAULT, k=None, d=None,
          return_info=False):
    """x with ||x - L^+ b||_L <= eps_target ||b||_{L^+}."""
    if not g.is_connected():
        raise Disconnected("graph is disconnected")
    _check_rhs(b, g.n)
    pre = ChainPreconditioner(g, md, seed=seed, sim=sim, cfg=cfg, k=k, d=d)
    x, info = solve_with(pre, b, eps_target)
    if return_info:
        return x, {**info, **pre.info()}
    return x


def recursive_solver(cfg=DEFAULT, accuracy=1e-9, depth=0, seed=0):
    """SolverHandle that answers sketch solves with the chain solver itself, depth-capped."""
    if depth > cfg.max_depth:
        raise ChainInvalid(f"solver recursion deeper than {cfg.max_depth}")
    cache = {}

    def cb(h, B):
        pre = cache.get(id(h))
        if pre is None or pre.g is not h:
            pre = ChainPreconditioner(h, None, seed=seed + depth, cfg=cfg)
            cache.clear()
            cache[id(h)] = pre
        return solve_with(pre, _center(np.asarray(B, dtype=float)), accuracy)[0]

    return SolverHandle(cb, accuracy, f"chain[{depth}]")
