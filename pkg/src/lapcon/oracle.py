"""Exact dense linear algebra used as ground truth."""
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import NotInRange, SingularBlock, NullSpaceMismatch, NotSDD
from .graph import WeightedGraph

RANK_TOL = 1e-12


def laplacian(g):
    return g.dense_laplacian()


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


def kernel_components(L):
    """Component labels of the graph underlying Laplacian L."""
    L = sp.csr_matrix(L)
    return connected_components(L, directed=False)[1]


def project_mean_zero(b, labels):
    """Subtract the per-component mean (columns of b handled independently)."""
    b = np.asarray(b, dtype=float)
    k = labels.max() + 1 if len(labels) else 0
    cnt = np.bincount(labels, minlength=k).astype(float)
    if b.ndim == 1:
        means = np.bincount(labels, b, minlength=k) / cnt
        return b - means[labels]
    if k == 1:
        return b - b.mean(axis=0)
    sums = np.zeros((k,) + b.shape[1:])
    np.add.at(sums, labels, b)
    return b - (sums / cnt[:, None])[labels]


class DenseLaplacianSolver:
    """Reusable pseudoinverse of a (dense) Laplacian via eigendecomposition."""

    def __init__(self, L):
        self.L = _dense(L)
        self.labels = kernel_components(self.L)
        lam, Q = np.linalg.eigh(self.L)
        # the kernel of a Laplacian is spanned by component indicators
        ncomp = int(self.labels.max()) + 1 if len(self.labels) else 0
        keep = np.zeros(len(lam), dtype=bool)
        keep[ncomp:] = True
        scale = max(np.abs(lam).max(), 1.0) if len(lam) else 1.0
        if np.any(lam[keep] <= RANK_TOL * scale):
            raise SingularBlock("matrix is not a connected-component Laplacian")
        self.rank = int(keep.sum())
        self.lam, self.Q = lam[keep], Q[:, keep]

    def solve(self, b, check=True, tol=1e-8):
        b = np.asarray(b, dtype=float)
        bp = project_mean_zero(b, self.labels)
        if check:
            dev = np.linalg.norm(b - bp)
            if dev > tol * max(np.linalg.norm(b), 1e-300) and dev > 1e-14:
                raise NotInRange(f"right side has kernel component of norm {dev:.3g}")
        x = self.Q @ ((self.Q.T @ bp) / (self.lam if bp.ndim == 1 else self.lam[:, None]))
        return project_mean_zero(x, self.labels)

    def pinv(self):
        return (self.Q / self.lam) @ self.Q.T

    def sqrt_pinv(self):
        return (self.Q / np.sqrt(self.lam)) @ self.Q.T


def pinv_apply(L, b, return_projection=False, tol=1e-8):
    """x = L^+ b with x orthogonal to the kernel.

    b must be mean-zero on every connected component (NotInRange otherwise).
    """
    s = DenseLaplacianSolver(L)
    b = np.asarray(b, dtype=float)
    bp = project_mean_zero(b, s.labels)
    x = s.solve(b, tol=tol)
    if return_projection:
        return x, float(np.linalg.norm(b - bp))
    return x


def exact_schur(L, T):
    """SC(L, T) = L_TT - L_TS L_SS^{-1} L_ST, rows/cols in the order of T."""
    L = _dense(L)
    n = L.shape[0]
    T = np.asarray(T, dtype=np.int64)
    mask = np.ones(n, dtype=bool)
    mask[T] = False
    S = np.flatnonzero(mask)
    LTT = L[np.ix_(T, T)]
    if len(S) == 0:
        return LTT.copy()
    LSS = L[np.ix_(S, S)]
    LTS = L[np.ix_(T, S)]
    try:
        c = np.linalg.cholesky(LSS)
    except np.linalg.LinAlgError:
        raise SingularBlock("interior block is not positive definite")
    if np.min(np.diag(c)) ** 2 < RANK_TOL * max(np.abs(LSS).max(), 1.0):
        raise SingularBlock("interior block is numerically singular")
    Y = np.linalg.solve(LSS, LTS.T)
    SC = LTT - LTS @ Y
    return (SC + SC.T) / 2


def leverage_exact(g, e=None):
    """lev_G(e) = w_e b_e^T L^+ b_e for one edge or all edges."""
    res = res_exact(g, e)
    return res * (g.w if e is None else g.w[e])


def res_exact(g, e=None):
    P = DenseLaplacianSolver(g.dense_laplacian()).pinv()
    if e is None:
        d = np.diag(P)
        return d[g.u] + d[g.v] - 2 * P[g.u, g.v]
    a, b = g.u[e], g.v[e]
    return float(P[a, a] + P[b, b] - 2 * P[a, b])


def _range_basis(A, tol):
    lam, Q = np.linalg.eigh(A)
    scale = max(np.abs(lam).max(), 1e-300)
    keep = lam > tol * scale * max(len(lam), 1)
    return Q[:, keep], Q[:, ~keep]


def generalized_eigs(A, B, tol=1e-10):
    """Eigenvalues of B relative to A on range(A); NullSpaceMismatch if kernels differ."""
    A, B = _dense(A), _dense(B)
    A, B = (A + A.T) / 2, (B + B.T) / 2
    R, N = _range_basis(A, tol)
    RB, NB = _range_basis(B, tol)
    if R.shape[1] != RB.shape[1]:
        raise NullSpaceMismatch(f"ranks differ: {R.shape[1]} vs {RB.shape[1]}")
    if N.shape[1]:
        scale = max(np.abs(B).max(), 1e-300)
        if np.abs(B @ N).max() > 1e-7 * scale:
            raise NullSpaceMismatch("kernel of A is not in the kernel of B")
    if R.shape[1] == 0:
        return np.ones(0)
    Ar, Br = R.T @ A @ R, R.T @ B @ R
    # eigenvalues of Ar^{-1/2} Br Ar^{-1/2}
    la, Qa = np.linalg.eigh(Ar)
    S = Qa / np.sqrt(la)
    M = S.T @ Br @ S
    return np.linalg.eigvalsh((M + M.T) / 2)


def approx_factor(A, B):
    """Smallest eps with A ~_eps B."""
    ev = generalized_eigs(A, B)
    if len(ev) == 0:
        return 0.0
    return float(max(np.log(ev.max()), -np.log(max(ev.min(), 1e-300))))


def spectral_approx_check(A, B, eps, slack=1e-9):
    """True iff exp(-eps) A <= B <= exp(eps) A (on the common range)."""
    ev = generalized_eigs(A, B)
    if len(ev) == 0:
        return True
    return bool(ev.min() >= np.exp(-eps) - slack and ev.max() <= np.exp(eps) + slack)


def loewner_leq(A, B, slack=1e-9):
    """A <= B in the Loewner order, up to relative slack."""
    D = _dense(B) - _dense(A)
    scale = max(np.abs(_dense(A)).max(), np.abs(_dense(B)).max(), 1e-300)
    return bool(np.linalg.eigvalsh((D + D.T) / 2).min() >= -slack * scale)


def is_sdd(M, tol=1e-12):
    M = _dense(M)
    if not np.allclose(M, M.T, atol=tol * max(np.abs(M).max(), 1.0)):
        return False
    off = np.abs(M).sum(axis=1) - np.abs(np.diag(M))
    return bool(np.all(np.diag(M) >= off - tol * max(np.abs(M).max(), 1.0)))


def gremban_expand(M):
    """Laplacian graph H on 2n vertices with L(H)[x; -x] = [Mx; -Mx].

    Returns (H, recover) where recover(y) = (y[:n] - y[n:]) / 2. Solve
    L(H) y = [b; -b] and recover to get M^+ b.
    """
    Md = _dense(M)
    if not is_sdd(Md):
        raise NotSDD("matrix is not symmetric diagonally dominant")
    n = Md.shape[0]
    iu, ju = np.triu_indices(n, 1)
    vals = Md[iu, ju]
    neg = vals < 0
    pos = vals > 0
    us, vs, ws = [], [], []
    # negative off-diagonals: same-side copies
    us += [iu[neg], iu[neg] + n]
    vs += [ju[neg], ju[neg] + n]
    ws += [-vals[neg], -vals[neg]]
    # positive off-diagonals: cross copies
    us += [iu[pos], iu[pos] + n]
    vs += [ju[pos] + n, ju[pos]]
    ws += [vals[pos], vals[pos]]
    slack = np.diag(Md) - (np.abs(Md).sum(axis=1) - np.abs(np.diag(Md)))
    sl = slack > 1e-15 * max(np.abs(Md).max(), 1.0)
    idx = np.flatnonzero(sl)
    us.append(idx)
    vs.append(idx + n)
    ws.append(slack[sl] / 2)
    H = WeightedGraph(2 * n, np.concatenate(us), np.concatenate(vs), np.concatenate(ws))

    def recover(y):
        y = np.asarray(y, dtype=float)
        return (y[:n] - y[n:]) / 2

    return H, recover


def gremban_rhs(b):
    b = np.asarray(b, dtype=float)
    return np.concatenate([b, -b])


def woodbury_check(A, U, C, V):
    """Max entrywise deviation of the Woodbury identity.

    (A + U C V)^{-1} = A^{-1} - A^{-1} U (C^{-1} + V A^{-1} U)^{-1} V A^{-1}
    Pseudoinverses are used, so singular A (e.g. U = 0 with A^+) is accepted.
    """
    A, U, C, V = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (A, U, C, V))
    Ai = np.linalg.pinv(A)
    lhs = np.linalg.pinv(A + U @ C @ V)
    if not np.any(U) or not np.any(V):
        return float(np.abs(lhs - Ai).max())
    inner = np.linalg.pinv(np.linalg.pinv(C) + V @ Ai @ U)
    rhs = Ai - Ai @ U @ inner @ V @ Ai
    return float(np.abs(lhs - rhs).max())


def lnorm(L, x):
    """||x||_L = sqrt(x^T L x)."""
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(max(x @ (L @ x), 0.0)))


def relative_lnorm_error(L, x, b, solver=None):
    """||x - L^+ b||_L / ||b||_{L^+}."""
    s = solver or DenseLaplacianSolver(L)
    xs = s.solve(b, check=False)
    Ld = s.L
    den = np.sqrt(max(b @ xs, 0.0))
    if den == 0:
        return float(lnorm(Ld, x))
    return lnorm(Ld, x - xs) / den
