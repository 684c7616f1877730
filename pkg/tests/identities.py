"""Dense linear-algebra identities checked on seeded random instances.

Each check returns a relative deviation (equalities) or a relative violation
(inequalities, 0 when the bound holds); the suites require <= 1e-8.
"""
import numpy as np

from lapcon.congest import generate_graph
from lapcon.oracle import (approx_factor, exact_schur, gremban_expand, gremban_rhs, lnorm,
                           woodbury_check)

TOL = 1e-8


def random_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 21))
    _, g = generate_graph("erdos_renyi", (n, float(rng.uniform(0.2, 0.7))), seed=seed,
                          weights="random")
    L = g.dense_laplacian()
    k = int(rng.integers(1, n - 1))
    T = np.sort(rng.choice(n, k, replace=False))
    return rng, L, T, np.setdiff1d(np.arange(n), T)


def _rel(a, b):
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1.0))


def cholesky(seed):
    """L = [I 0; L_TF L_FF^-1 I] diag(L_FF, SC) [I L_FF^-1 L_FT; 0 I] in (F, T) order."""
    _, L, T, F = random_instance(seed)
    P = np.concatenate([F, T])
    M = L[np.ix_(P, P)]
    f = len(F)
    LFF, LFT = M[:f, :f], M[:f, f:]
    X = np.linalg.solve(LFF, LFT)
    low = np.eye(len(P))
    low[f:, :f] = X.T
    mid = np.zeros_like(M)
    mid[:f, :f] = LFF
    mid[f:, f:] = exact_schur(L, T)
    return _rel(low @ mid @ low.T, M)


def inverse_minor(seed):
    """SC(L,T) (L^+)_TT SC(L,T) = SC(L,T)."""
    _, L, T, _ = random_instance(seed)
    S = exact_schur(L, T)
    Lp = np.linalg.pinv(L)
    return _rel(S @ Lp[np.ix_(T, T)] @ S, S)


def energy_extension(seed):
    """x_T' SC x_T equals the energy of the harmonic extension, and no extension does better."""
    rng, L, T, F = random_instance(seed)
    S = exact_schur(L, T)
    xT = rng.standard_normal(len(T))
    x = np.zeros(L.shape[0])
    x[T] = xT
    x[F] = -np.linalg.solve(L[np.ix_(F, F)], L[np.ix_(F, T)] @ xT)
    e_sc, e_ext = xT @ S @ xT, x @ L @ x
    y = x.copy()
    y[F] += rng.standard_normal(len(F))
    worse = max(0.0, (e_ext - y @ L @ y) / max(e_ext, 1.0))
    return max(abs(e_sc - e_ext) / max(e_sc, 1.0), worse)


def woodbury(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(3, 15)), int(rng.integers(1, 5))
    A = rng.standard_normal((n, n))
    A = A @ A.T + n * np.eye(n)
    C = rng.standard_normal((k, k))
    C = C @ C.T + np.eye(k)
    U = rng.standard_normal((n, k))
    return woodbury_check(A, U, C, U.T) / max(np.abs(np.linalg.inv(A)).max(), 1.0)


def row_sum_bound(seed):
    """||M||_2 <= max_i sum_j |M_ij| for symmetric M."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 30))
    M = rng.standard_normal((n, n)) * rng.uniform(0.1, 10)
    M = (M + M.T) / 2
    bound = np.abs(M).sum(axis=1).max()
    return max(0.0, (np.linalg.norm(M, 2) - bound) / bound)


def gremban_recovery(seed):
    """Solving the doubled Laplacian system and recovering gives M^+ b."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 15))
    M = rng.standard_normal((n, n)) * (rng.random((n, n)) < 0.5)
    M = (M + M.T) / 2
    np.fill_diagonal(M, 0)
    np.fill_diagonal(M, np.abs(M).sum(axis=1) + rng.uniform(0, 1, n) * (rng.random(n) < 0.5))
    b = M @ rng.standard_normal(n)
    H, recover = gremban_expand(M)
    x = recover(np.linalg.pinv(H.dense_laplacian()) @ gremban_rhs(b))
    return _rel(M @ x, b)


def perturbation_bound(seed):
    """If A ~_d B then ||A^+ b - B^+ b||_A <= 10 d ||b||_{A^+}."""
    rng, A, _, _ = random_instance(seed)
    n = A.shape[0]
    _, g2 = generate_graph("erdos_renyi", (n, 0.5), seed=seed + 1, weights="random")
    B = A + rng.uniform(0.001, 0.3) * g2.dense_laplacian()
    d = approx_factor(A, B)
    b = rng.standard_normal(n)
    b -= b.mean()
    Ap, Bp = np.linalg.pinv(A), np.linalg.pinv(B)
    lhs = lnorm(A, Ap @ b - Bp @ b)
    rhs = 10 * d * np.sqrt(b @ Ap @ b)
    return max(0.0, (lhs - rhs) / max(rhs, 1e-300))


IDENTITIES = {"cholesky": cholesky, "inverse_minor": inverse_minor,
              "energy_extension": energy_extension, "woodbury": woodbury,
              "row_sum_bound": row_sum_bound, "gremban_recovery": gremban_recovery,
              "perturbation_bound": perturbation_bound}


def run(name, count=100, start=0):
    return np.array([IDENTITIES[name](s) for s in range(start, start + count)])
