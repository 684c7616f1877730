import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lapcon.congest import generate_graph
from lapcon.graph import WeightedGraph
from lapcon.errors import NotInRange, SingularBlock, NullSpaceMismatch, NotSDD
from lapcon.oracle import (laplacian, pinv_apply, exact_schur, leverage_exact, res_exact,
                           spectral_approx_check, gremban_expand, gremban_rhs, woodbury_check,
                           DenseLaplacianSolver, lnorm)


def random_graph(seed, n=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(5, 30))
    _, g = generate_graph("erdos_renyi", (n, 0.3), seed=seed, weights="random")
    return g


def test_laplacian_examples():
    g = WeightedGraph(2, [0], [1], [3.0])
    assert np.array_equal(laplacian(g), [[3, -3], [-3, 3]])
    g = WeightedGraph(3, [0, 1, 0], [1, 2, 2])
    L = laplacian(g)
    assert np.allclose(np.diag(L), 2) and np.allclose(L - np.diag(np.diag(L)), -(1 - np.eye(3)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_laplacian_properties(seed):
    L = laplacian(random_graph(seed))
    assert np.allclose(L, L.T)
    assert np.allclose(L.sum(axis=1), 0)
    off = L - np.diag(np.diag(L))
    assert (off <= 0).all()


def test_pinv_apply_examples():
    g = WeightedGraph(2, [0], [1])
    assert np.allclose(pinv_apply(laplacian(g), np.zeros(2)), 0)
    assert np.allclose(pinv_apply(laplacian(g), [1, -1]), [0.5, -0.5])
    with pytest.raises(NotInRange):
        pinv_apply(laplacian(g), [1, 0])


@pytest.mark.parametrize("seed", range(10))
def test_pinv_apply_residual(seed):
    g = random_graph(seed)
    L = laplacian(g)
    b = np.random.default_rng(seed).standard_normal(g.n)
    b -= b.mean()
    x, proj = pinv_apply(L, b, return_projection=True)
    assert proj < 1e-12
    assert abs(x.sum()) < 1e-9
    assert np.linalg.norm(L @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_pinv_disconnected_componentwise():
    g = WeightedGraph(4, [0, 2], [1, 3])
    L = laplacian(g)
    x = pinv_apply(L, [1, -1, 2, -2])
    assert np.allclose(L @ x, [1, -1, 2, -2])
    with pytest.raises(NotInRange):
        pinv_apply(L, [1, 0, 0, -1])


def test_exact_schur_examples():
    L = laplacian(WeightedGraph(3, [0, 1], [1, 2]))
    assert np.allclose(exact_schur(L, [0, 2]), [[0.5, -0.5], [-0.5, 0.5]])
    L = laplacian(WeightedGraph(4, [0, 0, 0], [1, 2, 3]))
    S = exact_schur(L, [1, 2, 3])
    assert np.allclose(S, (3 * np.eye(3) - np.ones((3, 3))) / 3)
    assert np.allclose(exact_schur(L, range(4)), L)
    L = laplacian(WeightedGraph(4, [0], [1]))
    with pytest.raises(SingularBlock):
        exact_schur(L, [0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_schur_transitivity_and_laplacian(seed):
    g = random_graph(seed)
    rng = np.random.default_rng(seed)
    L = laplacian(g)
    T1 = np.sort(rng.choice(g.n, max(2, g.n // 2), replace=False))
    T2 = T1[: max(1, len(T1) // 2)]
    S1 = exact_schur(L, T1)
    pos = {t: i for i, t in enumerate(T1)}
    S12 = exact_schur(S1, [pos[t] for t in T2])
    assert np.allclose(S12, exact_schur(L, T2), atol=1e-9)
    assert np.allclose(S1.sum(axis=1), 0, atol=1e-9)


def test_leverage_examples():
    _, tree = generate_graph("path", (6,), weights="random", seed=1)
    assert np.allclose(leverage_exact(tree), 1)
    tri = WeightedGraph(3, [0, 1, 0], [1, 2, 2])
    assert np.allclose(leverage_exact(tri), 2 / 3)
    assert np.isclose(leverage_exact(tri, 0), 2 / 3)
    assert np.isclose(res_exact(tri, 1), 2 / 3)


@pytest.mark.parametrize("seed", range(10))
def test_leverage_sum(seed):
    g = random_graph(seed)
    lev = leverage_exact(g)
    assert (lev >= -1e-12).all() and (lev <= 1 + 1e-12).all()
    assert abs(lev.sum() - (g.n - 1)) < 1e-9


def test_spectral_check():
    g = random_graph(3)
    A = laplacian(g)
    for eps in (0, 0.1, 1):
        assert spectral_approx_check(A, A, eps)
    eps = 0.2
    B = np.exp(2 * eps) * A
    assert not spectral_approx_check(A, B, eps)
    assert spectral_approx_check(A, B, 2 * eps)
    C = laplacian(WeightedGraph(g.n, [0], [1]))
    with pytest.raises(NullSpaceMismatch):
        spectral_approx_check(A, C, 1)


def test_gremban_examples():
    M = np.array([[3.0, 1], [1, 3]])
    H, rec = gremban_expand(M)
    assert H.n == 4
    b = np.array([1.0, 2.0])
    y = pinv_apply(laplacian(H), gremban_rhs(b))
    assert np.allclose(rec(y), np.linalg.solve(M, b), atol=1e-8)
    g = random_graph(4)
    L = laplacian(g)
    H, rec = gremban_expand(L)
    assert H.m == 2 * g.simple().m
    b = np.random.default_rng(0).standard_normal(g.n)
    b -= b.mean()
    assert np.allclose(rec(pinv_apply(laplacian(H), gremban_rhs(b))), pinv_apply(L, b), atol=1e-8)
    with pytest.raises(NotSDD):
        gremban_expand(np.array([[1.0, 2], [2, 1]]))


@pytest.mark.parametrize("seed", range(10))
def test_gremban_principal_minor(seed):
    g = random_graph(seed)
    rng = np.random.default_rng(seed)
    L = laplacian(g)
    F = np.sort(rng.choice(g.n, g.n // 2, replace=False))
    M = L[np.ix_(F, F)]
    H, rec = gremban_expand(M)
    b = rng.standard_normal(len(F))
    x = rec(pinv_apply(laplacian(H), gremban_rhs(b)))
    assert np.allclose(x, np.linalg.solve(M, b), atol=1e-8)


def test_woodbury_examples():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((6, 6))
    A = A @ A.T + 6 * np.eye(6)
    assert woodbury_check(A, np.zeros((6, 2)), np.eye(2), np.zeros((2, 6))) < 1e-12
    u = rng.standard_normal((6, 1))
    # Sherman-Morrison closed form
    I = np.eye(6)
    sm = I - (u @ u.T) / (1 + u.T @ u)
    assert np.allclose(np.linalg.inv(I + u @ u.T), sm)
    assert woodbury_check(I, u, np.eye(1), u.T) < 1e-10
    A = rng.standard_normal((10, 10)) + 10 * np.eye(10)
    U, V = rng.standard_normal((10, 3)), rng.standard_normal((3, 10))
    C = np.diag(rng.uniform(1, 2, 3))
    assert woodbury_check(A, U, C, V) <= 1e-8


def test_lnorm():
    g = random_graph(1)
    L = laplacian(g)
    x = np.ones(g.n)
    assert lnorm(L, x) < 1e-7
    assert DenseLaplacianSolver(L).rank == g.n - 1
