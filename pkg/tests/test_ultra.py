import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lapcon.congest import generate_graph, Simulator
from lapcon.graph import WeightedGraph
from lapcon.minor import MinorDistribution, validate
from lapcon.oracle import generalized_eigs, loewner_leq, DenseLaplacianSolver
from lapcon.ultra import (low_stretch_tree, sample_by_stretch, degree12_eliminate,
                          ultrasparsify)


def tree_path_resistance(g, rt, e):
    return sum(g.r[f] for f in rt.path_edges(int(g.u[e]), int(g.v[e])))


def centered(n):
    return np.eye(n) - np.ones((n, n)) / n


@pytest.mark.parametrize("method", ["akpw", "spt"])
def test_tree_input_has_unit_stretch(method):
    _, g = generate_graph("path", (12,), weights="random", seed=0)
    rt, st, _ = low_stretch_tree(g, method=method)
    assert len(rt.edges) == g.n - 1 and np.allclose(st, 1)


def test_cycle_off_tree_stretch():
    _, g = generate_graph("cycle", (15,))
    rt, st, _ = low_stretch_tree(g, seed=0)
    off = np.setdiff1d(np.arange(g.m), rt.edges)
    assert len(off) == 1 and st[off[0]] >= 14 - 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from(["akpw", "spt"]))
def test_stretch_bounds_valid(seed, method):
    _, g = generate_graph("erdos_renyi", (40, 0.15), seed=seed, weights="random")
    rt, st, _ = low_stretch_tree(g, seed=seed, method=method)
    assert len(rt.edges) == g.n - 1
    assert g.subgraph(rt.edges).is_connected()
    for e in range(g.m):
        assert st[e] >= tree_path_resistance(g, rt, e) / g.r[e] - 1e-9


def test_grid_total_stretch_report():
    net, g = generate_graph("grid", (10, 10), seed=0)
    sim = Simulator(net)
    rt, st, info = low_stretch_tree(g, MinorDistribution.identity(net), seed=0, sim=sim)
    # soft report: the total is logged, the assertion only guards against nonsense
    assert info["total_stretch"] <= 50 * g.m * np.log(g.n) ** 2
    assert sim.stats.rounds > 0


def test_sample_k1_keeps_everything():
    _, g = generate_graph("erdos_renyi", (30, 0.2), seed=1, weights="random")
    rt, st, _ = low_stretch_tree(g, seed=0)
    H, idx, _ = sample_by_stretch(g, rt, st, 1, seed=0)
    assert len(idx) == g.m and np.allclose(H.w, g.w)


def test_sample_cycle_large_k():
    _, g = generate_graph("cycle", (20,))
    rt, st, _ = low_stretch_tree(g, seed=0)
    H, idx, info = sample_by_stretch(g, rt, st, 1000, seed=0)
    assert H.m in (19, 20)
    assert loewner_leq(g.dense_laplacian(), H.dense_laplacian())


def test_sample_er_eigencheck():
    _, g = generate_graph("erdos_renyi", (80, 0.1), seed=0, weights="random")
    L = g.dense_laplacian()
    rt, st, _ = low_stretch_tree(g, seed=0)
    ok = 0
    for seed in range(100):
        H, idx, _ = sample_by_stretch(g, rt, st, 10, seed=seed)
        ev = generalized_eigs(L, H.dense_laplacian())
        assert ev.min() >= 1 - 1e-9
        ok += ev.max() <= 10 * (1 + 1e-6)
    assert ok >= 95


def test_degree12_path():
    _, g = generate_graph("path", (5,))
    G, ops, _ = degree12_eliminate(g, [0, 4])
    assert G.n == 2 and G.m == 1 and np.isclose(G.w[0], 0.25)
    assert set(ops.keep) == {0, 4}


def test_degree12_star_center_protected():
    g = WeightedGraph(6, [0] * 5, [1, 2, 3, 4, 5])
    G, ops, _ = degree12_eliminate(g, [0])
    assert G.n == 1 and G.m == 0 and list(ops.keep) == [0]


def check_factorization(H, G, ops):
    n = H.n
    P = DenseLaplacianSolver(H.dense_laplacian()).pinv()
    inner = DenseLaplacianSolver(G.dense_laplacian()) if G.n else None
    M = ops.solve(centered(n), (lambda y: inner.solve(y, check=False)) if inner else (lambda y: 0 * y))
    return np.abs(M - P).max() / np.abs(P).max()


@pytest.mark.parametrize("seed", range(10))
def test_degree12_random_tree_plus_edges(seed):
    rng = np.random.default_rng(seed)
    n = 40
    parent = [int(rng.integers(0, i)) for i in range(1, n)]
    extra = rng.choice(n, size=(5, 2))
    extra = extra[extra[:, 0] != extra[:, 1]]
    u = np.r_[np.arange(1, n), extra[:, 0]]
    v = np.r_[parent, extra[:, 1]]
    H = WeightedGraph(n, u, v, rng.uniform(0.5, 2, len(u)))
    G, ops, _ = degree12_eliminate(H)
    assert G.n <= 4 * len(extra) + 1
    assert check_factorization(H, G, ops) <= 1e-8


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_degree12_is_exact_schur(seed):
    from lapcon.oracle import exact_schur
    _, H = generate_graph("erdos_renyi", (25, 0.08), seed=seed, weights="random")
    G, ops, _ = degree12_eliminate(H)
    assert np.allclose(exact_schur(H.dense_laplacian(), ops.keep), G.dense_laplacian(), atol=1e-9)
    assert check_factorization(H, G, ops) <= 1e-8


def test_ultrasparsify_k1_equals_g():
    _, g = generate_graph("grid", (5, 5), seed=0, weights="random")
    u = ultrasparsify(g, k=1, seed=0)
    assert np.allclose(u.H.dense_laplacian(), g.dense_laplacian())


def test_ultrasparsify_cycle_solve_chain():
    _, g = generate_graph("cycle", (100,))
    u = ultrasparsify(g, k=50, seed=0)
    assert u.G_hat.n <= 3
    rng = np.random.default_rng(0)
    P = DenseLaplacianSolver(u.H.dense_laplacian())
    for _ in range(5):
        b = rng.standard_normal(g.n)
        b -= b.mean()
        x = u.solve(b)
        ref = P.solve(b)
        assert np.linalg.norm(x - ref) <= 1e-7 * np.linalg.norm(ref)


@pytest.mark.parametrize("seed", range(20))
def test_ultrasparsify_grid_condition(seed):
    net, g = generate_graph("grid", (12, 12), seed=0)
    u = ultrasparsify(g, MinorDistribution.identity(net), k=16, seed=seed, sim=Simulator(net))
    ev = generalized_eigs(g.dense_laplacian(), u.H.dense_laplacian())
    assert ev.min() >= 1 - 1e-9
    assert ev.max() <= 16 * (1 + 1e-6)


def test_degree12_minor_distribution_valid():
    net, g = generate_graph("grid", (8, 8), seed=0)
    md = MinorDistribution.identity(net)
    u = ultrasparsify(g, md, k=4, seed=1)
    assert u.md_hat is not None
    assert validate(u.md_hat, u.G_hat)
    _, p = generate_graph("path", (10,))
    netp = generate_graph("path", (10,))[0]
    G, _, info = degree12_eliminate(p, protected=[0, 9], md=MinorDistribution.identity(netp))
    assert G.n == 2 and validate(info["md"], G)
