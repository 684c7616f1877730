import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lapcon.chain import (parameters_default, build_chain, pseudoinverse_multi, chebyshev,
                          chebyshev_iterations, lanczos_bounds, solve, ChainPreconditioner,
                          solve_with, recursive_solver)
from lapcon.config import DEFAULT
from lapcon.congest import generate_graph, Simulator
from lapcon.errors import BadBounds, ChainInvalid, Disconnected, NotMeanZero, InvalidParams
from lapcon.graph import WeightedGraph
from lapcon.minor import MinorDistribution, validate
from lapcon.oracle import relative_lnorm_error, DenseLaplacianSolver


def rhs(n, seed=0):
    b = np.random.default_rng(seed).standard_normal(n)
    return b - b.mean()


# ---- parameters

def test_parameters_default_worked_example():
    eps, d, k = parameters_default(2 ** 16)
    assert k == round(2 ** (16 ** (2 / 3)))
    assert d == round(np.log2(16) ** 2) == 16
    assert eps == pytest.approx(16.0 ** -10)


def test_parameters_default_floors():
    eps, d, k = parameters_default(4)
    assert d == 1 and k >= 8 and eps <= 0.1
    with pytest.raises(InvalidParams):
        parameters_default(1)


def test_parameters_k_monotone():
    ks = [parameters_default(n)[2] for n in range(2, 5000, 37)]
    assert all(a <= b for a, b in zip(ks, ks[1:]))


# ---- chain construction and PseudoinverseMulti

def test_small_graph_gives_empty_chain():
    _, g = generate_graph("cycle", (10,))
    ch = build_chain(g, None, d=1, eps=0.5, k=20)
    assert ch.stages == [] and ch.sizes() == [10]
    b = rhs(10)
    x = pseudoinverse_multi(ch, b)
    assert relative_lnorm_error(g.dense_laplacian(), x, b) < 1e-10


def test_zero_rhs_gives_zero():
    _, g = generate_graph("grid", (8, 8))
    ch = build_chain(g, None, d=1, eps=0.5, k=8)
    assert np.allclose(pseudoinverse_multi(ch, np.zeros(64)), 0)


def test_wrong_length_rejected():
    _, g = generate_graph("grid", (8, 8))
    ch = build_chain(g, None, d=1, eps=0.5, k=8)
    with pytest.raises(ChainInvalid):
        pseudoinverse_multi(ch, np.zeros(5))


@pytest.mark.parametrize("eps", [0.05, 0.1])
def test_cycle_chain_error_bound(eps):
    _, g = generate_graph("cycle", (60,))
    ch = build_chain(g, None, d=1, eps=eps, k=8, seed=0)
    assert len(ch.stages) >= 1
    for s in range(5):
        b = rhs(60, s)
        err = relative_lnorm_error(g.dense_laplacian(), pseudoinverse_multi(ch, b), b)
        assert err <= 100 * eps * np.log(60)


def test_single_stage_chain_with_exact_base():
    _, g = generate_graph("erdos_renyi", (40, 0.2), seed=1, weights="random")
    ch = build_chain(g, None, d=2, eps=0.1, k=36, seed=0, check=True)
    assert len(ch.stages) == 1
    b = rhs(40)
    err = relative_lnorm_error(g.dense_laplacian(), pseudoinverse_multi(ch, b), b)
    # error comes from the one stage's operator and its Schur-complement approximation
    c = ch.stages[0].checks
    assert err <= 10 * (c["operator_factor"] + c["sc_factor"]) + 1e-9


def test_grid_chain_stage_checks():
    _, g = generate_graph("grid", (12, 12), seed=0)
    ch = build_chain(g, None, d=1, eps=0.05, k=20, seed=0, check=True)
    assert len(ch.stages) <= int(np.ceil(np.log(144 / 20) / np.log(1 / 0.99))) + 2
    sizes = ch.sizes()
    assert all(a > b for a, b in zip(sizes, sizes[1:]))
    for stg in ch.stages:
        assert stg.checks["operator_factor"] <= 0.05
        assert stg.checks["sc_factor"] <= 0.05
        assert stg.checks["kept"] <= stg.G.n - np.ceil(stg.G.n / 40) + 0


def test_chain_with_minor_distribution():
    net, g = generate_graph("grid", (7, 7), seed=0)
    md = MinorDistribution.identity(net)
    ch = build_chain(g, md, d=2, eps=0.5, k=8, seed=0)
    for stg in ch.stages:
        assert validate(stg.md, stg.G)
    assert validate(ch.base_md, ch.base_graph)


def test_chain_dump_is_jsonable():
    import json
    _, g = generate_graph("grid", (8, 8))
    ch = build_chain(g, None, d=1, eps=0.5, k=8, check=True)
    d = json.loads(json.dumps(ch.to_dict()))
    assert d["sizes"][0] == 64 and len(d["stages"]) == len(ch.stages)


def test_build_chain_validates():
    _, g = generate_graph("grid", (4, 4))
    with pytest.raises(InvalidParams):
        build_chain(g, d=0)


# ---- Chebyshev

def test_chebyshev_perfect_preconditioner_one_step():
    _, g = generate_graph("grid", (5, 5), weights="random")
    L = g.laplacian()
    P = DenseLaplacianSolver(L.toarray())
    b = rhs(25)
    x = chebyshev(lambda v: L @ v, lambda r: P.solve(r, check=False), b, 1, (1.0, 1.0))
    assert relative_lnorm_error(L.toarray(), x, b) < 1e-10


def test_chebyshev_classical_rate_kappa4():
    rng = np.random.default_rng(0)
    n = 30
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = np.linspace(1, 4, n)
    A = (Q * lam) @ Q.T
    b = rng.standard_normal(n)
    xs = np.linalg.solve(A, b)
    e0 = np.sqrt(xs @ A @ xs)
    rate = (2 - 1) / (2 + 1)
    for i in range(1, 15):
        x = chebyshev(lambda v: A @ v, lambda r: r, b, i, (1.0, 4.0))
        e = x - xs
        assert np.sqrt(e @ A @ e) <= 2 * rate ** i * e0 * (1 + 1e-9) + 1e-12


def test_chebyshev_bad_bounds_detected():
    A = np.diag([1.0, 10.0, 100.0])
    with pytest.raises(BadBounds):
        chebyshev(lambda v: A @ v, lambda r: r, np.ones(3), 60, (1.0, 2.0))


def test_chebyshev_invalid_bounds():
    with pytest.raises(InvalidParams):
        chebyshev(lambda v: v, lambda r: r, np.ones(2), 3, (0.0, 1.0))


def test_ultrasparsifier_cycle_iterations_scale_with_sqrt_k():
    from lapcon.ultra import ultrasparsify
    _, g = generate_graph("cycle", (200,), weights="random", seed=0)
    L = g.laplacian()
    u = ultrasparsify(g, None, k=100, seed=0)
    apply_P = lambda r: u.solve(r)
    lo, hi = lanczos_bounds(lambda v: L @ v, apply_P, g.n)
    b = rhs(200)
    x = np.zeros(200)
    its = 0
    while True:
        r = b - L @ x
        if np.linalg.norm(r) <= 1e-6 * np.linalg.norm(b) or its > 500:
            break
        x = x + chebyshev(lambda v: L @ v, apply_P, r, 10, (lo, 1.2 * hi))
        its += 10
    assert its <= 10 * np.sqrt(100) * 2


def test_chebyshev_iteration_count_formula():
    assert chebyshev_iterations(1.0, 1e-3) == 1
    k = chebyshev_iterations(100, 1e-6)
    assert 2 * (9 / 11) ** k <= 1e-6 < 2 * (9 / 11) ** (k - 1)


# ---- end-to-end solve

@pytest.mark.parametrize("kind,params", [("path", (60,)), ("cycle", (80,)), ("grid", (9, 9)),
                                         ("erdos_renyi", (90, 0.08)), ("barbell", (10, 8))])
def test_solve_families(kind, params):
    _, g = generate_graph(kind, params, seed=1, weights="random")
    b = rhs(g.n, 3)
    x = solve(g, None, b, 1e-8, seed=0)
    assert relative_lnorm_error(g.dense_laplacian(), x, b) <= 1e-8


def test_solve_forward_multiply():
    _, g = generate_graph("erdos_renyi", (70, 0.1), seed=2)
    y = np.random.default_rng(1).standard_normal(70)
    b = g.laplacian() @ y
    x = solve(g, None, b, 1e-10)
    assert np.allclose(x - x.mean(), y - y.mean(), atol=1e-6)


def test_solve_path3_exact():
    g = WeightedGraph.from_edges(3, [(0, 1), (1, 2)])
    x = solve(g, None, np.array([1.0, 0.0, -1.0]))
    assert np.allclose(x, [1.0, 0.0, -1.0], atol=1e-8)


def test_solve_errors():
    g = WeightedGraph.from_edges(4, [(0, 1), (2, 3)])
    with pytest.raises(Disconnected):
        solve(g, None, np.array([1.0, -1, 0, 0]))
    _, c = generate_graph("cycle", (6,))
    with pytest.raises(NotMeanZero):
        solve(c, None, np.ones(6))


def test_solve_is_linear():
    _, g = generate_graph("grid", (8, 8), seed=0, weights="random")
    pre = ChainPreconditioner(g, None, seed=0)
    b1, b2 = rhs(64, 1), rhs(64, 2)
    x1 = solve_with(pre, b1, 1e-12)[0]
    x2 = solve_with(pre, b2, 1e-12)[0]
    x12 = solve_with(pre, 2 * b1 - 3 * b2, 1e-12)[0]
    assert np.linalg.norm(x12 - (2 * x1 - 3 * x2)) <= 1e-7 * np.linalg.norm(x12)


def test_solve_multi_rhs():
    _, g = generate_graph("grid", (7, 7), seed=0)
    pre = ChainPreconditioner(g, None, seed=0)
    B = np.column_stack([rhs(49, s) for s in range(3)])
    X = solve_with(pre, B, 1e-9)[0]
    for j in range(3):
        assert relative_lnorm_error(g.dense_laplacian(), X[:, j], B[:, j]) <= 1e-9


def test_solve_reports_rounds():
    net, g = generate_graph("grid", (6, 6), seed=0)
    sim = Simulator(net)
    x, info = solve(g, MinorDistribution.identity(net), rhs(36), 1e-8, sim=sim, return_info=True)
    assert sim.stats.rounds > 0 and info["iterations"] >= 1
    assert relative_lnorm_error(g.dense_laplacian(), x, rhs(36)) <= 1e-8


def test_no_dense_allocation_above_cutoff():
    # the only dense factorization is the chain base, which stays at most max(k, base_size)
    _, g = generate_graph("grid", (22, 22), seed=0)
    pre = ChainPreconditioner(g, None, seed=0)
    assert pre.chain.base_graph.n <= max(pre.k, DEFAULT.base_size)
    assert g.n > DEFAULT.oracle_cutoff


def test_recursive_solver_handle():
    _, g = generate_graph("grid", (6, 6), seed=0)
    h = recursive_solver()
    B = np.column_stack([rhs(36, 0), rhs(36, 1)])
    X = h(g, B)
    for j in range(2):
        assert relative_lnorm_error(g.dense_laplacian(), X[:, j], B[:, j]) <= 1e-9
    with pytest.raises(ChainInvalid):
        recursive_solver(depth=DEFAULT.max_depth + 1)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(20, 120))
def test_solve_property(seed, n):
    _, g = generate_graph("erdos_renyi", (n, min(1.0, 6 / n)), seed=seed, weights="random")
    b = rhs(n, seed)
    x = solve(g, None, b, 1e-8, seed=seed)
    assert relative_lnorm_error(g.dense_laplacian(), x, b) <= 1e-8
