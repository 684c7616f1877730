import numpy as np
import pytest

from lapcon.congest import generate_graph, Simulator
from lapcon.errors import EmptyTerminals, SolverFailure
from lapcon.graph import WeightedGraph
from lapcon.minor import MinorDistribution
from lapcon.oracle import leverage_exact
from lapcon.sketch import (SolverHandle, oracle_solver, lev_apx, column_apx, column_exact,
                           diff_apx, diff_target_exact, jl_rows)


def within(est, exact, f):
    return (est <= f * exact + 1e-12) & (est >= exact / f - 1e-12)


def test_tree_leverage():
    _, g = generate_graph("path", (15,), weights="random", seed=0)
    est = lev_apx(g, None, oracle_solver(), 0.2, seed=0)
    assert within(est, np.ones(g.m), 1.2).all()


def test_triangle_leverage():
    g = WeightedGraph(3, [0, 1, 0], [1, 2, 2])
    hits = sum(within(lev_apx(g, None, oracle_solver(), 0.1, seed=s), np.full(3, 2 / 3), 1.1).all()
               for s in range(100))
    assert hits >= 95


def test_random_graph_leverage():
    _, g = generate_graph("erdos_renyi", (60, 0.15), seed=1, weights="random")
    exact = leverage_exact(g)
    solver = oracle_solver()
    hits = sum(within(lev_apx(g, None, solver, 0.1, seed=s), exact, 1.1).all() for s in range(100))
    assert hits >= 95


def test_leverage_upper_bound_at_small_delta():
    _, g = generate_graph("erdos_renyi", (30, 0.2), seed=2)
    est = lev_apx(g, None, oracle_solver(), 0.01, seed=0)
    assert est.min() >= 0 and est.max() <= 1.02


def test_solver_calls_and_charges():
    net, g = generate_graph("grid", (4, 4), seed=0)
    md = MinorDistribution.identity(net)
    sim = Simulator(net)
    solver = oracle_solver()
    lev_apx(g, md, solver, 0.5, seed=0, sim=sim)
    assert solver.calls == jl_rows(g.n, 0.5)
    assert sim.stats.rounds > 0


def test_solver_failure_propagates():
    bad = SolverHandle(lambda g, B: np.full(np.shape(B), np.nan), 0.0)
    _, g = generate_graph("path", (4,))
    with pytest.raises(SolverFailure):
        lev_apx(g, None, bad, 0.5)


def test_column_singleton_is_zero():
    _, g = generate_graph("cycle", (6,))
    est = column_apx(g, None, oracle_solver(), [2])
    assert est[2] == 0


def test_column_two_edges_of_four_cycle():
    _, g = generate_graph("cycle", (4,))
    W = [0, 2]
    exact = column_exact(g, W)
    hits = 0
    for s in range(100):
        est = column_apx(g, None, oracle_solver(), W, seed=s)
        hits += within(est[W], exact[W], 2).all()
    assert hits >= 95


def test_column_random_graph_fraction():
    _, g = generate_graph("erdos_renyi", (30, 0.2), seed=4, weights="random")
    exact = column_exact(g)
    solver = oracle_solver()
    frac = [within(column_apx(g, None, solver, seed=s), exact, 2).mean() for s in range(100)]
    assert np.mean(frac) >= 0.95


def test_diff_all_terminals_is_leverage():
    _, g = generate_graph("erdos_renyi", (25, 0.3), seed=5, weights="random")
    T = range(g.n)
    assert np.allclose(diff_target_exact(g, T), leverage_exact(g), atol=1e-9)
    est = diff_apx(g, None, oracle_solver(), T, seed=0)
    assert within(est, leverage_exact(g), 2).all()


def test_diff_path_example():
    g = WeightedGraph(3, [0, 1], [1, 2])
    exact = diff_target_exact(g, [0, 2])
    # harmonic extension along a unit path: each edge carries half the terminal energy
    assert np.allclose(exact, [0.5, 0.5])
    hits = sum(within(diff_apx(g, None, oracle_solver(), [0, 2], seed=s), exact, 2).all()
               for s in range(100))
    assert hits >= 95


@pytest.mark.parametrize("seed", range(10))
def test_diff_target_sum_at_most_terminals(seed):
    rng = np.random.default_rng(seed)
    _, g = generate_graph("erdos_renyi", (30, 0.2), seed=seed, weights="random")
    T = rng.choice(g.n, int(rng.integers(1, 10)), replace=False)
    assert diff_target_exact(g, T).sum() <= len(T) + 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_diff_random_terminals(seed):
    rng = np.random.default_rng(seed)
    _, g = generate_graph("erdos_renyi", (40, 0.15), seed=seed, weights="random")
    T = rng.choice(g.n, 8, replace=False)
    exact = diff_target_exact(g, T)
    est = diff_apx(g, None, oracle_solver(), T, seed=seed)
    big = exact > 1e-3 * exact.max()
    assert within(est[big], exact[big], 2).mean() >= 0.95


def test_diff_empty_terminals():
    _, g = generate_graph("path", (3,))
    with pytest.raises(EmptyTerminals):
        diff_apx(g, None, oracle_solver(), [])


def test_deterministic_under_seed():
    _, g = generate_graph("grid", (3, 4), seed=0, weights="random")
    a = lev_apx(g, None, oracle_solver(), 0.3, seed=9)
    b = lev_apx(g, None, oracle_solver(), 0.3, seed=9)
    assert np.array_equal(a, b)
