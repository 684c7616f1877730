import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lapcon.congest import (Network, RoundStats, Simulator, VertexProgram, FunctionProgram,
                            build_bfs_tree, global_aggregate, generate_graph, read_graph,
                            write_graph, run_round)
from lapcon.errors import BudgetExceeded, Disconnected, InvalidParams, MalformedFile


class Sender(VertexProgram):
    def __init__(self, msgs):
        self.msgs = msgs

    def step(self, inbox):
        out, self.msgs = self.msgs, []
        return out


def test_empty_round():
    net, _ = generate_graph("path", (3,))
    sim = Simulator(net)
    d = sim.run_round([Sender([]) for _ in range(3)])
    assert d.rounds == 1 and d.peak_edge_words == 0
    assert sim.stats.rounds == 1


def test_budget_boundary_and_violation():
    net, _ = generate_graph("path", (3,))
    sim = Simulator(net)
    progs = [Sender([(0, (7,))]), Sender([]), Sender([])]
    d = sim.run_round(progs)
    assert d.peak_edge_words == 1
    assert sim.inboxes[1] == [(0, (7,))]
    with pytest.raises(BudgetExceeded):
        run_round(net, [Sender([(0, (1, 2))]), Sender([]), Sender([])])
    # two one-word messages on the same edge and direction also exceed
    with pytest.raises(BudgetExceeded):
        run_round(net, [Sender([(0, (1,)), (0, (2,))]), Sender([]), Sender([])])


def test_opposite_directions_are_separate():
    net, _ = generate_graph("path", (2,))
    d = run_round(net, [Sender([(0, (1,))]), Sender([(0, (2,))])])
    assert d.peak_edge_words == 1


def test_non_incident_edge_rejected():
    net, _ = generate_graph("path", (3,))
    with pytest.raises(InvalidParams):
        run_round(net, [Sender([(1, (1,))]), Sender([]), Sender([])])


def test_function_program_is_pure_step():
    net, _ = generate_graph("path", (2,))

    def fn(state, inbox):
        got = sum(w[0] for _, w in inbox)
        return ([(0, (state + 1,))] if state < 3 else []), state + 1 + got

    sim = Simulator(net)
    progs = [FunctionProgram(0, fn), FunctionProgram(0, fn)]
    for _ in range(3):
        sim.run_round(progs)
    assert sim.stats.rounds == 3


def test_bfs_small():
    net, _ = generate_graph("path", (3,))
    t = build_bfs_tree(net, 0)
    assert t.depth.tolist() == [0, 1, 2]
    net, _ = generate_graph("star", (5,))
    t = build_bfs_tree(net, 0)
    assert t.depth.tolist() == [0, 1, 1, 1, 1]


@pytest.mark.parametrize("seed", range(5))
def test_bfs_matches_reference_distances(seed):
    net, _ = generate_graph("erdos_renyi", (50, 0.1), seed=seed)
    sim = Simulator(net)
    t = build_bfs_tree(net, 0, sim)
    assert np.array_equal(t.depth, net.hop_distances()[0])
    # parent pointers form a spanning tree of depth-decreasing steps
    for x in range(1, net.n):
        assert t.depth[t.parent[x]] == t.depth[x] - 1
    assert sim.stats.rounds <= 2 * net.diameter + 2


def test_bfs_disconnected():
    net = Network(4, [0, 2], [1, 3])
    with pytest.raises(Disconnected):
        build_bfs_tree(net, 0)


def test_global_aggregate():
    net, _ = generate_graph("path", (5,))
    t = build_bfs_tree(net, 0)
    assert global_aggregate(net, t, [0] * 5, "sum") == [0] * 5
    net = Network(4, [0, 0, 0, 1, 1, 2], [1, 2, 3, 2, 3, 3])
    t = build_bfs_tree(net, 2)
    assert set(global_aggregate(net, t, [3, 1, 2, 0], "min")) == {0}
    rng = np.random.default_rng(1)
    net, _ = generate_graph("erdos_renyi", (100, 0.05), seed=1)
    t = build_bfs_tree(net, 0)
    vals = rng.integers(-50, 50, 100).tolist()
    sim = Simulator(net)
    out = global_aggregate(net, t, vals, "sum", sim)
    assert set(out) == {sum(vals)}
    assert sim.stats.rounds <= 2 * t.height + 3


def test_generators():
    net, g = generate_graph("path", (3,))
    assert g.n == 3 and g.m == 2 and net.diameter == 2
    net, g = generate_graph("star", (5,))
    assert g.m == 4 and net.diameter == 2
    _, a = generate_graph("erdos_renyi", (100, 0.1), seed=7)
    _, b = generate_graph("erdos_renyi", (100, 0.1), seed=7)
    assert a == b
    for kind, p in [("cycle", (10,)), ("grid", (4, 5)), ("barbell", (5, 3)),
                    ("erdos_renyi", (40, 0.01))]:
        net, g = generate_graph(kind, p, seed=2, weights="random")
        assert g.is_connected() and np.all(g.w > 0)
    with pytest.raises(InvalidParams):
        generate_graph("moebius", (4,))
    with pytest.raises(InvalidParams):
        generate_graph("cycle", (2,))


def test_graph_file_roundtrip(tmp_path):
    _, g = generate_graph("grid", (3, 3), seed=0, weights="random")
    p = tmp_path / "g.txt"
    write_graph(p, g)
    h = read_graph(p)
    assert h.n == g.n and np.allclose(h.w, g.w)
    bad = tmp_path / "bad.txt"
    bad.write_text("3 2\n0 1 1.0\n")
    with pytest.raises(MalformedFile):
        read_graph(bad)
    bad.write_text("3 1\n0 1 -1\n")
    with pytest.raises(MalformedFile):
        read_graph(bad)


def test_roundstats_json():
    s = RoundStats()
    s.charge("x", 3, 1)
    d = json.loads(s.to_json())
    assert d == {"rounds": 3, "peak_edge_words": 1, "phases": {"x": 3}}


def test_replay_determinism():
    digests = set()
    for _ in range(10):
        net, _ = generate_graph("erdos_renyi", (40, 0.1), seed=11)
        sim = Simulator(net, trace=True)
        t = build_bfs_tree(net, 3, sim)
        global_aggregate(net, t, list(range(40)), "max", sim)
        digests.add((sim.trace_digest(), sim.stats.to_json()))
    assert len(digests) == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 30), st.integers(0, 10 ** 6))
def test_bfs_round_bound_property(n, seed):
    net, _ = generate_graph("erdos_renyi", (n, 0.2), seed=seed)
    sim = Simulator(net)
    build_bfs_tree(net, 0, sim)
    assert sim.stats.rounds <= 2 * net.diameter + 2
    assert sim.stats.peak_edge_words <= net.word_budget
