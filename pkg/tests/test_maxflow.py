import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from segopt.maxflow import SINK, SOURCE, FlowNetwork, brute_force_min_cut


def random_network(rng, n=None, m=None):
    n = n or int(rng.integers(1, 11))
    m = int(rng.integers(0, 26)) if m is None else m
    g = FlowNetwork()
    g.add_node_batch(n)
    for u in range(n):
        g.add_terminal(u, float(rng.uniform(0, 5)) * (rng.random() < 0.7),
                       float(rng.uniform(0, 5)) * (rng.random() < 0.7))
    for _ in range(m):
        u, v = rng.integers(0, n, 2)
        g.add_edge(int(u), int(v), float(rng.uniform(0, 4)), float(rng.uniform(0, 4)) * (rng.random() < 0.5))
    return g


def test_terminal_accumulation():
    g = FlowNetwork()
    g.add_node_batch(1)
    g.add_terminal(0, 5, 3)
    g.add_terminal(0, 5, 3)
    src, snk = g.terminal_caps()
    assert (src[0], snk[0]) == (10, 6)
    assert g.max_flow() == 6


def test_isolated_nodes():
    g = FlowNetwork()
    g.add_node_batch(4)
    caps = [(1, 2), (3, 0.5), (0, 7), (2.5, 2.5)]
    for u, (a, b) in enumerate(caps):
        g.add_terminal(u, a, b)
    assert g.max_flow() == pytest.approx(sum(min(a, b) for a, b in caps))
    assert g.cut_side(1) == SOURCE
    assert g.cut_side(2) == SINK


def test_zero_edge_is_noop():
    g = FlowNetwork()
    g.add_node_batch(2)
    g.add_terminal(0, 3, 0)
    g.add_terminal(1, 0, 5)
    g.add_edge(0, 1, 0, 0)
    assert g.max_flow() == 0


def test_single_arc():
    g = FlowNetwork()
    g.add_node_batch(2)
    g.add_terminal(0, 3, 0)
    g.add_terminal(1, 0, 5)
    g.add_edge(0, 1, 2, 0)
    assert g.max_flow() == 2
    assert g.cut_side(0) == SOURCE and g.cut_side(1) == SINK


def test_saturated_path_puts_downstream_on_sink_side():
    g = FlowNetwork()
    g.add_node_batch(3)
    g.add_terminal(0, 10, 0)
    g.add_terminal(2, 0, 10)
    g.add_edge(0, 1, 1, 0)
    g.add_edge(1, 2, 5, 0)
    assert g.max_flow() == 1
    assert [g.cut_side(u) for u in range(3)] == [SOURCE, SINK, SINK]


def test_source_only_node():
    g = FlowNetwork()
    g.add_node_batch(1)
    g.add_terminal(0, 1, 0)
    g.max_flow()
    assert g.cut_side(0) == SOURCE


def test_errors():
    g = FlowNetwork()
    g.add_node_batch(2)
    with pytest.raises(RuntimeError):
        g.cut_side(0)
    with pytest.raises(ValueError):
        g.add_edge(0, 1, -1, 0)
    with pytest.raises(ValueError):
        g.add_terminal(0, float("nan"), 0)
    with pytest.raises((ValueError, IndexError)):
        g.add_edge(0, 5, 1, 1)


def test_idempotent_and_recomputes_after_change():
    rng = np.random.default_rng(1)
    g = random_network(rng, 8, 20)
    a = g.max_flow()
    assert g.max_flow() == a
    g.add_terminal(0, 100, 0)
    g.add_terminal(7, 0, 100)
    assert g.max_flow() >= a


def test_random_against_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(100):
        g = random_network(rng)
        flow = g.max_flow()
        best = brute_force_min_cut(g)
        assert abs(flow - best) <= 1e-9 * (1 + best)
        assert abs(g.cut_cost(g.source_set()) - flow) <= 1e-9 * (1 + flow)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.0, 3.0))
def test_flow_monotone_in_capacity(seed, extra):
    rng = np.random.default_rng(seed)
    g = random_network(rng, 6, 12)
    before = g.max_flow()
    g.add_terminal(int(rng.integers(0, 6)), extra, 0.0)
    assert g.max_flow() >= before - 1e-12


def test_grid_cut_matches_partition_cost():
    rng = np.random.default_rng(3)
    h, w = 30, 30
    g = FlowNetwork()
    g.add_node_batch(h * w)
    idx = np.arange(h * w).reshape(h, w)
    g.add_terminals(idx.ravel(), rng.uniform(0, 2, h * w), rng.uniform(0, 2, h * w))
    g.add_edges(idx[:, :-1].ravel(), idx[:, 1:].ravel(), 0.7, 0.7)
    g.add_edges(idx[:-1].ravel(), idx[1:].ravel(), 0.7, 0.7)
    f = g.max_flow()
    assert abs(g.cut_cost(g.source_set()) - f) <= 1e-9 * (1 + f)


def test_dimacs_roundtrip(tmp_path):
    g = random_network(np.random.default_rng(4), 7, 15)
    g.to_dimacs(tmp_path / "g.max")
    g2 = FlowNetwork.from_dimacs(tmp_path / "g.max")
    assert g2.max_flow() == pytest.approx(g.max_flow(), abs=1e-12)
