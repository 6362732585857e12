import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thurstonopt.errors import ContractViolation
from thurstonopt.meancycle import ArcGraph, brute, cycle_mean, howard, karp, max_mean_cycle, random_graph


def test_two_cycles():
    # 0 <-> 1 has mean 2, self-loop at 2 has mean 3
    g = ArcGraph.build(3, [0, 1, 1, 2, 2], [1, 0, 2, 2, 0], [1.0, 3.0, 0.0, 3.0, -1.0])
    for method in ("karp", "howard", "brute"):
        res = max_mean_cycle(g, method)
        assert res.q == 3.0 and res.cycle == [2]


def test_tie_prefers_least_cycle():
    g = ArcGraph.build(2, [0, 1], [0, 1], [1.0, 1.0])
    assert howard(g).cycle == [0]
    assert brute(g).cycle == [0]


def test_cycle_mean_ignores_rotation_and_order_of_summation():
    w = [0.1, 1e16, 0.3, -1e16]
    g = ArcGraph.build(4, [0, 1, 2, 3], [1, 2, 3, 0], w)
    means = {cycle_mean(g, [k % 4 for k in range(s, s + 4)]) for s in range(4)}
    assert means == {0.4 / 4}


def test_bad_input():
    with pytest.raises(ContractViolation):
        ArcGraph.build(2, [0], [5], [1.0])
    with pytest.raises(ContractViolation):
        max_mean_cycle(ArcGraph.build(1, [0], [0], [1.0]), "simplex")
    with pytest.raises(ContractViolation):
        howard(ArcGraph.build(2, [0], [1], [1.0]))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 9))
def test_methods_agree(seed, n):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, p=0.3)
    qs = [karp(g).q, howard(g).q, brute(g).q]
    assert max(qs) - min(qs) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_potential_shift_and_coboundary(seed):
    # adding c + h(u) - h(v) on arcs shifts q by c and keeps the optimal cycle
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 8, p=0.4)
    h = rng.normal(size=8)
    c = rng.normal()
    g2 = ArcGraph.build(g.n, g.src, g.dst, g.weight + c + h[g.src] - h[g.dst])
    a, b = karp(g), karp(g2)
    assert b.q == pytest.approx(a.q + c, abs=1e-12)
    assert cycle_mean(g2, a.cycle) == pytest.approx(b.q, abs=1e-12)


def test_howard_warm_start_agrees(rng):
    g = random_graph(rng, 50, p=0.1)
    cold = howard(g)
    warm = howard(g, policy=cold.certificate["policy"])
    assert warm.q == cold.q


def test_large_graphs_karp_howard(rng):
    for _ in range(5):
        g = random_graph(rng, 150, p=0.03)
        assert abs(karp(g).q - howard(g).q) <= 1e-12
