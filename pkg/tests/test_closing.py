import math

import numpy as np
import pytest

from thurstonopt.closing import (
    GapSpec,
    TileSet,
    bound_by_gap,
    bq_search,
    closest_return,
    critical_distance,
    gap,
    local_anosov_close,
    r_theta_gap,
    shortest_cycle,
    uniform_expansion_check,
    verify_periodic,
)
from thurstonopt.errors import ContractViolation, PreconditionError, SearchFailure, ValidationError
from thurstonopt.symbolic import build_transition, cycle_nodes, cylinder_graph, orbit_from_word, random_closed_word


@pytest.fixture(scope="module")
def g5(pillow):
    return cylinder_graph(pillow, 5)


def closed_pairs(rule):
    A = build_transition(rule)
    return [(a, b) for a in range(A.size) for b in range(A.size)
            if a != b and A.entries[a, b] and A.entries[b, a]]


def test_gap_conventions(pillow):
    fixed = orbit_from_word(pillow, (1, 5))
    assert gap(fixed) == math.inf
    assert r_theta_gap(fixed, GapSpec(0.7, 0.1)) == 0.7
    two = next(o for o in (orbit_from_word(pillow, w) for w in closed_pairs(pillow)) if o.gap < math.inf)
    d = two.gap
    assert d == pytest.approx(float(np.linalg.norm(two.points[0] - two.points[1])))
    assert r_theta_gap(two, GapSpec(1.0, 0.1)) == pytest.approx(0.1 * d)
    assert r_theta_gap(two, GapSpec(1e-6, 10.0)) == 1e-6
    with pytest.raises(ValidationError):
        GapSpec(0.0, 1.0)


def test_gap_skips_coinciding_points(pillow):
    # a two-face word coding one boundary point: the orbit is a single point
    o = orbit_from_word(pillow, (1, 5))
    assert o.period == 2
    assert np.allclose(o.points[0], o.points[1]) and o.gap == math.inf


def test_shortest_cycle_self_loop(g5):
    loops = [v for v in range(g5.n_nodes) if g5.is_arc(v, v)]
    assert shortest_cycle(g5, loops[:1]) == loops[:1]
    assert shortest_cycle(g5, []) is None


def test_shortest_cycle_against_bfs(g5, rng):
    import networkx as nx

    word = random_closed_word(g5.A, 12, rng)
    nodes = set(cycle_nodes(g5, word))
    src, dst = g5.arcs
    G = nx.DiGraph([(int(a), int(b)) for a, b in zip(src, dst) if a in nodes and b in nodes])
    want = min(len(c) for c in nx.simple_cycles(G))
    assert len(shortest_cycle(g5, nodes)) == want


def test_bq_search_fixed_point(g5):
    loop = next(v for v in range(g5.n_nodes) if g5.is_arc(v, v))
    res = bq_search(g5, [loop], kappa=2, epsilon=0.1)
    assert res.orbit.period == 1 and res.inside_k


@pytest.mark.parametrize("eps", [0.2, 0.1, 0.05])
def test_bq_period_bound(g5, rng, eps):
    for _ in range(5):
        K = cycle_nodes(g5, random_closed_word(g5.A, 9, rng))
        res = bq_search(g5, K, kappa=2, epsilon=eps)
        assert res.orbit.period < (1 / eps) ** 2
        assert verify_periodic(res.orbit) <= 1e-8


def test_bq_budget_exceeded(g5, rng):
    K = cycle_nodes(g5, random_closed_word(g5.A, 12, rng))
    K = [v for v in K if not g5.is_arc(v, v)]
    with pytest.raises((SearchFailure, ContractViolation)):
        bq_search(g5, K, kappa=0.1, epsilon=0.5)


def test_tile_set_distance(pillow, g5):
    loop = next(v for v in range(g5.n_nodes) if g5.is_arc(v, v))
    tiles = TileSet.build(g5, [loop])
    o = orbit_from_word(pillow, (int(g5.words[loop, 0]),))
    assert tiles.distance(int(o.faces[0]), o.points[0]) == 0.0
    assert tiles.distance(0, np.array([0.5, 0.5])) > 0.1


def anosov_word(A, rng, length, k=3, tail=8):
    u = random_closed_word(A, length, rng)
    w = u + u[:k]
    for _ in range(tail):
        succ = A.successors(w[-1])
        w.append(int(succ[rng.integers(len(succ))]))
    return u, w


def test_local_closing_decay(pillow, rng):
    A = build_transition(pillow)
    for _ in range(10):
        u, w = anosov_word(A, rng, 8)
        rep = local_anosov_close(pillow, w, len(u))
        assert rep.repaired == 0 and rep.closed_word == tuple(u)
        assert rep.slope == pytest.approx(-math.log(2), rel=0.2)
        assert verify_periodic(rep.orbit) <= 1e-8
        assert rep.orbit.period == len(u) or len(u) % rep.orbit.period == 0


def test_local_closing_repairs_prefix(pillow):
    # draw a segment whose first six symbols do not close
    A = build_transition(pillow)
    rng = np.random.default_rng(2)
    while True:
        w = [int(rng.integers(8))]
        for _ in range(11):
            s = A.successors(w[-1])
            w.append(int(s[rng.integers(len(s))]))
        if not A.entries[w[5], w[0]]:
            break
    rep = local_anosov_close(pillow, w, 6, eta=0.0, delta=math.inf)
    assert rep.repaired >= 1
    assert tuple(rep.closed_word[rep.repaired:]) == tuple(w[rep.repaired:6])
    c = rep.closed_word
    assert all(A.entries[a, b] for a, b in zip(c, c[1:] + c[:1]))


def test_local_closing_precondition(pillow):
    # the fixed point of symbol 0 is the corner A, half a side away from the critical vertices
    with pytest.raises(PreconditionError):
        local_anosov_close(pillow, [0, 0, 0, 0], 2, eta=0.6)
    with pytest.raises(PreconditionError):
        local_anosov_close(pillow, [0, 2, 0, 0, 0], 2, eta=0.0, delta=1e-9)


def test_critical_distance(pillow):
    assert critical_distance(pillow, [0], [(0.5, 0.5)])[0] == pytest.approx(0.0)
    assert critical_distance(pillow, [0], [(0.0, 0.0)])[0] == pytest.approx(0.5)


def test_closest_return(pillow, rng):
    A = build_transition(pillow)
    o = orbit_from_word(pillow, random_closed_word(A, 10, rng))
    j, n = closest_return(o)
    from thurstonopt.geometry import model_distance

    k = (j + n) % o.period
    d = model_distance(pillow, o.faces[j], o.points[j][None], o.faces[k], o.points[k][None])[0]
    assert 1 <= n <= o.period // 2
    assert d == pytest.approx(o.gap)


def test_bound_by_gap_recursion_halves_periods(pillow, g5):
    rng = np.random.default_rng(3)
    fixed = next(v for v in range(g5.n_nodes) if g5.is_arc(v, v))
    for _ in range(5):
        start = orbit_from_word(pillow, random_closed_word(g5.A, 16, rng))
        res = bound_by_gap(g5, [fixed], r=2.0, start=start)
        periods = [t["period"] for t in res.trace]
        assert res.verified
        assert res.steps <= math.log2(periods[0]) + 2
        assert all(b <= a / 2 + 1 for a, b in zip(periods, periods[1:]))


def test_bound_by_gap_trivial_cases(pillow, g5):
    fixed = next(v for v in range(g5.n_nodes) if g5.is_arc(v, v))
    res = bound_by_gap(g5, [fixed])
    assert res.orbit.period == 1 and res.steps == 0 and res.rhs == 1.0
    start = orbit_from_word(pillow, random_closed_word(g5.A, 16, np.random.default_rng(0)))
    big = bound_by_gap(g5, [fixed], tau=1e9, start=start)
    assert big.steps == 0 and big.orbit is start


def test_uniform_expansion_pillow(pillow):
    rep = uniform_expansion_check(pillow, samples=1000, n=2)
    assert rep["samples"] > 0
    assert rep["C2"] == pytest.approx(1.0, abs=1e-9)
