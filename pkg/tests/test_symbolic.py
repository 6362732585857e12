import itertools

import numpy as np
import pytest

from thurstonopt.errors import ContractViolation, ResourceError
from thurstonopt.subdivision import refine
from thurstonopt.symbolic import (
    build_transition,
    count_words,
    cycle_nodes,
    cylinder_graph,
    enumerate_words,
    factor_commutation_check,
    orbit_from_word,
    periodic_point_from_cycle,
    primitive_period,
    random_closed_walk,
    representative_points,
    theta_distance,
)


def brute_words(rule, n):
    faces = [t.face for t in rule.one_tiles]
    images = [t.image for t in rule.one_tiles]
    return [w for w in itertools.product(range(rule.n_symbols), repeat=n)
            if all(images[a] == faces[b] for a, b in zip(w, w[1:]))]


def test_column_sums_equal_degree(any_rule):
    A = build_transition(any_rule)
    assert np.all(A.column_sums == any_rule.degree)


def test_flap_rows_are_uneven(flap):
    A = build_transition(flap)
    assert sorted(set(A.row_sums.tolist())) == [4, 6]


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_words_match_brute_force(any_rule, n):
    words = enumerate_words(any_rule, n)
    assert [tuple(w) for w in words] == brute_words(any_rule, n)
    assert count_words(any_rule, n) == len(words)


def test_trace_counts_closed_words(any_rule):
    A = build_transition(any_rule)
    for n in (1, 2, 3):
        closed = [w for w in brute_words(any_rule, n) if A.entries[w[-1], w[0]]]
        assert A.trace_power(n) == len(closed)


def test_words_are_refine_tiles(any_rule):
    for n in range(1, 5):
        assert np.array_equal(enumerate_words(any_rule, n), refine(any_rule, n).words)


def test_budget(pillow):
    with pytest.raises(ResourceError):
        enumerate_words(pillow, 8, budget=1000)


def test_cylinder_graph_structure(any_rule):
    g = cylinder_graph(any_rule, 3)
    src, dst = g.arcs
    # every arc shifts the source word onto the target word
    assert np.array_equal(g.words[src, 1:], g.words[dst, :-1])
    assert np.all(np.bincount(dst, minlength=g.n_nodes) == any_rule.degree)
    assert g.is_strongly_connected()
    # arcs are exactly the admissible (n+1)-words
    assert len(src) == count_words(any_rule, 4)


def test_index_rejects_bad_words(pillow):
    g = cylinder_graph(pillow, 2)
    assert g.index([[0, 0]])[0] == 0
    with pytest.raises(ContractViolation):
        g.index([[0, 4]])


def test_primitive_period():
    assert primitive_period((1, 2, 1, 2)) == 2
    assert primitive_period((3,)) == 1
    assert primitive_period((1, 2, 3)) == 3


def test_orbit_from_word(pillow):
    o = orbit_from_word(pillow, (1, 5, 1, 5))
    assert o.period == 2 and o.cycle_length == 4
    o1 = orbit_from_word(pillow, (0,))
    assert o1.gap == float("inf")
    with pytest.raises(ContractViolation):
        orbit_from_word(pillow, (0, 4))


def test_orbit_points_follow_the_map(any_rule, rng):
    g = cylinder_graph(any_rule, 3)
    for _ in range(5):
        o = periodic_point_from_cycle(g, random_closed_walk(g, 5, rng))
        faces, pts = any_rule.forward(o.faces, o.points, np.array(o.word))
        nxt = np.roll(np.arange(o.period), -1)
        from thurstonopt.geometry import model_distance

        assert np.max(model_distance(any_rule, faces, pts, o.faces[nxt], o.points[nxt])) < 1e-10


def test_cycle_nodes_close(pillow, rng):
    g = cylinder_graph(pillow, 4)
    nodes = random_closed_walk(g, 7, rng)
    assert len(nodes) == 7
    for a, b in zip(nodes, nodes[1:] + nodes[:1]):
        assert g.is_arc(a, b)
    word = [int(g.words[v, 0]) for v in nodes]
    assert cycle_nodes(g, word) == nodes


def test_representatives_lie_in_their_tiles(any_rule):
    words = enumerate_words(any_rule, 3)
    for kind in ("center", "periodic"):
        faces, xy = representative_points(any_rule, words, kind)
        for w, f, p in zip(words[::7], faces[::7], xy[::7]):
            from thurstonopt.geometry import all_addresses

            assert tuple(w) in [tuple(a) for a in all_addresses(any_rule, int(f), p, 3, tol=1e-9)]


def test_factor_commutes(any_rule):
    rep = factor_commutation_check(any_rule, samples=200, n=2)
    assert rep["max_distance"] < 1e-8


def test_theta_distance():
    assert theta_distance((1, 2, 3), (1, 2, 4), 0.5) == 0.25
    assert theta_distance((1, 2), (1, 2), 0.5) == 0.0
    with pytest.raises(ContractViolation):
        theta_distance((1,), (2,), 1.5)
