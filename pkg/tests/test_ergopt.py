import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thurstonopt.errors import ContractViolation
from thurstonopt.ergopt import (
    BouschState,
    bousch_apply,
    bousch_power_bruteforce,
    calibrated_subaction,
    coboundary,
    livsic_test,
    mane_normalize,
    maximizing_set,
    q_by_level,
    q_value,
)
from thurstonopt.potential import constant, coordinate, discretize, random_smooth
from thurstonopt.symbolic import cycle_nodes, cylinder_graph


@pytest.fixture(scope="module")
def g3(pillow):
    return cylinder_graph(pillow, 3)


def smooth_table(rule, n, seed):
    return discretize(random_smooth(rule, np.random.default_rng(seed)), rule, n).values


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_max_plus_laws(pillow, seed):
    g = cylinder_graph(pillow, 3)
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=g.n_nodes)
    u = rng.normal(size=g.n_nodes)
    v = u + np.abs(rng.normal(size=g.n_nodes))
    c = rng.normal()

    def L(x):
        return bousch_apply(g, BouschState(3, x), psi).u

    assert np.allclose(L(u + c), L(u) + c, atol=1e-12)
    assert np.all(L(u) <= L(v) + 1e-12)
    w = rng.normal(size=g.n_nodes)
    assert np.max(np.abs(L(u) - L(w))) <= np.max(np.abs(u - w)) + 1e-12


def test_operator_power_matches_path_expansion(pillow):
    g = cylinder_graph(pillow, 2)
    rng = np.random.default_rng(3)
    psi, u = rng.normal(size=g.n_nodes), rng.normal(size=g.n_nodes)
    state = BouschState(2, u)
    for _ in range(3):
        state = bousch_apply(g, state, psi)
    assert np.allclose(state.u, bousch_power_bruteforce(g, psi, u, 3), atol=1e-12)


def test_constant_potential(g3, pillow):
    assert q_value(g3, discretize(constant(1.0), pillow, 3)).q == 1.0


def test_fixed_point_potential(pillow):
    # x-coordinate under x -> fold(2x): the best orbit is the fixed value x = 2/3
    g = cylinder_graph(pillow, 4)
    res = q_value(g, discretize(coordinate("x"), pillow, 4))
    assert res.words == [[1, 5, 1, 5], [5, 1, 5, 1]]
    assert abs(res.q - 2 / 3) <= 2.0**-4


@pytest.mark.parametrize("method", ["iterate", "longest_path"])
def test_subaction_is_a_fixed_point(g3, pillow, method):
    psi = smooth_table(pillow, 3, 7)
    q = q_value(g3, psi).q
    u = calibrated_subaction(g3, psi, q, method=method)
    assert u.residual <= 1e-10
    phi = mane_normalize(g3, psi, u, q)
    assert phi.max_value <= 1e-10
    assert abs(q_value(g3, arc_weights=phi.arc_values).q) <= 1e-10


def test_mane_rejects_non_subaction(g3, pillow):
    psi = smooth_table(pillow, 3, 1)
    q = q_value(g3, psi).q
    with pytest.raises(ContractViolation):
        mane_normalize(g3, psi, np.zeros(g3.n_nodes), q - 1.0)


def test_maximizing_set_contains_optimal_cycle(g3, pillow):
    for seed in range(5):
        psi = smooth_table(pillow, 3, seed)
        res = q_value(g3, psi)
        u = calibrated_subaction(g3, psi, res.q)
        K = maximizing_set(g3, mane_normalize(g3, psi, u, res.q))
        assert set(res.cycle) <= K
        # every cycle inside K is optimal: its mean is q
        for v in K:
            assert any(w in K for w in g3.successors(v))


def test_argmax_invariant_under_coboundary(pillow):
    g = cylinder_graph(pillow, 4)
    low = cylinder_graph(pillow, 3)
    rng = np.random.default_rng(5)
    psi = smooth_table(pillow, 4, 2)
    shifted = psi + 0.7 + coboundary(g, rng.normal(size=low.n_nodes))
    a, b = q_value(g, psi), q_value(g, shifted)
    assert b.q == pytest.approx(a.q + 0.7, abs=1e-10)
    assert b.cycle == a.cycle


def test_livsic_verdicts(pillow):
    g = cylinder_graph(pillow, 3)
    low = cylinder_graph(pillow, 2)
    rng = np.random.default_rng(9)
    cob = coboundary(g, rng.normal(size=low.n_nodes))
    yes = livsic_test(g, cob, max_period=6)
    assert yes.coboundary_like and yes.max_cycle_sum <= 1e-9
    no = livsic_test(g, cob + 0.01 * rng.normal(size=g.n_nodes), max_period=6)
    assert not no.coboundary_like


def test_q_levels_bracket(pillow):
    qs = q_by_level(pillow, coordinate("x"), [3, 4, 5])
    assert np.all(np.abs(np.diff(qs)) < 0.05)


def test_cycle_nodes_give_q(pillow):
    g = cylinder_graph(pillow, 3)
    psi = smooth_table(pillow, 3, 4)
    res = q_value(g, psi)
    word = [int(g.words[v, 0]) for v in res.cycle]
    assert cycle_nodes(g, word) == res.cycle
