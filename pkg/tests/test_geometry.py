import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thurstonopt.errors import ContractViolation, ValidationError
from thurstonopt.geometry import (
    INFINITY,
    ModelPoint,
    VisualMetricConfig,
    address_to_point,
    all_addresses,
    chordal_distance,
    compose_charts,
    lattes_eval,
    lattes_preimages,
    metric_distortion_check,
    model_distance,
    periodic_points,
    point_to_address,
    random_points_in_polygon,
    visual_distance,
)


def fold_map(faces, xy):
    """Independent pillow map: double the coordinates and fold back into the square."""
    t = 2 * np.asarray(xy, float)
    flips = t > 1
    t = np.where(flips, 2 - t, t)
    return np.asarray(faces) ^ flips[:, 0] ^ flips[:, 1], t


def test_pillow_forward_matches_fold(pillow, rng):
    xy = rng.random((500, 2))
    faces = rng.integers(0, 2, 500)
    got_f, got_xy = pillow.forward(faces, xy)
    want_f, want_xy = fold_map(faces, xy)
    assert np.allclose(got_xy, want_xy, atol=1e-14)
    interior = ~pillow.on_boundary(want_xy)
    assert np.array_equal(got_f[interior], want_f[interior])


def test_charts_invert_the_map(any_rule, rng):
    for t in any_rule.one_tiles:
        pts = random_points_in_polygon(any_rule.polygon, 50, rng)
        img = t.chart(pts)
        assert np.allclose(t.chart.inverse(img), pts, atol=1e-12)


def test_addresses_of_interior_point(pillow):
    words = all_addresses(pillow, 0, (0.1, 0.2), 3)
    assert len(words) == 1
    x = compose_charts(pillow, words[0], pillow.polygon.mean(axis=0))
    assert np.linalg.norm(x - [0.1, 0.2]) <= math.sqrt(2) * 2**-3


def test_point_to_address_tie_break(pillow):
    x = ModelPoint(0, (0.5, 0.5))
    words = all_addresses(pillow, 0, (0.5, 0.5), 1)
    assert point_to_address(pillow, x, 1) == words[0] == min(words)


def test_fixed_point_of_word(pillow):
    p = address_to_point(pillow, [1, 5])
    assert p.face == 0
    assert np.allclose(p.xy, (2 / 3, 0.0), atol=1e-14)
    with pytest.raises(ContractViolation):
        address_to_point(pillow, [0, 3])


def test_periodic_points_are_fixed(any_rule):
    from thurstonopt.symbolic import build_transition

    A = build_transition(any_rule)
    for s in range(A.size):
        if A.entries[s, s]:
            _, xy = periodic_points(any_rule, [[s]])
            assert np.allclose(any_rule.one_tiles[s].chart(xy), xy, atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(0, 1), st.floats(0, 1), st.floats(0, 1),
    st.integers(0, 1), st.floats(0, 1), st.floats(0, 1),
    st.integers(0, 1), st.floats(0, 1), st.floats(0, 1),
)
def test_model_distance_is_a_metric(pillow, fa, xa, ya, fb, xb, yb, fc, xc, yc):
    def d(f1, p1, f2, p2):
        return float(model_distance(pillow, [f1], [p1], [f2], [p2])[0])

    a, b, c = (xa, ya), (xb, yb), (xc, yc)
    assert d(fa, a, fb, b) == pytest.approx(d(fb, b, fa, a), abs=1e-12)
    assert d(fa, a, fa, a) == pytest.approx(0.0, abs=1e-12)
    assert d(fa, a, fc, c) <= d(fa, a, fb, b) + d(fb, b, fc, c) + 1e-12


def test_model_distance_across_boundary(pillow):
    # a point on the boundary is the same point seen from either face
    assert model_distance(pillow, [0], [(0.3, 0.0)], [1], [(0.3, 0.0)])[0] == pytest.approx(0.0)
    # straight across the bottom edge
    d = model_distance(pillow, [0], [(0.5, 0.1)], [1], [(0.5, 0.2)])[0]
    assert d == pytest.approx(0.3)


def test_visual_distance_values(pillow):
    x, y = ModelPoint(0, (0.1, 0.1)), ModelPoint(0, (0.6, 0.6))
    assert visual_distance(pillow, x, y) == pytest.approx(0.5)
    assert visual_distance(pillow, x, x, VisualMetricConfig(2.0, 6)) == pytest.approx(2.0**-6)
    with pytest.raises(ValidationError):
        VisualMetricConfig(lam=1.0)


def test_metric_distortion_pillow_is_exact(pillow):
    rep = metric_distortion_check(pillow, samples=200)
    assert rep["min"] == pytest.approx(1.0) and rep["max"] == pytest.approx(1.0)


def test_chordal_distance():
    assert chordal_distance(0, INFINITY) == pytest.approx(2.0)
    assert chordal_distance(1, -1) == pytest.approx(2.0)
    assert chordal_distance(1j, 1j) == 0.0


def test_lattes_values():
    assert lattes_eval(1j) == INFINITY
    assert lattes_eval(1.0) == 0
    assert lattes_eval(INFINITY) == 0
    z = 0.3 + 0.2j
    assert lattes_eval(z) == pytest.approx(4 * z * (1 - z * z) / (1 + z * z) ** 2)


def test_lattes_preimages_map_back(rng):
    for w in rng.normal(size=5) + 1j * rng.normal(size=5):
        pre = lattes_preimages(w)
        assert len(pre) == 4
        for z in pre:
            assert chordal_distance(lattes_eval(complex(z)), w) < 1e-9
