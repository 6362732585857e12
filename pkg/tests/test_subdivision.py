import numpy as np
import pytest

from thurstonopt.errors import NotFoundError, ValidationError
from thurstonopt.subdivision import (
    BUILTIN_NAMES,
    bouquet,
    dump_rule,
    flower,
    load_builtin,
    load_rule,
    parse_rule,
    refine,
    render_svg,
    tiles_containing,
)


def test_builtin_names():
    assert set(BUILTIN_NAMES) == {"pillow_lattes", "barycentric", "flap"}
    with pytest.raises(NotFoundError):
        load_builtin("no_such_rule")


@pytest.mark.parametrize("n", [0, 1, 2, 3, 4])
def test_pillow_counts_follow_degree_powers(pillow, n):
    dec = refine(pillow, n)
    assert dec.n_tiles == 2 * 4**n
    assert dec.n_edges == 4 * 4**n
    assert dec.n_vertices - dec.n_edges + dec.n_tiles == 2


def test_barycentric_and_flap_level_one(barycentric, flap):
    b = refine(barycentric, 1)
    assert (b.n_tiles, b.n_edges, b.n_vertices) == (12, 18, 8)
    f = refine(flap, 1)
    assert (f.n_tiles, f.n_edges, f.n_vertices) == (10, 20, 12)
    f2 = refine(flap, 2)
    assert (f2.n_tiles, f2.n_edges, f2.n_vertices) == (50, 100, 52)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_euler_characteristic_every_rule(any_rule, n):
    dec = refine(any_rule, n)
    assert dec.n_vertices - dec.n_edges + dec.n_tiles == 2


def test_every_edge_borders_two_tiles(any_rule):
    dec = refine(any_rule, 2)
    counts = np.array([len(t) for t in dec.edge_tiles])
    assert np.all(counts == 2)


def test_tile_colors_alternate_across_edges(any_rule):
    # neighbouring tiles across an edge have different colours
    dec = refine(any_rule, 2)
    for a, b in dec.edge_tiles:
        assert dec.tile_color[a] != dec.tile_color[b]


def test_tile_sign_matches_color(any_rule):
    dec = refine(any_rule, 3)
    assert np.all(dec.tile_sign == np.where(dec.tile_color == 0, 1, -1))


def test_map_action_sends_tiles_to_shifted_words(pillow):
    dec = refine(pillow, 3)
    low = refine(pillow, 2)
    for t in range(dec.n_tiles):
        assert tuple(low.words[dec.map_tiles[t]]) == tuple(dec.words[t, 1:])


def test_local_degree_at_level_one_vertices(pillow):
    # four corners map with degree 1, the six critical vertices with degree 2
    dec = refine(pillow, 1)
    degrees = sorted(dec.vertex_degree.tolist())
    assert degrees == [1] * 4 + [2] * 6


def test_rule_text_roundtrip(any_rule):
    text = dump_rule(any_rule)
    again = parse_rule(text)
    assert again.degree == any_rule.degree
    assert again.n_symbols == any_rule.n_symbols
    a, b = refine(again, 2), refine(any_rule, 2)
    assert a.n_tiles == b.n_tiles and a.n_edges == b.n_edges
    assert np.allclose(a.tile_corners, b.tile_corners)


def test_load_rule_from_file(tmp_path, pillow):
    path = tmp_path / "pillow.rule"
    path.write_text(dump_rule(pillow))
    rule = load_rule(str(path))
    assert refine(rule, 1).n_tiles == 8


def test_wrong_image_color_rejected(pillow):
    # three tiles of the front face would map onto the white 0-tile
    text = dump_rule(pillow).replace("[tile fEBHF]\nface = 0\nimage = 1", "[tile fEBHF]\nface = 0\nimage = 0")
    with pytest.raises(ValidationError):
        parse_rule(text)


def test_corner_off_outline_rejected(pillow):
    text = dump_rule(pillow).replace("corners = A E F G", "corners = A E F C")
    with pytest.raises(ValidationError, match="corner"):
        parse_rule(text)


def test_flower_and_bouquet(pillow):
    dec = refine(pillow, 2)
    for v in range(dec.n_vertices):
        assert len(flower(dec, v)) == 2 * dec.vertex_degree[v]
    b = bouquet(dec, 0)
    assert 0 in b and len(b) > 1


def test_tiles_containing_center(pillow):
    dec = refine(pillow, 1)
    tiles = tiles_containing(dec, 0, (0.25, 0.25))
    assert len(tiles) == 1
    corner = tiles_containing(dec, 0, (0.5, 0.5))
    assert len(corner) == 4


def test_svg_has_one_path_per_tile(pillow):
    dec = refine(pillow, 2)
    svg = render_svg(dec)
    assert svg.startswith("<svg") and svg.count("<path") == dec.n_tiles
