"""Two-tile subdivision rules and their cell decompositions.

The sphere is modelled as two copies (faces 0 and 1) of one convex
``m``-gon glued along the boundary, so a point is a pair ``(face, xy)``
and every point of the boundary curve is canonically stored on face 0.
Face 0 is the white 0-tile, face 1 the black one.

A rule lists the ``2 * degree`` 1-tiles.  Each 1-tile lives in one face,
maps onto one face (its colour) and carries a chart, the inverse branch
of the map on that tile.  Level-``n`` tiles are addressed by admissible
words of 1-tiles and their geometry is the composition of charts along
the word, so addresses are canonical and coordinates are derived.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .charts import Chart, build_chart, polygon_area, segment_point_distance
from .errors import ContractViolation, NotFoundError, ResourceError, ValidationError

WHITE, BLACK = 0, 1
COLOR_NAMES = ("white", "black")
DEFAULT_BUDGET = 2_000_000
# tolerance for "point lies on a cell" tests in model units
LOCATE_TOL = 1e-10
_CLUSTER_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class OneTile:
    id: int
    name: str
    face: int
    image: int
    corners: tuple
    outline: tuple
    corner_index: tuple
    center: tuple | None
    chart: Chart = field(repr=False)

    @property
    def color(self):
        return self.image

    @property
    def orientation(self):
        """+1 if the corner labels run counterclockwise seen from outside."""
        return face_sign(self.face) * self.chart.orientation


def face_sign(face):
    return 1 if face == WHITE else -1


@dataclass(frozen=True, eq=False)
class SubdivisionRule:
    """A two-tile subdivision rule with exact model charts."""

    name: str
    degree: int
    zero_polygon: tuple
    zero_labels: tuple
    vertices: dict
    one_tiles: tuple
    lam: float = 2.0

    @property
    def post_count(self):
        return len(self.zero_labels)

    @property
    def n_symbols(self):
        return len(self.one_tiles)

    @property
    def polygon(self):
        return np.asarray(self.zero_polygon, dtype=float)

    def tile_by_name(self, name):
        for t in self.one_tiles:
            if t.name == name:
                return t
        raise NotFoundError(f"rule {self.name!r} has no 1-tile named {name!r}")

    # -- vertex data -------------------------------------------------------

    @property
    def vertex_image(self):
        """Map from 1-vertex name to the label of its image 0-vertex."""
        return _vertex_image(self)

    @property
    def critical_vertices(self):
        """Names of 1-vertices where the map has local degree > 1."""
        counts = {}
        for t in self.one_tiles:
            for v in t.corners:
                counts[v] = counts.get(v, 0) + 1
        return tuple(sorted(v for v, c in counts.items() if c > 2))

    def vertex_point(self, name):
        face, x, y = self.vertices[name]
        return (WHITE if face is None else face), np.array([x, y], dtype=float)

    def critical_points(self):
        """Critical vertices as ``(faces, xy)`` arrays."""
        names = self.critical_vertices
        pts = [self.vertex_point(v) for v in names]
        return np.array([p[0] for p in pts], dtype=int), np.array([p[1] for p in pts]).reshape(-1, 2)

    # -- points ------------------------------------------------------------

    def on_boundary(self, xy, tol=LOCATE_TOL):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        poly = self.polygon
        m = len(poly)
        d = np.min(
            np.stack([segment_point_distance(xy, poly[k], poly[(k + 1) % m]) for k in range(m)]),
            axis=0,
        )
        return d <= tol

    def canonical(self, faces, xy):
        """Move boundary points onto face 0."""
        faces = np.asarray(faces, dtype=int).copy()
        faces[self.on_boundary(xy)] = WHITE
        return faces, xy

    def tiles_at(self, faces, xy, tol=LOCATE_TOL):
        """Boolean matrix (k, n_symbols): which 1-tiles contain each point."""
        faces = np.atleast_1d(np.asarray(faces, dtype=int))
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        bnd = self.on_boundary(xy, tol)
        out = np.zeros((len(faces), self.n_symbols), dtype=bool)
        for t in self.one_tiles:
            ok = (faces == t.face) | bnd
            if ok.any():
                out[ok, t.id] = t.chart.contains(xy[ok], tol)
        return out

    def locate(self, faces, xy, tol=LOCATE_TOL):
        """Lowest-id 1-tile containing each point."""
        hits = self.tiles_at(faces, xy, tol)
        if not hits.any(axis=1).all():
            raise ContractViolation("point outside every 1-tile")
        return np.argmax(hits, axis=1)

    def forward(self, faces, xy, tiles=None):
        """Apply the map: ``f(x)`` via the inverse chart of the chosen 1-tile."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        if tiles is None:
            tiles = self.locate(faces, xy)
        out = np.empty_like(xy)
        out_faces = np.empty(len(xy), dtype=int)
        for t in self.one_tiles:
            sel = tiles == t.id
            if sel.any():
                out[sel] = t.chart.inverse(xy[sel])
                out_faces[sel] = t.image
        return self.canonical(out_faces, out)

    def apply_charts(self, symbols, xy):
        """Apply ``chart_{symbols[i]}`` to ``xy[i]`` for each row."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        symbols = np.asarray(symbols, dtype=int)
        out = np.empty_like(xy)
        for t in self.one_tiles:
            sel = symbols == t.id
            if sel.any():
                out[sel] = t.chart(xy[sel])
        return out

    def face_of(self, symbols):
        return np.array([t.face for t in self.one_tiles])[np.asarray(symbols, dtype=int)]

    def image_of(self, symbols):
        return np.array([t.image for t in self.one_tiles])[np.asarray(symbols, dtype=int)]


@lru_cache(maxsize=None)
def _vertex_image(rule):
    image = {}
    for t in rule.one_tiles:
        for k, v in enumerate(t.corners):
            lab = rule.zero_labels[k]
            if image.setdefault(v, lab) != lab:
                raise ValidationError(
                    f"{rule.name}: vertex {v} maps to both {image[v]} and {lab}"
                )
    return image


# -- construction ------------------------------------------------------------


def make_rule(name, degree, zero_polygon, zero_labels, vertices, tiles, lam=2.0, validate=True):
    """Assemble a rule from plain data.

    ``vertices`` maps a name to ``(face or None, x, y)``; ``None`` marks a
    point of the boundary curve.  Each tile spec is a dict with keys
    ``name``, ``face``, ``image``, ``corners`` (vertex names matched to the
    0-labels in order), ``outline`` (vertex names or ``(x, y)`` pairs) and
    optionally ``center``.
    """
    zero = np.asarray(zero_polygon, dtype=float)
    one_tiles = []
    for i, spec in enumerate(tiles):
        pts = []
        for item in spec["outline"]:
            if isinstance(item, str):
                _, x, y = vertices[item]
                pts.append((float(x), float(y)))
            else:
                pts.append((float(item[0]), float(item[1])))
        names = [o if isinstance(o, str) else None for o in spec["outline"]]
        try:
            corner_index = tuple(names.index(v) for v in spec["corners"])
        except ValueError as exc:
            raise ValidationError(f"{name}: tile {spec['name']} corner not on its outline") from exc
        center = spec.get("center")
        chart = build_chart(zero, pts, corner_index, center)
        one_tiles.append(
            OneTile(
                id=i,
                name=spec["name"],
                face=int(spec["face"]),
                image=int(spec["image"]),
                corners=tuple(spec["corners"]),
                outline=tuple(pts),
                corner_index=corner_index,
                center=None if center is None else tuple(center),
                chart=chart,
            )
        )
    rule = SubdivisionRule(
        name=name,
        degree=int(degree),
        zero_polygon=tuple(map(tuple, zero.tolist())),
        zero_labels=tuple(zero_labels),
        vertices=dict(vertices),
        one_tiles=tuple(one_tiles),
        lam=float(lam),
    )
    if validate:
        validate_rule(rule)
    return rule


def validate_rule(rule):
    """Check the structural invariants; raise ``ValidationError`` on failure."""
    d, m = rule.degree, rule.post_count
    if len(rule.one_tiles) != 2 * d:
        raise ValidationError(f"{rule.name}: {len(rule.one_tiles)} 1-tiles, expected {2 * d}")
    for color in (WHITE, BLACK):
        count = sum(t.image == color for t in rule.one_tiles)
        if count != d:
            raise ValidationError(
                f"{rule.name}: {count} 1-tiles map onto the {COLOR_NAMES[color]} 0-tile, expected {d}"
            )
    for t in rule.one_tiles:
        if len(t.corners) != m or len(set(t.corners)) != m:
            raise ValidationError(f"{rule.name}: tile {t.name} is not an {m}-gon")
        lip = t.chart.lipschitz
        if not lip < 1.0:
            raise ValidationError(f"{rule.name}: chart of {t.name} has Lipschitz constant {lip:.3f}")
        if t.chart.orientation == 0:
            raise ValidationError(f"{rule.name}: chart of {t.name} folds")
        # orientation-preserving on the sphere: image face sign = face sign * model sign
        if face_sign(t.image) != t.orientation:
            raise ValidationError(
                f"{rule.name}: tile {t.name} orientation inconsistent with its colour"
            )
    _vertex_image(rule)
    # zero-polygon area check: tiles on each face exactly cover it
    total = abs(polygon_area(rule.polygon))
    for face in (WHITE, BLACK):
        area = sum(abs(polygon_area(t.outline)) for t in rule.one_tiles if t.face == face)
        if not math.isclose(area, total, rel_tol=1e-9):
            raise ValidationError(f"{rule.name}: 1-tiles on face {face} do not tile the 0-tile")
    dec = refine(rule, 1, map_action=False)
    v, e, f = dec.n_vertices, dec.n_edges, dec.n_tiles
    if v - e + f != 2:
        raise ValidationError(f"{rule.name}: Euler characteristic {v - e + f}, expected 2")
    return rule


# -- built-in examples ---------------------------------------------------------

_SQUARE = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))
_SQ_LABELS = ("A", "B", "C", "D")
_PILLOW_BOUNDARY = {
    "A": (None, 0.0, 0.0),
    "B": (None, 1.0, 0.0),
    "C": (None, 1.0, 1.0),
    "D": (None, 0.0, 1.0),
    "E": (None, 0.5, 0.0),
    "H": (None, 1.0, 0.5),
    "I": (None, 0.5, 1.0),
    "G": (None, 0.0, 0.5),
}


def _pillow_lattes():
    vertices = dict(_PILLOW_BOUNDARY, F=(WHITE, 0.5, 0.5), J=(BLACK, 0.5, 0.5))
    tiles = []
    # quadrant (i, j) of face s maps onto face s ^ i ^ j by (x, y) -> (tent x, tent y)
    quads = {
        (0, 0): ("A", "E", "F", "G"),
        (1, 0): ("B", "E", "F", "H"),
        (1, 1): ("C", "I", "F", "H"),
        (0, 1): ("D", "I", "F", "G"),
    }
    outlines = {
        (0, 0): ("A", "E", "F", "G"),
        (1, 0): ("E", "B", "H", "F"),
        (1, 1): ("F", "H", "C", "I"),
        (0, 1): ("G", "F", "I", "D"),
    }
    for face, centre, prefix in ((WHITE, "F", "f"), (BLACK, "J", "b")):
        for (i, j), corners in quads.items():
            sub = lambda names: tuple(centre if v == "F" else v for v in names)  # noqa: E731
            outline = sub(outlines[(i, j)])
            tiles.append(
                {
                    "name": prefix + "".join(outline),
                    "face": face,
                    "image": face ^ i ^ j,
                    "corners": sub(corners),
                    "outline": outline,
                }
            )
    return make_rule("pillow_lattes", 4, _SQUARE, _SQ_LABELS, vertices, tiles, lam=2.0)


def _barycentric():
    s3 = math.sqrt(3.0)
    tri = ((0.0, 0.0), (1.0, 0.0), (0.5, s3 / 2))
    vertices = {
        "A": (None, 0.0, 0.0),
        "B": (None, 1.0, 0.0),
        "C": (None, 0.5, s3 / 2),
        "AB": (None, 0.5, 0.0),
        "BC": (None, 0.75, s3 / 4),
        "CA": (None, 0.25, s3 / 4),
        "O": (WHITE, 0.5, s3 / 6),
        "Ob": (BLACK, 0.5, s3 / 6),
    }
    # small triangles (vertex, adjacent side midpoint); corners map vertex->A, midpoint->B, centroid->C
    pairs = [("A", "AB"), ("B", "AB"), ("B", "BC"), ("C", "BC"), ("C", "CA"), ("A", "CA")]
    tiles = []
    for face, centre, prefix in ((WHITE, "O", "f"), (BLACK, "Ob", "b")):
        for v, mid in pairs:
            corners = (v, mid, centre)
            pts = np.array([vertices[c][1:] for c in corners])
            ccw = polygon_area(pts) > 0
            image = face if ccw else 1 - face
            outline = corners if ccw else (v, centre, mid)
            tiles.append(
                {
                    "name": f"{prefix}{v}-{mid}",
                    "face": face,
                    "image": image,
                    "corners": corners,
                    "outline": outline,
                }
            )
    return make_rule("barycentric", 6, tri, ("A", "B", "C"), vertices, tiles, lam=2.0)


def _flap():
    # Front face: the big pillow's front with slit GF opened into a lens
    # (arcs G-P1-F and G-P2-F) holding both squares of the half-scale pillow,
    # which meet along G-D'-C'-F.  Back face: the big pillow's back.
    vertices = dict(
        _PILLOW_BOUNDARY,
        F=(WHITE, 0.5, 0.5),
        J=(BLACK, 0.5, 0.5),
        Dp=(WHITE, 1.0 / 6.0, 0.5),
        Cp=(WHITE, 1.0 / 3.0, 0.5),
    )
    p1, p2 = (0.25, 0.35), (0.25, 0.65)
    tiles = [
        {"name": "fAEFG", "face": WHITE, "image": WHITE, "corners": ("A", "E", "F", "G"),
         "outline": ("A", "E", "F", p1, "G"), "center": (0.2, 0.15)},
        {"name": "fEBHF", "face": WHITE, "image": BLACK, "corners": ("B", "E", "F", "H"),
         "outline": ("E", "B", "H", "F")},
        {"name": "fFHCI", "face": WHITE, "image": WHITE, "corners": ("C", "I", "F", "H"),
         "outline": ("F", "H", "C", "I")},
        {"name": "fGFID", "face": WHITE, "image": BLACK, "corners": ("D", "I", "F", "G"),
         "outline": ("G", p2, "F", "I", "D"), "center": (0.2, 0.85)},
        {"name": "pFront", "face": WHITE, "image": BLACK, "corners": ("Dp", "Cp", "F", "G"),
         "outline": ("G", p1, "F", "Cp", "Dp"), "center": (0.25, 0.45)},
        {"name": "pBack", "face": WHITE, "image": WHITE, "corners": ("Dp", "Cp", "F", "G"),
         "outline": ("G", "Dp", "Cp", "F", p2), "center": (0.25, 0.55)},
        {"name": "bAEJG", "face": BLACK, "image": BLACK, "corners": ("A", "E", "J", "G"),
         "outline": ("A", "E", "J", "G")},
        {"name": "bEBHJ", "face": BLACK, "image": WHITE, "corners": ("B", "E", "J", "H"),
         "outline": ("E", "B", "H", "J")},
        {"name": "bJHCI", "face": BLACK, "image": BLACK, "corners": ("C", "I", "J", "H"),
         "outline": ("J", "H", "C", "I")},
        {"name": "bGJID", "face": BLACK, "image": WHITE, "corners": ("D", "I", "J", "G"),
         "outline": ("G", "J", "I", "D")},
    ]
    return make_rule("flap", 5, _SQUARE, _SQ_LABELS, vertices, tiles, lam=2.0)


_BUILTINS = {
    "pillow_lattes": _pillow_lattes,
    "barycentric": _barycentric,
    "flap": _flap,
}
BUILTIN_NAMES = tuple(_BUILTINS)


@lru_cache(maxsize=None)
def load_builtin(name):
    """Return one of the built-in rules: ``pillow_lattes``, ``barycentric``, ``flap``."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise NotFoundError(
            f"unknown rule {name!r}; built-ins are {', '.join(BUILTIN_NAMES)}"
        ) from None
    return factory()


# -- rule files ------------------------------------------------------------------


def _fmt_pt(x, y):
    return f"{x!r} {y!r}"


def dump_rule(rule):
    """Serialize a rule to the sectioned key=value text format."""
    lines = [
        "[rule]",
        f"name = {rule.name}",
        f"degree = {rule.degree}",
        f"lambda = {rule.lam!r}",
        "polygon = " + "; ".join(_fmt_pt(*p) for p in rule.zero_polygon),
        "labels = " + " ".join(rule.zero_labels),
        "",
        "[vertices]",
    ]
    for name, (face, x, y) in rule.vertices.items():
        lines.append(f"{name} = {'*' if face is None else face} {_fmt_pt(x, y)}")
    for t in rule.one_tiles:
        lines += ["", f"[tile {t.name}]", f"face = {t.face}", f"image = {t.image}",
                  "corners = " + " ".join(t.corners)]
        items = []
        for k, p in enumerate(t.outline):
            if k in t.corner_index:
                items.append(t.corners[t.corner_index.index(k)])
            else:
                items.append(_fmt_pt(*p))
        lines.append("outline = " + "; ".join(items))
        if t.center is not None:
            lines.append("center = " + _fmt_pt(*t.center))
    return "\n".join(lines) + "\n"


def _parse_pt(text):
    x, y = text.split()
    return float(x), float(y)


def parse_rule(text):
    """Parse a rule from the text format written by :func:`dump_rule`."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
        head = cp["rule"]
        vertices = {}
        for name, val in cp["vertices"].items():
            face, x, y = val.split()
            vertices[name] = (None if face == "*" else int(face), float(x), float(y))
        tiles = []
        for sect in cp.sections():
            if not sect.startswith("tile "):
                continue
            s = cp[sect]
            outline = []
            for item in s["outline"].split(";"):
                item = item.strip()
                outline.append(item if item in vertices else _parse_pt(item))
            spec = {
                "name": sect[5:].strip(),
                "face": int(s["face"]),
                "image": int(s["image"]),
                "corners": tuple(s["corners"].split()),
                "outline": tuple(outline),
            }
            if "center" in s:
                spec["center"] = _parse_pt(s["center"])
            tiles.append(spec)
        polygon = [_parse_pt(p) for p in head["polygon"].split(";")]
        return make_rule(
            head["name"],
            int(head["degree"]),
            polygon,
            tuple(head["labels"].split()),
            vertices,
            tiles,
            lam=float(head.get("lambda", "2.0")),
        )
    except (KeyError, ValueError, configparser.Error) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"malformed rule file: {exc}") from exc


def load_rule(name_or_path):
    """Built-in rule by name, or a rule file path."""
    if name_or_path in _BUILTINS:
        return load_builtin(name_or_path)
    try:
        with open(name_or_path, encoding="utf-8") as fh:
            return parse_rule(fh.read())
    except FileNotFoundError:
        raise NotFoundError(f"no built-in rule or rule file named {name_or_path!r}") from None


# -- refinement --------------------------------------------------------------------


@dataclass
class _Level:
    words: np.ndarray  # (N, n)
    face: np.ndarray  # (N,)
    image: np.ndarray  # (N,) colour: the 0-tile f^n maps the tile onto
    sign: np.ndarray  # (N,) +1 if corner labels run counterclockwise seen from outside
    corners: np.ndarray  # (N, m, 2)
    mids: np.ndarray  # (N, m, 2) images of 0-edge midpoints
    center: np.ndarray  # (N, 2)


def _level_zero(rule):
    poly = rule.polygon
    mids = 0.5 * (poly + np.roll(poly, -1, axis=0))
    return _Level(
        words=np.zeros((2, 0), dtype=np.int16),
        face=np.array([WHITE, BLACK]),
        image=np.array([WHITE, BLACK]),
        sign=np.array([1, -1]),
        corners=np.repeat(poly[None], 2, axis=0),
        mids=np.repeat(mids[None], 2, axis=0),
        center=np.repeat(poly.mean(axis=0)[None], 2, axis=0),
    )


def _next_level(rule, prev):
    parts = []
    for t in rule.one_tiles:
        idx = np.nonzero(prev.face == t.image)[0]
        k = len(idx)
        words = np.concatenate(
            [np.full((k, 1), t.id, dtype=np.int16), prev.words[idx]], axis=1
        )
        parts.append(
            _Level(
                words=words,
                face=np.full(k, t.face),
                image=prev.image[idx],
                sign=prev.sign[idx] * face_sign(t.image) * t.chart.orientation * face_sign(t.face),
                corners=t.chart(prev.corners[idx]),
                mids=t.chart(prev.mids[idx]),
                center=t.chart(prev.center[idx]),
            )
        )
    return _Level(*(np.concatenate([getattr(p, f) for p in parts]) for f in _Level.__dataclass_fields__))


def _levels(rule, n):
    lev = [_level_zero(rule)]
    for _ in range(n):
        lev.append(_next_level(rule, lev[-1]))
    return lev


def _cluster(rule, faces, pts, tol=_CLUSTER_TOL):
    """Label identical sphere points; labels ordered by first occurrence."""
    faces, pts = rule.canonical(faces, pts)
    coords = np.column_stack([faces * 8.0, pts])
    tree = cKDTree(coords)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    n = len(coords)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    return remap[labels], faces, pts


def count_cells(rule, n):
    """Upper bound on tiles + edges + vertices at level ``n``."""
    return (2 + 2 * rule.post_count) * rule.degree**n


@dataclass(eq=False)
class CellDecomposition:
    """The level-``n`` cell complex of a rule.

    Tiles are indexed in lexicographic order of their address words.
    ``tile_vertices[i, k]`` / ``tile_edges[i, k]`` follow the corner labels
    (corner ``k`` maps to 0-vertex ``k``, edge ``k`` joins corners ``k`` and
    ``k + 1``); :meth:`boundary_cycle` gives the counterclockwise order.
    """

    rule: SubdivisionRule
    level: int
    words: np.ndarray
    tile_face: np.ndarray
    tile_color: np.ndarray
    tile_sign: np.ndarray
    tile_corners: np.ndarray
    tile_center: np.ndarray
    tile_vertices: np.ndarray
    tile_edges: np.ndarray
    vertex_face: np.ndarray
    vertex_xy: np.ndarray
    vertex_tiles: list
    edge_vertices: np.ndarray
    edge_tiles: np.ndarray
    map_tiles: np.ndarray | None = None
    map_edges: np.ndarray | None = None
    map_vertices: np.ndarray | None = None

    @property
    def n_tiles(self):
        return len(self.words)

    @property
    def n_edges(self):
        return len(self.edge_vertices)

    @property
    def n_vertices(self):
        return len(self.vertex_xy)

    @property
    def vertex_degree(self):
        """Local degree of ``f^n`` at each vertex."""
        return np.array([len(t) // 2 for t in self.vertex_tiles])

    def tile_index(self, word):
        word = tuple(int(s) for s in word)
        if len(word) != self.level:
            raise ContractViolation(f"word length {len(word)} != level {self.level}")
        codes = _codes(self.words, self.rule.n_symbols)
        code = _codes(np.array([word]), self.rule.n_symbols)[0]
        i = int(np.searchsorted(codes, code))
        if i >= len(codes) or codes[i] != code:
            raise NotFoundError(f"{word} is not an admissible word")
        return i

    def boundary_cycle(self, tile):
        """Edge ids of a tile, counterclockwise seen from outside."""
        edges = list(self.tile_edges[tile])
        return edges if self.tile_sign[tile] > 0 else edges[::-1]

    def vertex_cycle(self, tile):
        verts = list(self.tile_vertices[tile])
        return verts if self.tile_sign[tile] > 0 else verts[::-1]

    def tile_polygon(self, tile, density=0):
        """Outline of a tile in its face's model coordinates, counterclockwise.

        With ``density > 0`` each side is sampled at that many interior
        points, which follows the bent sides of non-affine rules.
        """
        poly = self.rule.polygon
        m = len(poly)
        t = np.linspace(0.0, 1.0, density + 2)[:-1]
        pts = np.concatenate([poly[k] + t[:, None] * (poly[(k + 1) % m] - poly[k]) for k in range(m)])
        for s in self.words[tile][::-1]:
            pts = self.rule.one_tiles[int(s)].chart(pts)
        return pts if polygon_area(pts) > 0 else pts[::-1]

    def tile_record(self, tile):
        return {
            "id": int(tile),
            "color": COLOR_NAMES[int(self.tile_color[tile])],
            "face": int(self.tile_face[tile]),
            "address": [int(s) for s in self.words[tile]],
            "polygon": self.tile_corners[tile].tolist(),
            "boundary": [int(e) for e in self.boundary_cycle(tile)],
        }

    def to_json(self):
        """JSON-ready dict (schema version 1)."""
        return {
            "version": 1,
            "rule": self.rule.name,
            "level": self.level,
            "tiles": [self.tile_record(i) for i in range(self.n_tiles)],
            "edges": [
                {"id": i, "vertices": [int(a) for a in self.edge_vertices[i]],
                 "tiles": [int(a) for a in self.edge_tiles[i]]}
                for i in range(self.n_edges)
            ],
            "vertices": [
                {"id": i, "face": int(self.vertex_face[i]), "xy": self.vertex_xy[i].tolist(),
                 "tiles": [int(a) for a in self.vertex_tiles[i]],
                 "degree": len(self.vertex_tiles[i]) // 2}
                for i in range(self.n_vertices)
            ],
            "map_action": None if self.map_tiles is None else {
                "tiles": self.map_tiles.tolist(),
                "edges": self.map_edges.tolist(),
                "vertices": self.map_vertices.tolist(),
            },
        }


def _codes(words, base):
    codes = np.zeros(len(words), dtype=np.int64)
    for j in range(words.shape[1]):
        codes = codes * base + words[:, j]
    return codes


def _assemble(rule, lev, n):
    m = rule.post_count
    N = len(lev.words)
    vlab, vfaces, vpts = _cluster(
        rule, np.repeat(lev.face, m), lev.corners.reshape(-1, 2)
    )
    tile_vertices = vlab.reshape(N, m)
    n_v = int(vlab.max()) + 1
    vertex_xy = np.zeros((n_v, 2))
    vertex_face = np.zeros(n_v, dtype=int)
    vertex_xy[vlab] = vpts
    vertex_face[vlab] = vfaces

    elab, _, _ = _cluster(rule, np.repeat(lev.face, m), lev.mids.reshape(-1, 2))
    tile_edges = elab.reshape(N, m)
    n_e = int(elab.max()) + 1
    occ = np.bincount(elab, minlength=n_e)
    if not np.all(occ == 2):
        raise ValidationError(
            f"{rule.name}: level {n} edges are not glued in pairs (counts {sorted(set(occ.tolist()))})"
        )
    order = np.argsort(elab, kind="stable")
    edge_tiles = (order // m).reshape(n_e, 2)
    first = order[::2]
    slot = first % m
    t0 = first // m
    edge_vertices = np.column_stack([tile_vertices[t0, slot], tile_vertices[t0, (slot + 1) % m]])

    vorder = np.argsort(vlab, kind="stable")
    bounds = np.searchsorted(vlab[vorder], np.arange(n_v + 1))
    vertex_tiles = [np.unique(vorder[bounds[i]:bounds[i + 1]] // m) for i in range(n_v)]
    return CellDecomposition(
        rule=rule,
        level=n,
        words=lev.words.astype(np.int64),
        tile_face=lev.face,
        tile_color=lev.image,
        tile_sign=lev.sign,
        tile_corners=lev.corners,
        tile_center=lev.center,
        tile_vertices=tile_vertices,
        tile_edges=tile_edges,
        vertex_face=vertex_face,
        vertex_xy=vertex_xy,
        vertex_tiles=vertex_tiles,
        edge_vertices=edge_vertices,
        edge_tiles=edge_tiles,
    )


def refine(rule, n, budget=DEFAULT_BUDGET, map_action=True):
    """Build the level-``n`` cell decomposition.

    ``map_action`` also records, for every cell, the id of its image cell
    at level ``n - 1``.
    """
    if n < 0:
        raise ContractViolation("level must be >= 0")
    cells = count_cells(rule, n)
    if cells > budget:
        raise ResourceError(f"level {n} of {rule.name} has ~{cells} cells, budget is {budget}")
    return _refine_cached(rule, n, map_action)


@lru_cache(maxsize=16)
def _refine_cached(rule, n, map_action):
    levels = _levels(rule, n)
    dec = _assemble(rule, levels[n], n)
    if map_action and n >= 1:
        prev = _refine_cached(rule, n - 1, False)
        base = rule.n_symbols
        if n == 1:
            shift = dec.tile_color.copy()
        else:
            codes_prev = _codes(prev.words, base)
            shift = np.searchsorted(codes_prev, _codes(dec.words[:, 1:], base))
        m = rule.post_count
        map_edges = np.empty(dec.n_edges, dtype=int)
        map_vertices = np.empty(dec.n_vertices, dtype=int)
        map_edges[dec.tile_edges.ravel()] = prev.tile_edges[shift].ravel()
        map_vertices[dec.tile_vertices.ravel()] = prev.tile_vertices[shift].ravel()
        dec.map_tiles = shift
        dec.map_edges = map_edges
        dec.map_vertices = map_vertices
        assert m == dec.tile_edges.shape[1]
    return dec


def flower(decomp, v):
    """Ids of the tiles incident to vertex ``v``."""
    if not 0 <= int(v) < decomp.n_vertices:
        raise NotFoundError(f"level {decomp.level} has no vertex {v}")
    return set(int(t) for t in decomp.vertex_tiles[int(v)])


def tiles_containing(decomp, face, xy, tol=LOCATE_TOL):
    """Ids of all level-``n`` tiles containing a point."""
    from .geometry import all_addresses

    words = all_addresses(decomp.rule, face, xy, decomp.level, tol)
    return sorted(decomp.tile_index(w) for w in words)


def bouquet(decomp, x):
    """Tiles meeting some tile that contains ``x``.

    ``x`` is a tile id or a point with ``face`` and ``coords`` attributes.
    """
    if isinstance(x, (int, np.integer)):
        if not 0 <= int(x) < decomp.n_tiles:
            raise NotFoundError(f"level {decomp.level} has no tile {x}")
        seeds = [int(x)]
    else:
        seeds = tiles_containing(decomp, x.face, x.coords)
        if not seeds:
            raise ContractViolation("point could not be located")
    out = set()
    for t in seeds:
        for v in decomp.tile_vertices[t]:
            out.update(int(s) for s in decomp.vertex_tiles[v])
    return out


# -- rendering --------------------------------------------------------------------

_FILL = ("#ffffff", "#202020")


def render_svg(decomp, highlight=(), highlight_color="#e0452b", size=320, density=4, max_tiles=200_000):
    """SVG drawing of a decomposition: the two faces side by side.

    Every tile becomes one closed ``<path>`` filled by its colour; tiles in
    ``highlight`` are filled with ``highlight_color`` instead.
    """
    if decomp.n_tiles > max_tiles:
        raise ResourceError(f"{decomp.n_tiles} tiles exceed the render budget {max_tiles}")
    poly = decomp.rule.polygon
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    scale = size / float(np.max(hi - lo))
    pad = 10.0
    width = 2 * size + 3 * pad
    height = (hi[1] - lo[1]) * scale + 2 * pad
    marked = set(int(t) for t in highlight)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.2f} {height:.2f}">'
    ]
    for tile in range(decomp.n_tiles):
        pts = decomp.tile_polygon(tile, density)
        x0 = pad + int(decomp.tile_face[tile]) * (size + pad)
        sx = x0 + (pts[:, 0] - lo[0]) * scale
        sy = pad + (hi[1] - pts[:, 1]) * scale
        d = "M" + " L".join(f"{a:.3f},{b:.3f}" for a, b in zip(sx, sy)) + " Z"
        fill = highlight_color if tile in marked else _FILL[int(decomp.tile_color[tile])]
        out.append(
            f'<path id="t{tile}" d="{d}" fill="{fill}" stroke="#808080" stroke-width="0.5"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
