"""Distances and point realizations on the two-face model sphere."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, ValidationError
from .subdivision import LOCATE_TOL, WHITE

INFINITY = complex(math.inf, 0.0)
_MAX_TOL = 1e-6


@dataclass(frozen=True)
class ModelPoint:
    """A point of the sphere: a face (0-tile id) and model coordinates."""

    face: int
    coords: tuple

    def __post_init__(self):
        if self.face not in (0, 1):
            raise ValidationError(f"face must be 0 or 1, got {self.face}")
        object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))

    @property
    def xy(self):
        return np.array(self.coords)


@dataclass(frozen=True)
class VisualMetricConfig:
    lam: float = 2.0
    max_level: int = 10

    def __post_init__(self):
        if not self.lam > 1.0:
            raise ValidationError(f"expansion factor must exceed 1, got {self.lam}")
        if self.max_level < 0:
            raise ValidationError("max_level must be >= 0")


def _inverse_growth(rule):
    return max(float(np.max(np.linalg.norm(t.chart.inv_mat, 2, axis=(1, 2)))) for t in rule.one_tiles)


def all_addresses(rule, face, xy, n, tol=LOCATE_TOL):
    """Every admissible length-``n`` word whose tile contains the point.

    Walks forward along the orbit: at each step every 1-tile containing
    the current point is tried and the point is pulled through that
    tile's inverse chart.  The tolerance grows with the expansion.
    """
    growth = _inverse_growth(rule)
    xy = np.asarray(xy, dtype=float).reshape(2)
    if rule.on_boundary(xy, tol)[0]:
        face = WHITE
    frontier = [((), int(face), xy)]
    for k in range(n):
        tk = min(tol * growth**k, _MAX_TOL)
        nxt = []
        for word, f, p in frontier:
            hits = rule.tiles_at([f], p[None], tk)[0]
            for s in np.nonzero(hits)[0]:
                t = rule.one_tiles[s]
                if word and rule.one_tiles[word[-1]].image != t.face:
                    continue
                q = t.chart.inverse(p[None])[0]
                g = WHITE if rule.on_boundary(q, tk * growth)[0] else t.image
                nxt.append((word + (int(s),), g, q))
        frontier = nxt
    return sorted(w for w, _, _ in frontier)


def point_to_address(rule, x, n, tie_rule="min_id"):
    """Address of a level-``n`` tile containing ``x``.

    Ties on cell boundaries go to the lowest tile id, which is the
    lexicographically least word.
    """
    if tie_rule != "min_id":
        raise ValidationError(f"unknown tie rule {tie_rule!r}")
    words = all_addresses(rule, x.face, x.xy, n)
    if not words:
        raise ContractViolation(f"point {x} could not be located at level {n}")
    return words[0]


def check_admissible(rule, word):
    word = [int(s) for s in word]
    for a, b in zip(word, word[1:]):
        if rule.one_tiles[a].image != rule.one_tiles[b].face:
            raise ContractViolation(f"word {tuple(word)} is not admissible at {a}->{b}")
    return word


def compose_charts(rule, word, xy):
    """``chart_{w_0} o ... o chart_{w_{n-1}}`` applied to points."""
    out = np.asarray(xy, dtype=float)
    for s in reversed(list(word)):
        out = rule.one_tiles[int(s)].chart(out)
    return out


def tile_outline(rule, word):
    """Corner coordinates of the tile addressed by ``word``."""
    return compose_charts(rule, word, rule.polygon)


def periodic_points(rule, cycles, tol=1e-16):
    """Fixed points of the chart compositions along each row of ``cycles``.

    ``cycles`` is a (k, p) integer array of closed admissible words.
    The iteration is vectorized over rows.
    """
    cycles = np.atleast_2d(np.asarray(cycles, dtype=int))
    k, p = cycles.shape
    lip = max(t.chart.lipschitz for t in rule.one_tiles)
    diam = float(np.max(np.ptp(rule.polygon, axis=0))) * math.sqrt(2.0)
    rounds = max(1, math.ceil(math.log(tol / diam) / (p * math.log(lip))))
    xy = np.repeat(rule.polygon.mean(axis=0)[None], k, axis=0)
    for _ in range(rounds + 1):
        for j in range(p - 1, -1, -1):
            xy = rule.apply_charts(cycles[:, j], xy)
    return rule.face_of(cycles[:, 0]), xy


def address_to_point(rule, prefix, cycle=None):
    """The point with itinerary ``prefix`` followed by ``cycle`` repeated.

    With ``cycle`` omitted the prefix itself is repeated.
    """
    if cycle is None:
        prefix, cycle = [], prefix
    prefix = check_admissible(rule, prefix)
    cycle = check_admissible(rule, cycle)
    if not cycle:
        raise ContractViolation("the periodic tail must be non-empty")
    check_admissible(rule, prefix + cycle + cycle[:1])
    _, xy = periodic_points(rule, [cycle])
    xy = compose_charts(rule, prefix, xy)
    face = rule.one_tiles[(prefix or cycle)[0]].face
    faces, xy = rule.canonical([face], xy)
    return ModelPoint(int(faces[0]), tuple(xy[0]))


# -- metrics -----------------------------------------------------------------------


def model_distance(rule, face_a, xy_a, face_b, xy_b):
    """Path metric on the doubled polygon.

    Points on the same face are joined by a straight segment; otherwise the
    shortest path crosses one boundary edge, found by reflecting the second
    point across the edge line.  Vectorized over leading dimensions.
    """
    xy_a = np.atleast_2d(np.asarray(xy_a, dtype=float))
    xy_b = np.atleast_2d(np.asarray(xy_b, dtype=float))
    face_a = np.broadcast_to(np.asarray(face_a), xy_a.shape[:1])
    face_b = np.broadcast_to(np.asarray(face_b), xy_b.shape[:1])
    direct = np.linalg.norm(xy_a - xy_b, axis=-1)
    poly = rule.polygon
    m = len(poly)
    cross = np.full(direct.shape, np.inf)
    for k in range(m):
        a, b = poly[k], poly[(k + 1) % m]
        e = b - a
        ee = float(e @ e)
        # reflect xy_b across the edge line
        t = ((xy_b - a) @ e) / ee
        foot = a + t[:, None] * e
        refl = 2 * foot - xy_b
        # crossing of segment xy_a -> refl with the edge line, clamped to the edge
        na = np.array([-e[1], e[0]])
        da = (xy_a - a) @ na
        dr = (refl - a) @ na
        denom = da - dr
        safe = np.where(np.abs(denom) > 1e-300, denom, 1.0)
        s = np.where(np.abs(denom) > 1e-300, da / safe, 0.0)
        hit = xy_a + s[:, None] * (refl - xy_a)
        u = np.clip(((hit - a) @ e) / ee, 0.0, 1.0)
        bp = a + u[:, None] * e
        length = np.linalg.norm(xy_a - bp, axis=1) + np.linalg.norm(bp - xy_b, axis=1)
        cross = np.minimum(cross, length)
    return np.where(face_a == face_b, direct, cross)


def _corner_keys(rule, words):
    out = []
    for w in words:
        face = rule.one_tiles[w[0]].face if w else None
        pts = tile_outline(rule, w) if w else rule.polygon
        faces = np.full(len(pts), 0 if face is None else face)
        faces, pts = rule.canonical(faces, pts)
        out.append(np.column_stack([faces * 8.0, pts]))
    return np.concatenate(out) if out else np.zeros((0, 3))


def _share_corner(rule, words_x, words_y, tol):
    if not words_x or not words_y:
        return False
    if len(words_x[0]) == 0:
        return True
    kx = _corner_keys(rule, words_x)
    ky = _corner_keys(rule, words_y)
    d = np.max(np.abs(kx[:, None, :] - ky[None, :, :]), axis=-1)
    return bool(np.any(d <= tol))


def bouquet_level(rule, x, y, max_level, tol=1e-9):
    """Largest ``m <= max_level`` such that ``y`` lies in the level-``m`` bouquet of ``x``.

    Two tiles meet exactly when they share a corner, so membership is
    decided by comparing the corners of the tiles containing each point.
    """
    best = 0
    for m in range(1, max_level + 1):
        wx = all_addresses(rule, x.face, x.xy, m)
        wy = all_addresses(rule, y.face, y.xy, m)
        if _share_corner(rule, wx, wy, tol):
            best = m
    return best


def visual_distance(rule, x, y, cfg=None):
    """Combinatorial visual distance ``lam ** -m``.

    ``m`` is the deepest level at which ``y`` lies in the bouquet of ``x``.
    This is a quasi-metric: symmetric, with the triangle inequality holding
    up to a bounded factor.
    """
    cfg = cfg or VisualMetricConfig(lam=rule.lam)
    m = bouquet_level(rule, x, y, cfg.max_level)
    return cfg.lam ** (-m)


def _projective(z):
    if z is None or (isinstance(z, complex) and (math.isinf(z.real) or math.isinf(z.imag))):
        return 1.0 + 0j, 0.0 + 0j
    if isinstance(z, float) and math.isinf(z):
        return 1.0 + 0j, 0.0 + 0j
    return complex(z), 1.0 + 0j


def _from_projective(a, b):
    if b == 0:
        return INFINITY
    return a / b


def chordal_distance(z, w):
    """Chordal distance on the Riemann sphere; ``math.inf`` or ``None`` is the point at infinity."""
    a, b = _projective(z)
    c, d = _projective(w)
    num = 2.0 * abs(a * d - b * c)
    den = math.hypot(abs(a), abs(b)) * math.hypot(abs(c), abs(d))
    return num / den


def lattes_eval(z):
    """``4 z (1 - z^2) / (1 + z^2)^2`` on the Riemann sphere.

    Evaluated on the homogeneous pair ``[a : b]`` as
    ``[4ab(b^2 - a^2) : (a^2 + b^2)^2]``, so poles and infinity need no
    special cases.
    """
    a, b = _projective(z)
    num = 4 * a * b * (b * b - a * a)
    den = (a * a + b * b) ** 2
    scale = max(abs(num), abs(den))
    return _from_projective(num / scale, den / scale)


def lattes_preimages(w):
    """Roots of ``4 z (1 - z^2) = w (1 + z^2)^2`` (finite preimages of ``w``)."""
    if w == INFINITY:
        return np.array([1j, 1j, -1j, -1j])
    w = complex(w)
    # w z^4 + 4 z^3 + 2 w z^2 - 4 z + w = 0
    coeffs = [w, 4.0, 2 * w, -4.0, w]
    return np.roots(coeffs)


# -- sampling and distortion -----------------------------------------------------


def random_points_in_polygon(poly, k, rng):
    """Uniform random points in a convex polygon via a triangle fan."""
    poly = np.asarray(poly, dtype=float)
    tri = np.array([[poly[0], poly[i], poly[i + 1]] for i in range(1, len(poly) - 1)])
    u, v = tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]
    areas = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
    pick = rng.choice(len(tri), size=k, p=areas / areas.sum())
    r1, r2 = rng.random(k), rng.random(k)
    flip = r1 + r2 > 1
    r1[flip], r2[flip] = 1 - r1[flip], 1 - r2[flip]
    t = tri[pick]
    return t[:, 0] + r1[:, None] * (t[:, 1] - t[:, 0]) + r2[:, None] * (t[:, 2] - t[:, 0])


def random_words(rule, n, k, rng):
    """``k`` uniformly random admissible words of length ``n`` (uniform over tiles)."""
    from .symbolic import enumerate_words

    words = enumerate_words(rule, n)
    return words[rng.integers(0, len(words), size=k)]


def metric_distortion_check(rule, samples=1000, k=2, n=1, lam=None, seed=0):
    """Empirical distortion of ``f^n`` in the model metric.

    Pairs are drawn inside common level-``(n + k)`` tiles.  ``f^n`` is
    applied through the inverse charts of the known address, so boundary
    ties never matter.  Ratios are ``d(f^n x, f^n y) / (lam^n d(x, y))``.
    """
    lam = rule.lam if lam is None else lam
    rng = np.random.default_rng(seed)
    words = random_words(rule, n + k, samples, rng)
    poly = rule.polygon
    base_a = random_points_in_polygon(poly, samples, rng)
    base_b = random_points_in_polygon(poly, samples, rng)
    ratios = np.empty(samples)
    for i, w in enumerate(words):
        pa = compose_charts(rule, w, base_a[i])
        pb = compose_charts(rule, w, base_b[i])
        fa = compose_charts(rule, w[n:], base_a[i])
        fb = compose_charts(rule, w[n:], base_b[i])
        face0 = rule.one_tiles[w[0]].face
        facen = rule.one_tiles[w[n]].face
        d0 = model_distance(rule, face0, pa, face0, pb)[0]
        dn = model_distance(rule, facen, fa, facen, fb)[0]
        ratios[i] = np.nan if d0 == 0 else dn / (lam**n * d0)
    ratios = ratios[np.isfinite(ratios)]
    lo, med, hi = (float(v) for v in np.percentile(ratios, [0, 50, 100]))
    return {
        "samples": int(len(ratios)),
        "n": n,
        "k": k,
        "lam": lam,
        "min": lo,
        "median": med,
        "max": hi,
        "C0": max(hi, 1.0 / lo),
    }
