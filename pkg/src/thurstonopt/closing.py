"""Gaps of periodic orbits and three ways of closing orbits.

``bq_search`` finds a short cycle near a forward-invariant set,
``local_anosov_close`` turns an almost-closed orbit segment into a genuine
periodic orbit, and ``bound_by_gap`` alternates the two until the orbit's
distance to the set is controlled by its gap.  Closing is always done on
words first and then checked on realized points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import ContractViolation, PreconditionError, SearchFailure, ValidationError
from .geometry import all_addresses, compose_charts, model_distance, random_points_in_polygon
from .subdivision import refine
from .symbolic import (
    POINT_TOL,
    PeriodicOrbit,
    build_transition,
    orbit_from_word,
    periodic_point_from_cycle,
)

__all__ = [
    "GapSpec",
    "PeriodicOrbit",
    "gap",
    "r_theta_gap",
    "bq_search",
    "local_anosov_close",
    "bound_by_gap",
    "uniform_expansion_check",
]


@dataclass(frozen=True)
class GapSpec:
    r: float
    theta: float

    def __post_init__(self):
        if not (self.r > 0 and self.theta > 0):
            raise ValidationError("r and theta must be positive")


def gap(orbit):
    """Minimum distance between distinct points of the orbit; ``inf`` for fixed points."""
    return orbit.gap


def r_theta_gap(orbit, spec):
    return min(spec.r, spec.theta * orbit.gap)


def verify_periodic(orbit):
    """Model distance between each orbit point and its image under ``f^p``."""
    rule = orbit.rule
    faces, pts = orbit.faces.copy(), orbit.points.copy()
    for k in range(orbit.period):
        tiles = np.array([orbit.word[(i + k) % orbit.period] for i in range(orbit.period)])
        faces, pts = rule.forward(faces, pts, tiles)
    return float(np.max(model_distance(rule, faces, pts, orbit.faces, orbit.points)))


# -- distances to tile sets ---------------------------------------------------------


@dataclass(eq=False)
class TileSet:
    """Union of level-``n`` tiles, with outlines for distance queries."""

    rule: object
    level: int
    nodes: np.ndarray
    faces: np.ndarray = field(repr=False)
    outlines: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, graph, nodes, density=3):
        nodes = np.array(sorted(int(v) for v in nodes), dtype=np.int64)
        dec = refine(graph.rule, graph.level, map_action=False)
        outlines = np.array([dec.tile_polygon(int(v), density) for v in nodes])
        return cls(graph.rule, graph.level, nodes, dec.tile_face[nodes], outlines)

    def distance(self, face, xy):
        """Model distance from a point to the union of the tiles."""
        xy = np.asarray(xy, dtype=float)
        on_c = bool(self.rule.on_boundary(xy)[0])
        best = np.inf
        for f, poly in zip(self.faces, self.outlines):
            if (f == face or on_c) and _inside(poly, xy):
                return 0.0
            k = len(poly)
            d = model_distance(self.rule, np.full(k, face), np.repeat(xy[None], k, axis=0), np.full(k, f), poly)
            best = min(best, float(d.min()))
            if f == face:
                a, b = poly, np.roll(poly, -1, axis=0)
                ab = b - a
                t = np.clip(np.einsum("ij,ij->i", xy - a, ab) / np.einsum("ij,ij->i", ab, ab), 0, 1)
                best = min(best, float(np.min(np.linalg.norm(a + t[:, None] * ab - xy, axis=1))))
        return best


def _inside(poly, p, tol=1e-12):
    """Point in polygon (counterclockwise, not necessarily convex)."""
    x, y = p
    inside = False
    n = len(poly)
    for i in range(n):
        (x1, y1), (x2, y2) = poly[i], poly[(i + 1) % n]
        # on the boundary counts as inside
        cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
        if abs(cross) <= tol and min(x1, x2) - tol <= x <= max(x1, x2) + tol and min(y1, y2) - tol <= y <= max(y1, y2) + tol:
            return True
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xc > x:
                inside = not inside
    return inside


def distance_to_set(orbit, tiles):
    """``d(x, K)`` for every orbit point, with ``K`` the union of the tiles."""
    return np.array([tiles.distance(int(f), p) for f, p in zip(orbit.faces, orbit.points)])


def _tile_discs(graph):
    dec = refine(graph.rule, graph.level, map_action=False)
    corners = dec.tile_corners
    centre = corners.mean(axis=1)
    radius = np.linalg.norm(corners - centre[:, None, :], axis=-1).max(axis=1)
    return dec.tile_face, centre, radius


def neighbourhood_nodes(graph, nodes, epsilon):
    """Nodes whose tiles may meet the ``epsilon``-neighbourhood of the tiles of ``nodes``.

    Uses enclosing discs, so the result contains every node whose tile
    truly meets the neighbourhood.
    """
    faces, centre, radius = _tile_discs(graph)
    nodes = np.array(sorted(nodes), dtype=np.int64)
    keep = np.zeros(graph.n_nodes, dtype=bool)
    keep[nodes] = True
    for v in nodes:
        d = model_distance(graph.rule, faces, centre, np.full(graph.n_nodes, faces[v]),
                           np.repeat(centre[v][None], graph.n_nodes, axis=0))
        keep |= d <= epsilon + radius + radius[v]
    return np.nonzero(keep)[0]


def max_tile_diameter(graph):
    dec = refine(graph.rule, graph.level, map_action=False)
    c = dec.tile_corners
    return float(np.linalg.norm(c[:, :, None, :] - c[:, None, :, :], axis=-1).max())


# -- shortest cycles ------------------------------------------------------------------


def shortest_cycle(graph, nodes, arc_mask=None):
    """Shortest closed walk inside the subgraph induced by ``nodes``.

    ``arc_mask`` optionally restricts the arcs (aligned with ``graph.arcs``).

    Ties go to the lexicographically least node sequence (rotated to start
    at its smallest node).  Returns ``None`` when the subgraph is acyclic.
    """
    nodes = np.array(sorted(int(v) for v in nodes), dtype=np.int64)
    if not len(nodes):
        return None
    local = -np.ones(graph.n_nodes, dtype=np.int64)
    local[nodes] = np.arange(len(nodes))
    src, dst = graph.arcs
    sel = (local[src] >= 0) & (local[dst] >= 0)
    if arc_mask is not None:
        sel &= np.asarray(arc_mask, dtype=bool)
    a, b = local[src[sel]], local[dst[sel]]
    if not len(a):
        return None
    k = len(nodes)
    adj = csr_matrix((np.ones(len(a)), (a, b)), shape=(k, k))
    dist, pred = shortest_path(adj, unweighted=True, directed=True, return_predecessors=True)
    # closing arc u -> v plus a shortest path v ~> u
    lengths = dist[b, a] + 1
    finite = np.isfinite(lengths)
    if not finite.any():
        return None
    best = lengths[finite].min()
    candidates = []
    for u, v in zip(a[finite & (lengths == best)], b[finite & (lengths == best)]):
        path = [int(u)]
        x = int(u)
        while x != v:
            x = int(pred[v, x])
            path.append(x)
        cyc = [int(nodes[i]) for i in reversed(path)]
        j = cyc.index(min(cyc))
        candidates.append(cyc[j:] + cyc[:j])
    return min(candidates)


@dataclass
class BqResult:
    orbit: PeriodicOrbit
    cycle: list
    epsilon: float
    kappa: float
    bound: float
    inside_k: bool
    diameter_ok: bool
    max_tile_diameter: float

    def to_json(self):
        return {
            "period": self.orbit.period,
            "cycle_length": len(self.cycle),
            "word": list(self.orbit.word),
            "epsilon": self.epsilon,
            "kappa": self.kappa,
            "bound": self.bound,
            "inside_K": self.inside_k,
            "diameter_ok": self.diameter_ok,
            "max_tile_diameter": self.max_tile_diameter,
        }


def bq_search(graph, k_nodes, kappa=2.0, epsilon=0.1, arc_mask=None):
    """Short periodic orbit inside the ``epsilon``-neighbourhood of ``K``.

    ``K`` is given by cylinder nodes.  The shortest cycle inside ``K``
    itself is tried first, then the shortest cycle through nodes whose
    tiles may meet the neighbourhood.  The period must stay below
    ``(1/epsilon)^kappa``.  ``diameter_ok`` reports whether tiles at this
    level are smaller than ``epsilon/2``.  ``arc_mask`` restricts the
    search inside ``K`` to the given arcs (for instance the arcs where the
    normalized potential vanishes).
    """
    k_nodes = sorted(int(v) for v in k_nodes)
    if not k_nodes:
        raise ContractViolation("K is empty")
    if not 0 < epsilon < 1:
        raise ContractViolation("epsilon must lie in (0, 1)")
    bound = (1.0 / epsilon) ** kappa
    diam = max_tile_diameter(graph)
    cycle = shortest_cycle(graph, k_nodes, arc_mask)
    inside = cycle is not None
    if cycle is None:
        cycle = shortest_cycle(graph, neighbourhood_nodes(graph, k_nodes, epsilon))
    if cycle is None:
        raise SearchFailure("no cycle near K", best=None)
    orbit = periodic_point_from_cycle(graph, cycle)
    if not len(cycle) < bound:
        raise SearchFailure(f"shortest cycle has length {len(cycle)} >= {bound:.1f}", best=orbit)
    return BqResult(orbit, cycle, epsilon, kappa, bound, inside, diam < epsilon / 2, diam)


# -- local closing --------------------------------------------------------------------


def critical_distance(rule, faces, xy):
    """Model distance from each point to the nearest critical vertex."""
    cf, cxy = rule.critical_points()
    xy = np.atleast_2d(xy)
    faces = np.broadcast_to(np.asarray(faces), xy.shape[:1])
    best = np.full(len(xy), np.inf)
    for f, c in zip(cf, cxy):
        d = model_distance(rule, faces, xy, np.full(len(xy), f), np.repeat(c[None], len(xy), axis=0))
        best = np.minimum(best, d)
    return best


@dataclass
class ShadowReport:
    orbit: PeriodicOrbit
    closed_word: tuple
    repaired: int
    distances: np.ndarray = field(repr=False)
    slope: float = math.nan
    beta_hat: float = math.nan
    delta: float = math.nan

    def to_json(self):
        return {
            "period": self.orbit.period,
            "length": len(self.closed_word),
            "word": list(self.closed_word),
            "repaired_symbols": self.repaired,
            "shadow_distances": self.distances.tolist(),
            "slope": self.slope,
            "beta_hat": self.beta_hat,
            "delta": self.delta,
        }


def _repair(rule, w, x_face, x_xy):
    """Closed admissible word agreeing with ``w`` on a maximal suffix.

    The shortest prefix is replaced; among replacements the one whose
    periodic point lies nearest ``x`` wins, ties broken lexicographically.
    """
    A = build_transition(rule)
    l = len(w)
    if A.entries[w[-1], w[0]]:
        return tuple(w), 0
    for j in range(1, l + 1):
        suffix = list(w[j:])
        # all admissible prefixes of length j that close with the suffix
        options = [[]]
        for pos in range(j):
            nxt = []
            for pre in options:
                prev = pre[-1] if pre else (suffix[-1] if suffix else None)
                for s in range(A.size):
                    if prev is not None and not A.entries[prev, s]:
                        continue
                    nxt.append(pre + [s])
            options = nxt
            if len(options) > 50_000:
                break
        good = []
        for pre in options:
            cand = pre + suffix
            ok = all(A.entries[a, b] for a, b in zip(cand, cand[1:] + cand[:1]))
            if ok:
                good.append(tuple(cand))
        if good:
            scored = []
            for cand in good:
                o = orbit_from_word(rule, cand)
                d = float(model_distance(rule, x_face, x_xy[None], o.faces[0], o.points[0][None])[0])
                scored.append((d, cand))
            scored.sort()
            return scored[0][1], j
    raise SearchFailure("no admissible closure of the segment")


def local_anosov_close(rule, word, l, eta=1e-3, delta=None, base=None, lam=None):
    """Close the first ``l`` symbols of an orbit segment into a periodic orbit.

    ``word`` is the itinerary of the pseudo-orbit point ``x`` (``l`` symbols
    plus context); ``x`` is realized as the image of ``base`` (default the
    0-tile centroid) under the word's charts.  The segment is repaired on a
    shortest prefix so that it closes, realized as ``y = pi(w^inf)`` and the
    shadow distances ``d(f^i x, f^i y)`` for ``0 <= i < l`` are fitted
    against ``lam^-(l - i)``.
    """
    word = [int(s) for s in word]
    if not 1 <= l <= len(word):
        raise ContractViolation("need 1 <= l <= len(word)")
    lam = rule.lam if lam is None else lam
    A = build_transition(rule)
    for a, b in zip(word, word[1:]):
        if not A.entries[a, b]:
            raise ContractViolation("pseudo-orbit word is not admissible")
    base = rule.polygon.mean(axis=0) if base is None else np.asarray(base, float)
    face_of = A.face
    xs = np.array([compose_charts(rule, word[i:], base) for i in range(l + 1)])
    faces = np.append(face_of[word], A.image[word[-1]])[: l + 1]
    xf, xs = rule.canonical(faces, xs)
    cd = critical_distance(rule, xf[:l], xs[:l])
    if cd.min() < eta:
        raise PreconditionError(
            f"pseudo-orbit passes within {cd.min():.2e} of a critical vertex (eta = {eta})"
        )
    gap0 = float(model_distance(rule, xf[0], xs[0][None], xf[l], xs[l][None])[0])
    delta = gap0 if delta is None else delta
    if gap0 > delta:
        raise PreconditionError(f"d(x, f^l x) = {gap0:.3e} exceeds delta = {delta:.3e}")
    closed, repaired = _repair(rule, word[:l], int(xf[0]), xs[0])
    orbit = orbit_from_word(rule, closed)
    # y_i is the periodic point of rotation i of the closed word
    ys = np.array([orbit.points[i % orbit.period] for i in range(l)])
    yf = np.array([orbit.faces[i % orbit.period] for i in range(l)])
    d = model_distance(rule, xf[:l], xs[:l], yf, ys)
    steps = l - np.arange(l)
    ok = d > 1e-300
    slope = math.nan
    if ok.sum() >= 2:
        slope = float(np.polyfit(steps[ok], np.log(d[ok]), 1)[0])
    scale = max(delta, 1e-300)
    beta = float(np.max(d / (scale * lam ** (-steps.astype(float)))))
    return ShadowReport(orbit, closed, repaired, d, slope, beta, delta)


# -- gap-bounded construction -----------------------------------------------------------


@dataclass
class GapResult:
    orbit: PeriodicOrbit
    lhs: float
    rhs: float
    steps: int
    trace: list
    critical_overlap: list = field(default_factory=list)

    @property
    def verified(self):
        return self.lhs <= self.rhs

    def to_json(self):
        return {
            "period": self.orbit.period,
            "word": list(self.orbit.word),
            "gap": None if math.isinf(self.orbit.gap) else self.orbit.gap,
            "sum_distance": self.lhs,
            "bound": self.rhs,
            "steps": self.steps,
            "recursion_trace": self.trace,
            "critical_overlap": self.critical_overlap,
        }


def critical_nodes(graph):
    """Nodes whose tiles contain a critical vertex."""
    rule = graph.rule
    out = set()
    for f, xy in zip(*rule.critical_points()):
        words = all_addresses(rule, int(f), xy, graph.level, tol=1e-9)
        if words:
            out.update(int(v) for v in graph.index(np.array(words)))
    return out


def closest_return(orbit):
    """``(j, n)`` with ``d(f^j x, f^{j+n} x)`` equal to the gap, ``n <= p/2``, least ``j``."""
    p = orbit.period
    best = (math.inf, 0, 0)
    for j in range(p):
        for n in range(1, p // 2 + 1):
            k = (j + n) % p
            d = float(model_distance(orbit.rule, orbit.faces[j], orbit.points[j][None],
                                     orbit.faces[k], orbit.points[k][None])[0])
            if POINT_TOL < d < best[0] - 1e-15:
                best = (d, j, n)
    return best[1], best[2]


def bound_by_gap(graph, k_nodes, r=1.0, theta=1.0, alpha=1.0, tau=1.0, epsilon=0.1, kappa=2.0,
                 arc_mask=None, start=None):
    """Periodic orbit ``O`` near ``K`` with ``sum d(x, K)^alpha <= tau * gap_{r,theta}(O)^alpha``.

    Starts from :func:`bq_search`; while the inequality fails, the closest
    return ``x, f^n x`` (``n <= p/2``) is closed into a new orbit of period
    dividing ``n``, which at least halves the period.  ``d(x, K)`` is the
    distance to the union of the tiles of ``K``.  Nodes of ``K`` whose tiles
    contain a critical vertex are reported in ``critical_overlap``.
    ``start`` replaces the initial search by a given orbit.
    """
    spec = GapSpec(r, theta)
    tiles = TileSet.build(graph, k_nodes)
    orbit = bq_search(graph, k_nodes, kappa, epsilon, arc_mask).orbit if start is None else start
    touches = critical_nodes(graph) & set(int(v) for v in k_nodes)
    p0 = orbit.period
    limit = math.log2(p0) + 2 if p0 > 1 else 2
    trace = []
    steps = 0
    while True:
        lhs = float(np.sum(distance_to_set(orbit, tiles) ** alpha))
        rhs = tau * r_theta_gap(orbit, spec) ** alpha
        trace.append({"period": orbit.period, "word": list(orbit.word), "lhs": lhs, "rhs": rhs})
        if lhs <= rhs:
            return GapResult(orbit, lhs, rhs, steps, trace, sorted(touches))
        steps += 1
        if steps > limit:
            raise SearchFailure(f"gap recursion exceeded {limit:.1f} steps; trace {trace}", best=orbit)
        j, n = closest_return(orbit)
        rot = orbit.word[j:] + orbit.word[:j]
        context = list(rot) * 3
        report = local_anosov_close(graph.rule, context, n, eta=0.0, delta=math.inf)
        orbit = report.orbit


# -- expansion check ----------------------------------------------------------------------


def uniform_expansion_check(rule, samples=1000, eta=0.05, n=2, k=3, seed=0, lam=None):
    """Empirical ``C_2`` in ``C_2 lam^n d <= d(f^n x, f^n y) <= lam^n d / C_2``.

    Pairs are drawn in common level-``(n + k)`` tiles; pairs whose first
    ``n`` iterates come within ``eta`` of a critical vertex are skipped.
    """
    from .symbolic import enumerate_words

    lam = rule.lam if lam is None else lam
    rng = np.random.default_rng(seed)
    words = enumerate_words(rule, n + k)
    pick = words[rng.integers(0, len(words), samples)]
    base_a = random_points_in_polygon(rule.polygon, samples, rng)
    base_b = random_points_in_polygon(rule.polygon, samples, rng)
    A = build_transition(rule)
    ratios = []
    skipped = 0
    for w, a, b in zip(pick, base_a, base_b):
        xa = np.array([compose_charts(rule, w[i:], a) for i in range(n + 1)])
        xb = np.array([compose_charts(rule, w[i:], b) for i in range(n + 1)])
        faces = A.face[w[: n + 1]]
        near = min(critical_distance(rule, faces, xa).min(), critical_distance(rule, faces, xb).min())
        if near < eta:
            skipped += 1
            continue
        d0 = float(model_distance(rule, faces[0], xa[0][None], faces[0], xb[0][None])[0])
        dn = float(model_distance(rule, faces[n], xa[n][None], faces[n], xb[n][None])[0])
        if d0 > 0:
            ratios.append(dn / (lam**n * d0))
    ratios = np.array(ratios)
    if not len(ratios):
        return {"samples": 0, "skipped": skipped}
    return {
        "samples": int(len(ratios)),
        "skipped": skipped,
        "n": n,
        "min": float(ratios.min()),
        "median": float(np.median(ratios)),
        "max": float(ratios.max()),
        "C2": float(min(ratios.min(), 1.0 / ratios.max())),
    }
