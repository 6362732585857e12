"""Potentials: closed forms on the model sphere and per-cylinder tables."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, ValidationError
from .geometry import compose_charts, model_distance, random_points_in_polygon
from .subdivision import refine
from .symbolic import (
    PeriodicOrbit,
    build_transition,
    cylinder_graph,
    enumerate_words,
    representative_points,
    word_codes,
)


@dataclass(eq=False)
class Potential:
    """A real function on the sphere.

    A closed form carries ``func(faces, xy) -> values``, vectorized over
    points.  A table carries one value per admissible word of length
    ``level`` in lexicographic order.
    """

    kind: str
    alpha: float = 1.0
    func: object = field(default=None, repr=False)
    values: np.ndarray | None = field(default=None, repr=False)
    level: int | None = None
    rule: object = field(default=None, repr=False)
    name: str = ""
    orbit: PeriodicOrbit | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("closed_form", "table"):
            raise ValidationError(f"unknown potential kind {self.kind!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValidationError(f"Hoelder exponent must lie in (0, 1], got {self.alpha}")
        if self.kind == "table":
            self.values = np.asarray(self.values, dtype=float)
            expected = len(enumerate_words(self.rule, self.level))
            if self.values.shape != (expected,):
                raise ValidationError(f"table has {self.values.shape} entries, expected {expected}")
            if not np.all(np.isfinite(self.values)):
                raise ValidationError("table values must be finite")

    @classmethod
    def closed_form(cls, func, alpha=1.0, name=""):
        return cls("closed_form", alpha=alpha, func=func, name=name)

    @classmethod
    def table(cls, rule, level, values, alpha=1.0, name=""):
        return cls("table", alpha=alpha, values=values, level=level, rule=rule, name=name)

    def __call__(self, faces, xy):
        if self.kind != "closed_form":
            raise ContractViolation("tables are evaluated by word, not by point")
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        faces = np.broadcast_to(np.asarray(faces, dtype=int), xy.shape[:1])
        return np.asarray(self.func(faces, xy), dtype=float).reshape(len(xy))

    def value_range(self):
        if self.kind == "table":
            return float(self.values.max() - self.values.min())
        raise ContractViolation("range of a closed form needs a discretization")

    def scaled(self, c):
        if self.kind == "table":
            return Potential.table(self.rule, self.level, c * self.values, self.alpha, self.name)
        f = self.func
        return Potential.closed_form(lambda fa, xy: c * f(fa, xy), self.alpha, self.name)

    def __add__(self, other):
        if self.kind == other.kind == "table":
            if self.level != other.level or self.rule is not other.rule:
                raise ContractViolation("tables live at different levels")
            return Potential.table(self.rule, self.level, self.values + other.values,
                                   min(self.alpha, other.alpha))
        if self.kind == other.kind == "closed_form":
            f, g = self.func, other.func
            return Potential.closed_form(lambda fa, xy: f(fa, xy) + g(fa, xy), min(self.alpha, other.alpha))
        raise ContractViolation("discretize the closed form before mixing it with a table")

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    def to_json(self):
        if self.kind != "table":
            raise ContractViolation("only tables serialize")
        words = enumerate_words(self.rule, self.level)
        return {
            "version": 1,
            "rule": self.rule.name,
            "level": self.level,
            "alpha": self.alpha,
            "values": {" ".join(map(str, w)): float(v) for w, v in zip(words, self.values)},
        }


def table_from_json(rule, data):
    words = enumerate_words(rule, int(data["level"]))
    keys = [" ".join(map(str, w)) for w in words]
    try:
        values = [float(data["values"][k]) for k in keys]
    except KeyError as exc:
        raise ValidationError(f"table is missing word {exc.args[0]}") from None
    return Potential.table(rule, int(data["level"]), values, float(data.get("alpha", 1.0)))


def load_table(rule, path):
    with open(path, encoding="utf-8") as fh:
        return table_from_json(rule, json.load(fh))


# -- discretization ---------------------------------------------------------------


def discretize(p, rule, n, representative="center"):
    """Level-``n`` table of a potential.

    Closed forms are evaluated at one point inside each cylinder, by
    default the image of the 0-tile centroid (see
    :func:`representative_points`).  A table at a coarser level is
    lifted by prefixes; at its own level it is returned unchanged.
    """
    if n < 1:
        raise ContractViolation("level must be >= 1")
    if p.kind == "table":
        if p.rule is not rule:
            raise ContractViolation("table belongs to a different rule")
        if p.level == n:
            return p
        if p.level > n:
            raise ContractViolation(f"cannot coarsen a level-{p.level} table to level {n}")
        words = enumerate_words(rule, n)
        base = enumerate_words(rule, p.level)
        S = build_transition(rule).size
        idx = np.searchsorted(word_codes(base, S), word_codes(words[:, : p.level], S))
        return Potential.table(rule, n, p.values[idx], p.alpha, p.name)
    words = enumerate_words(rule, n)
    faces, xy = representative_points(rule, words, representative)
    values = p(faces, xy)
    if p.orbit is not None:
        values = np.where(_orbit_cylinders(rule, p.orbit, n, len(words)), 0.0, values)
    return Potential.table(rule, n, values, p.alpha, p.name)


def _orbit_cylinders(rule, orbit, n, size):
    """Mask of the level-``n`` cylinders read along the orbit's own itinerary."""
    mask = np.zeros(size, dtype=bool)
    mask[orbit.nodes(cylinder_graph(rule, n))] = True
    return mask


def tile_diameter(rule, n):
    """Largest model diameter over level-``n`` tiles (corner-based)."""
    dec = refine(rule, n, map_action=False)
    c = dec.tile_corners
    d = np.linalg.norm(c[:, :, None, :] - c[:, None, :, :], axis=-1)
    return float(d.max())


# -- Birkhoff sums -------------------------------------------------------------------


def birkhoff_sum(p, w, n_terms, rule=None):
    """``S_n p`` along the shift orbit of a word or around a periodic orbit.

    For tables the word must be long enough to read ``n_terms`` windows
    of length ``level``.  For closed forms the point coded by the word is
    realized from its cylinder (or taken from the orbit) and the shifted
    words give its forward iterates.
    """
    if n_terms < 0:
        raise ContractViolation("n_terms must be >= 0")
    if n_terms == 0:
        return 0.0
    if isinstance(w, PeriodicOrbit):
        word = list(w.word)
        reps = -(-(n_terms + (p.level or 0)) // len(word)) + 1
        long = np.array(word * reps)
        if p.kind == "closed_form":
            idx = np.arange(n_terms) % w.period
            return math.fsum(p(w.faces[idx], w.points[idx]))
        return _table_sum(p, long, n_terms)
    w = np.asarray(w, dtype=np.int64)
    if p.kind == "table":
        return _table_sum(p, w, n_terms)
    if rule is None:
        raise ContractViolation("closed-form sums need the rule")
    if len(w) < n_terms:
        raise ContractViolation(f"word of length {len(w)} is too short for {n_terms} terms")
    centre = rule.polygon.mean(axis=0)
    faces = np.array([rule.one_tiles[int(s)].face for s in w[:n_terms]])
    pts = np.array([compose_charts(rule, w[i:], centre) for i in range(n_terms)])
    return math.fsum(p(faces, pts))


def _table_sum(p, w, n_terms):
    n = p.level
    if len(w) < n_terms + n - 1:
        raise ContractViolation(f"need a word of length {n_terms + n - 1}, got {len(w)}")
    graph = cylinder_graph(p.rule, n)
    windows = np.array([w[i:i + n] for i in range(n_terms)])
    return math.fsum(p.values[graph.index(windows)])


# -- Hoelder estimates ---------------------------------------------------------------


@dataclass
class HolderEstimate:
    """Lower bound on a Hoelder seminorm from sampled pairs."""

    alpha: float
    seminorm_est: float
    metric: str
    pairs: int
    lower_bound: bool = True


def adjacent_pairs(rule, n):
    """Pairs ``(i, j)``, ``i < j``, of level-``n`` tiles sharing at least a vertex."""
    dec = refine(rule, n, map_action=False)
    pairs = set()
    for tiles in dec.vertex_tiles:
        t = np.asarray(tiles)
        i, j = np.triu_indices(len(t), 1)
        pairs.update(zip(t[i].tolist(), t[j].tolist()))
    return np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)


def pair_distances(rule, n, pairs, metric="model"):
    words = enumerate_words(rule, n)
    if metric == "model":
        faces, xy = representative_points(rule, words)
        return model_distance(rule, faces[pairs[:, 0]], xy[pairs[:, 0]], faces[pairs[:, 1]], xy[pairs[:, 1]])
    if metric == "symbolic":
        a, b = words[pairs[:, 0]], words[pairs[:, 1]]
        diff = a != b
        first = np.where(diff.any(axis=1), diff.argmax(axis=1), n)
        return rule.lam ** (-first.astype(float))
    raise ValidationError(f"unknown metric {metric!r}")


def holder_seminorm_estimate(p, alpha=None, metric="model"):
    """Max of ``|p(v) - p(w)| / d(v, w)^alpha`` over touching cylinders.

    ``d`` is the distance between cylinder representatives (``model``) or
    ``lam^-N`` with ``N`` the first differing symbol (``symbolic``).  Pairs
    whose representatives coincide are skipped.  The result only bounds
    the true seminorm from below.
    """
    if p.kind != "table":
        raise ContractViolation("estimate needs a table")
    alpha = p.alpha if alpha is None else alpha
    pairs = adjacent_pairs(p.rule, p.level)
    d = pair_distances(p.rule, p.level, pairs, metric)
    keep = d > 1e-12
    diff = np.abs(p.values[pairs[keep, 0]] - p.values[pairs[keep, 1]])
    est = float(np.max(diff / d[keep] ** alpha)) if keep.any() else 0.0
    return HolderEstimate(alpha=alpha, seminorm_est=est, metric=metric, pairs=int(keep.sum()))


def variation_bound_check(p, rule, n, m, samples=500, seed=0):
    """Empirical constant in ``|S_n p(x) - S_n p(y)| <= C d(f^n x, f^n y)^alpha``.

    Pairs are drawn inside common level-``m`` tiles (``m >= n``); Birkhoff
    sums and images use the known address, so no point location is needed.
    """
    if m < n:
        raise ContractViolation("need m >= n")
    if p.kind != "closed_form":
        raise ContractViolation("variation check needs a closed form")
    rng = np.random.default_rng(seed)
    words = enumerate_words(rule, m)
    pick = words[rng.integers(0, len(words), samples)]
    base_a = random_points_in_polygon(rule.polygon, samples, rng)
    base_b = random_points_in_polygon(rule.polygon, samples, rng)
    face_of = np.array([t.face for t in rule.one_tiles])
    ratios = []
    for w, a, b in zip(pick, base_a, base_b):
        xa = np.array([compose_charts(rule, w[i:], a) for i in range(n + 1)])
        xb = np.array([compose_charts(rule, w[i:], b) for i in range(n + 1)])
        faces = np.append(face_of[w[:n]], face_of[w[n]] if n < len(w) else 0)
        sa = math.fsum(p(faces[:n], xa[:n]))
        sb = math.fsum(p(faces[:n], xb[:n]))
        d = float(model_distance(rule, faces[n], xa[n], faces[n], xb[n])[0])
        if d > 1e-14:
            ratios.append(abs(sa - sb) / d**p.alpha)
    ratios = np.array(ratios)
    return {
        "n": n,
        "m": m,
        "samples": int(len(ratios)),
        "C_hat": float(ratios.max()) if len(ratios) else 0.0,
        "median": float(np.median(ratios)) if len(ratios) else 0.0,
    }


# -- families ---------------------------------------------------------------------


def distance_potential(orbit, alpha=1.0, metric="model"):
    """``x -> d(x, O)^alpha`` for a realized periodic orbit.

    Discretizing it gives exactly 0 on the cylinders along the orbit's
    itinerary.  Other cylinders whose tiles touch an orbit point (a point
    on a tile boundary has several codings) keep their sampled value, so
    the perturbed maximizing cycle stays unique.
    """
    if metric != "model":
        raise ValidationError("distance potentials use the model metric")
    rule = orbit.rule

    def func(faces, xy):
        k = len(xy)
        best = np.full(k, np.inf)
        for f, pt in zip(orbit.faces, orbit.points):
            d = model_distance(rule, faces, xy, np.full(k, f), np.repeat(pt[None], k, axis=0))
            best = np.minimum(best, d)
        return best**alpha

    pot = Potential.closed_form(func, alpha=alpha, name=f"dist^{alpha}(O)")
    pot.orbit = orbit
    return pot


def constant(c):
    return Potential.closed_form(lambda faces, xy: np.full(len(xy), float(c)), name=f"const:{c}")


def coordinate(axis="x"):
    k = {"x": 0, "y": 1}[axis]
    return Potential.closed_form(lambda faces, xy: xy[:, k].copy(), name=f"coord:{axis}")


def _interior_bump(rule):
    """Smooth function on the polygon vanishing on its boundary, max about 1."""
    poly = rule.polygon
    m = len(poly)
    centre = poly.mean(axis=0)

    def bump(xy):
        out = np.ones(len(xy))
        for k in range(m):
            a, b = poly[k], poly[(k + 1) % m]
            nrm = np.array([b[1] - a[1], a[0] - b[0]])
            nrm /= np.linalg.norm(nrm)
            ref = abs(float((centre - a) @ nrm))
            out *= np.abs((xy - a) @ nrm) / ref
        return out

    return bump


def random_smooth(rule, rng, modes=3, name="smooth"):
    """Random trigonometric polynomial plus a face-odd interior bump.

    The trigonometric part ignores the face and the bump vanishes on the
    boundary curve, so the function is continuous on the sphere.
    """
    k = rng.integers(-modes, modes + 1, size=(modes, 2))
    phase = rng.uniform(0, 2 * np.pi, modes)
    amp = rng.normal(size=modes) / (1.0 + np.abs(k).sum(axis=1))
    c_face = rng.normal()
    bump = _interior_bump(rule)

    def func(faces, xy):
        arg = 2 * np.pi * xy @ k.T + phase
        s = np.where(faces == 0, 1.0, -1.0)
        return np.cos(arg) @ amp + 0.5 * c_face * s * bump(xy)

    return Potential.closed_form(func, alpha=1.0, name=name)


def random_holder(rule, rng, alpha=0.5, bumps=5, name="holder"):
    """Sum of cusps ``a_j * d(x, c_j)^alpha`` around random centres."""
    faces_c = rng.integers(0, 2, bumps)
    centres = random_points_in_polygon(rule.polygon, bumps, rng)
    amp = rng.normal(size=bumps)

    def func(faces, xy):
        out = np.zeros(len(xy))
        for f, c, a in zip(faces_c, centres, amp):
            d = model_distance(rule, faces, xy, np.full(len(xy), f), np.repeat(c[None], len(xy), axis=0))
            out += a * d**alpha
        return out

    return Potential.closed_form(func, alpha=alpha, name=name)


def parse_potential(spec, rule, level=None):
    """Potential from a CLI spec.

    ``const:C``, ``coord:x``/``coord:y``, ``smooth:SEED``,
    ``holder:SEED[:ALPHA]`` or ``table:PATH``.
    """
    kind, _, arg = spec.partition(":")
    try:
        if kind == "const":
            return constant(float(arg))
        if kind == "coord":
            return coordinate(arg or "x")
        if kind == "smooth":
            return random_smooth(rule, np.random.default_rng(int(arg or 0)), name=spec)
        if kind == "holder":
            seed, _, a = arg.partition(":")
            return random_holder(rule, np.random.default_rng(int(seed or 0)), float(a or 0.5), name=spec)
        if kind == "table":
            return load_table(rule, arg)
    except (ValueError, KeyError) as exc:
        raise ValidationError(f"bad potential spec {spec!r}: {exc}") from None
    raise ValidationError(f"unknown potential family {kind!r}")
