"""The tile subshift: transition matrix, admissible words and the cylinder graph.

A word ``X_0 ... X_{n-1}`` is admissible when ``X_{i+1}`` lies in the
0-tile that ``X_i`` maps onto.  Words are always listed in lexicographic
order of symbol ids, which is also the tile order used by ``refine``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ContractViolation, ResourceError, ValidationError
from .geometry import compose_charts, model_distance, periodic_points
from .subdivision import DEFAULT_BUDGET

POINT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """0/1 matrix with ``A[X, X'] = 1`` iff ``f(X)`` contains ``X'``."""

    states: tuple
    entries: np.ndarray
    face: np.ndarray
    image: np.ndarray
    degree: int

    @property
    def size(self):
        return len(self.states)

    @property
    def row_sums(self):
        return self.entries.sum(axis=1)

    @property
    def column_sums(self):
        return self.entries.sum(axis=0)

    def successors(self, s):
        return np.nonzero(self.entries[s])[0]

    def trace_power(self, n):
        """Number of closed admissible walks of length ``n``."""
        return int(np.trace(np.linalg.matrix_power(self.entries.astype(np.int64), n)))

    def to_json(self):
        return {
            "version": 1,
            "states": list(self.states),
            "adjacency": {int(s): [int(t) for t in self.successors(s)] for s in self.states},
        }


def build_transition(rule):
    """Transition matrix of the tile subshift.

    Every 1-tile must be covered exactly ``deg f`` times, i.e. every column
    sums to the degree.  Row sums equal the number of 1-tiles in the image
    0-tile, which need not be the degree when the two 0-tiles are
    subdivided differently.
    """
    face = np.array([t.face for t in rule.one_tiles])
    image = np.array([t.image for t in rule.one_tiles])
    entries = (image[:, None] == face[None, :]).astype(np.int8)
    A = TransitionMatrix(
        states=tuple(range(rule.n_symbols)),
        entries=entries,
        face=face,
        image=image,
        degree=rule.degree,
    )
    bad = np.nonzero(A.column_sums != rule.degree)[0]
    if len(bad):
        raise ValidationError(
            f"{rule.name}: 1-tiles {bad.tolist()} are covered {A.column_sums[bad].tolist()} times, "
            f"expected {rule.degree}"
        )
    return A


def _as_matrix(rule_or_A):
    return rule_or_A if isinstance(rule_or_A, TransitionMatrix) else build_transition(rule_or_A)


def count_words(rule_or_A, n):
    A = _as_matrix(rule_or_A)
    if n == 0:
        return 1
    return int(np.ones(A.size, dtype=np.int64) @ np.linalg.matrix_power(A.entries.astype(np.int64), n - 1).sum(axis=1))


def enumerate_words(rule_or_A, n, budget=DEFAULT_BUDGET):
    """All admissible words of length ``n`` as a (N, n) array in lexicographic order."""
    A = _as_matrix(rule_or_A)
    if n < 1:
        raise ContractViolation("word length must be >= 1")
    total = count_words(A, n)
    if total > budget:
        raise ResourceError(f"{total} words of length {n} exceed the budget {budget}")
    succ = [A.successors(s) for s in range(A.size)]
    outdeg = A.row_sums
    words = np.arange(A.size, dtype=np.int64)[:, None]
    for _ in range(n - 1):
        last = words[:, -1]
        reps = outdeg[last]
        ext = np.concatenate([succ[s] for s in last]) if len(last) else np.zeros(0, dtype=np.int64)
        words = np.column_stack([np.repeat(words, reps, axis=0), ext])
    return words


def word_codes(words, base):
    words = np.atleast_2d(words)
    codes = np.zeros(len(words), dtype=np.int64)
    for j in range(words.shape[1]):
        codes = codes * base + words[:, j]
    return codes


class CylinderGraph:
    """Graph of level-``n`` cylinders under the shift.

    Nodes are the admissible words of length ``n`` in lexicographic order;
    there is an arc ``w -> w'`` when ``w'`` extends ``shift(w)`` by one
    symbol.  Every node has exactly ``deg f`` predecessors ``a . w[:-1]``.
    """

    def __init__(self, rule, n, budget=DEFAULT_BUDGET):
        self.rule = rule
        self.level = int(n)
        self.A = build_transition(rule)
        self.words = enumerate_words(self.A, n, budget)
        self.codes = word_codes(self.words, self.A.size)

    @property
    def n_nodes(self):
        return len(self.words)

    def index(self, words):
        """Node ids of words (rows); raises for inadmissible words."""
        words = np.atleast_2d(np.asarray(words, dtype=np.int64))
        codes = word_codes(words, self.A.size)
        idx = np.searchsorted(self.codes, codes)
        idx = np.minimum(idx, self.n_nodes - 1)
        if not np.all(self.codes[idx] == codes):
            raise ContractViolation("word is not an admissible node of this graph")
        return idx

    @cached_property
    def pred(self):
        """(N, deg) array: ``pred[w, j]`` is the j-th predecessor of node ``w``."""
        A = self.A
        first = self.words[:, 0]
        # predecessor symbols a with image(a) == face(first symbol)
        by_face = {f: np.nonzero(A.image == f)[0] for f in (0, 1)}
        deg = A.degree
        out = np.empty((self.n_nodes, deg), dtype=np.int64)
        head = self.words[:, :-1]
        for f, syms in by_face.items():
            rows = np.nonzero(A.face[first] == f)[0]
            if not len(rows):
                continue
            for j, a in enumerate(syms):
                cand = np.column_stack([np.full(len(rows), a), head[rows]])
                out[rows, j] = self.index(cand)
        return out

    @cached_property
    def arcs(self):
        """(src, dst) arrays of all arcs, sorted by source then target."""
        dst = np.repeat(np.arange(self.n_nodes), self.A.degree)
        src = self.pred.ravel()
        order = np.lexsort((dst, src))
        return src[order], dst[order]

    @cached_property
    def succ_ptr(self):
        src, _ = self.arcs
        return np.searchsorted(src, np.arange(self.n_nodes + 1))

    def successors(self, v):
        src, dst = self.arcs
        p = self.succ_ptr
        return dst[p[v]:p[v + 1]]

    @cached_property
    def adjacency(self):
        src, dst = self.arcs
        return csr_matrix((np.ones(len(src)), (src, dst)), shape=(self.n_nodes, self.n_nodes))

    def strong_components(self):
        return connected_components(self.adjacency, directed=True, connection="strong")

    def is_strongly_connected(self):
        return self.strong_components()[0] == 1

    def require_strongly_connected(self):
        k, labels = self.strong_components()
        if k != 1:
            sizes = np.bincount(labels)
            small = int(np.argmin(sizes))
            node = int(np.nonzero(labels == small)[0][0])
            raise ValidationError(
                f"cylinder graph has {k} strong components; e.g. word {self.words[node].tolist()} "
                f"lies in a component of size {sizes[small]}"
            )

    def is_arc(self, v, w):
        return bool(np.any(self.pred[w] == v))

    def to_json(self):
        src, dst = self.arcs
        return {
            "version": 1,
            "level": self.level,
            "nodes": self.words.tolist(),
            "arcs": np.column_stack([src, dst]).tolist(),
        }


_GRAPH_CACHE = {}


def cylinder_graph(rule, n, budget=DEFAULT_BUDGET):
    """Cached :class:`CylinderGraph` (graphs are read-only values)."""
    key = (id(rule), n)
    hit = _GRAPH_CACHE.get(key)
    if hit is None or hit.rule is not rule:
        hit = CylinderGraph(rule, n, budget)
        if len(_GRAPH_CACHE) > 32:
            _GRAPH_CACHE.clear()
        _GRAPH_CACHE[key] = hit
    return hit


# -- periodic orbits ----------------------------------------------------------------


def primitive_period(word):
    word = tuple(word)
    L = len(word)
    for p in range(1, L + 1):
        if L % p == 0 and word[p:] + word[:p] == word:
            return p
    return L


def cycle_symbols(graph, cycle):
    """Symbol sequence of a closed walk given as node ids."""
    cycle = [int(v) for v in cycle]
    if not cycle:
        raise ContractViolation("empty cycle")
    for v, w in zip(cycle, cycle[1:] + cycle[:1]):
        if not graph.is_arc(v, w):
            raise ContractViolation(f"{v} -> {w} is not an arc; the walk is not closed")
    return tuple(int(graph.words[v, 0]) for v in cycle)


@dataclass(eq=False)
class PeriodicOrbit:
    """A periodic itinerary and the realized points of its orbit.

    ``word`` is primitive; ``cycle_length`` is the length of the closed walk
    it came from, a multiple of ``period``.
    """

    rule: object = field(repr=False)
    word: tuple
    period: int
    cycle_length: int
    faces: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)
    metric: str = "model"

    @cached_property
    def gap(self):
        """Minimum distance between distinct orbit points (+inf for fixed points).

        A word may code a point on the boundary curve through both faces, so
        rotations can realize the same point; coinciding points count once.
        """
        if self.period == 1:
            return math.inf
        i, j = np.triu_indices(self.period, 1)
        d = model_distance(self.rule, self.faces[i], self.points[i], self.faces[j], self.points[j])
        d = d[d > POINT_TOL]
        return float(d.min()) if len(d) else math.inf

    def rotations(self):
        p = self.period
        return np.array([self.word[k:] + self.word[:k] for k in range(p)])

    def nodes(self, graph):
        """Node ids of the orbit's cylinders at the graph's level."""
        n = graph.level
        reps = -(-n // self.period) + 1
        long = np.array(self.word * reps)
        words = np.array([long[k:k + n] for k in range(self.period)])
        return graph.index(words)

    def to_json(self):
        return {
            "period": self.period,
            "cycle_length": self.cycle_length,
            "word": list(self.word),
            "faces": self.faces.tolist(),
            "points": self.points.tolist(),
            "gap": None if math.isinf(self.gap) else self.gap,
            "metric": self.metric,
        }


def orbit_from_word(rule, word, cycle_length=None):
    """Realize the periodic itinerary ``word^inf``."""
    word = tuple(int(s) for s in word)
    A = build_transition(rule)
    for a, b in zip(word, word[1:] + word[:1]):
        if not A.entries[a, b]:
            raise ContractViolation(f"word {word} does not close admissibly at {a}->{b}")
    p = primitive_period(word)
    prim = word[:p]
    rots = np.array([prim[k:] + prim[:k] for k in range(p)])
    faces, pts = periodic_points(rule, rots)
    faces, pts = rule.canonical(faces, pts)
    return PeriodicOrbit(
        rule=rule,
        word=prim,
        period=p,
        cycle_length=len(word) if cycle_length is None else cycle_length,
        faces=faces,
        points=pts,
    )


def periodic_point_from_cycle(graph, cycle):
    """Periodic orbit coded by a closed walk in the cylinder graph."""
    word = cycle_symbols(graph, cycle)
    return orbit_from_word(graph.rule, word, cycle_length=len(word))


def lexmin_tail(A, s):
    """Least infinite admissible continuation after symbol ``s``.

    Greedy least successors eventually cycle; returns ``(prefix, loop)``.
    """
    ext, seen = [], {}
    while s not in seen:
        seen[s] = len(ext)
        s = int(A.successors(s)[0])
        ext.append(s)
    k = seen[s]
    return ext[:k], ext[k:]


def representative_points(rule, words, kind="center"):
    """One point inside each cylinder, as canonical ``(faces, xy)``.

    ``center`` maps the centroid of the image 0-tile through the word's
    charts.  ``periodic`` takes ``w^inf`` when the word closes admissibly
    and otherwise the word followed by its least admissible continuation.
    """
    words = np.atleast_2d(np.asarray(words, dtype=np.int64))
    faces = rule.face_of(words[:, 0])
    if kind == "center":
        xy = np.repeat(rule.polygon.mean(axis=0)[None], len(words), axis=0)
        for j in range(words.shape[1] - 1, -1, -1):
            xy = rule.apply_charts(words[:, j], xy)
        return rule.canonical(faces, xy)
    if kind != "periodic":
        raise ValidationError(f"unknown representative kind {kind!r}")
    A = build_transition(rule)
    closes = A.entries[words[:, -1], words[:, 0]].astype(bool)
    xy = np.empty((len(words), 2))
    if closes.any():
        _, xy[closes] = periodic_points(rule, words[closes])
    tails = {}
    for i in np.nonzero(~closes)[0]:
        s = int(words[i, -1])
        if s not in tails:
            pre, loop = lexmin_tail(A, s)
            tails[s] = (pre, periodic_points(rule, [loop])[1][0])
        pre, base = tails[s]
        xy[i] = compose_charts(rule, list(words[i]) + pre, base)
    return rule.canonical(faces, xy)


# -- checks ------------------------------------------------------------------------


def factor_depth(rule, target=1e-10):
    """Word length after which every tile has diameter below ``target``."""
    lip = max(t.chart.lipschitz for t in rule.one_tiles)
    diam = float(np.max(np.ptp(rule.polygon, axis=0))) * math.sqrt(2.0)
    return max(1, math.ceil(math.log(target / diam) / math.log(lip)))


def factor_commutation_check(rule, samples=1000, n=1, seed=0, target=1e-10):
    """Compare ``pi(shift w)`` with ``f(pi(w))`` on random long words.

    ``pi`` is evaluated on a word long enough that its tile has diameter
    below ``target``; ``f`` is applied by point location, so the check
    exercises the map itself rather than the chart bookkeeping.
    """
    rng = np.random.default_rng(seed)
    A = build_transition(rule)
    depth = factor_depth(rule, target) + n
    words = np.empty((samples, depth), dtype=np.int64)
    words[:, 0] = rng.integers(0, A.size, samples)
    for j in range(1, depth):
        for i in range(samples):
            succ = A.successors(words[i, j - 1])
            words[i, j] = succ[rng.integers(len(succ))]
    centre = rule.polygon.mean(axis=0)
    worst, worst_word = 0.0, None
    for w in words:
        x = compose_charts(rule, w, centre)
        fx_face, fx = rule.forward([A.face[w[0]]], x[None])
        for _ in range(n - 1):
            fx_face, fx = rule.forward(fx_face, fx)
        y = compose_charts(rule, w[n:], centre)
        d = float(model_distance(rule, fx_face, fx, [A.face[w[n]]], y[None])[0])
        if d > worst:
            worst, worst_word = d, w.tolist()
    return {"samples": samples, "n": n, "depth": depth, "max_distance": worst, "worst_word": worst_word}


def theta_distance(w1, w2, theta):
    """``theta ** N`` with ``N`` the first index where the words differ."""
    if not 0.0 < theta < 1.0:
        raise ContractViolation("theta must lie in (0, 1)")
    for i, (a, b) in enumerate(zip(w1, w2)):
        if a != b:
            return theta**i
    return 0.0


def random_closed_word(A, length, rng, max_tries=10_000):
    """Uniformly drawn random walk of ``length`` symbols, retried until it closes admissibly."""
    for _ in range(max_tries):
        seq = [int(rng.integers(A.size))]
        while len(seq) < length:
            succ = A.successors(seq[-1])
            seq.append(int(succ[rng.integers(len(succ))]))
        if A.entries[seq[-1], seq[0]]:
            return seq
    raise ContractViolation("could not draw a closed word")


def cycle_nodes(graph, word):
    """Closed walk of nodes followed by the periodic itinerary ``word^inf``."""
    word = [int(s) for s in word]
    L, n = len(word), graph.level
    long = word * (-(-(n + L) // L) + 1)
    return [int(x) for x in graph.index(np.array([long[k:k + n] for k in range(L)]))]


def random_closed_walk(graph, length, rng):
    """Random closed walk with ``length`` arcs in the cylinder graph."""
    return cycle_nodes(graph, random_closed_word(graph.A, length, rng))
