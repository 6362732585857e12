"""Max-plus Bousch operator, Q via maximum mean cycle, sub-actions and Mane normalization.

Everything lives on the level-``n`` cylinder graph.  A node-weighted
potential ``psi`` puts ``psi(v)`` on every arc leaving ``v``; the operator
is ``L(u)(w) = max{psi(v) + u(v) : v -> w}``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, ConvergenceError, ValidationError
from .meancycle import ArcGraph, MaxMeanResult, max_mean_cycle
from .potential import Potential, discretize
from .symbolic import cylinder_graph

log = logging.getLogger(__name__)


def _values(graph, psi):
    if isinstance(psi, Potential):
        if psi.kind != "table":
            psi = discretize(psi, graph.rule, graph.level)
        if psi.level != graph.level:
            raise ContractViolation(f"potential at level {psi.level}, graph at level {graph.level}")
        psi = psi.values
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (graph.n_nodes,):
        raise ContractViolation(f"expected {graph.n_nodes} node values, got shape {psi.shape}")
    return psi


@dataclass
class BouschState:
    level: int
    u: np.ndarray = field(repr=False)
    residual: float = np.inf
    iterations: int = 0

    def __post_init__(self):
        if not np.all(np.isfinite(self.u)):
            raise ContractViolation("sub-action values must be finite")

    def to_json(self):
        return {"level": self.level, "residual": self.residual, "iterations": self.iterations,
                "u_min": float(self.u.min()), "u_max": float(self.u.max())}


def _apply(graph, u, psi, q):
    pred = graph.pred
    return np.max(psi[pred] + u[pred], axis=1) - q


def bousch_apply(graph, state, psi, subtract_q=0.0):
    """One step of the normalized operator ``L_{psi - q}``."""
    if state.level != graph.level:
        raise ContractViolation(f"state at level {state.level}, graph at level {graph.level}")
    psi = _values(graph, psi)
    if state.u.shape != psi.shape:
        raise ContractViolation("state and potential sizes differ")
    new = _apply(graph, state.u, psi, subtract_q)
    return BouschState(graph.level, new, float(np.max(np.abs(new - state.u))), state.iterations + 1)


# -- Q --------------------------------------------------------------------------------


def arc_graph(graph, arc_weights):
    src, dst = graph.arcs
    return ArcGraph.build(graph.n_nodes, src, dst, arc_weights)


@dataclass
class QResult(MaxMeanResult):
    level: int = 0
    words: list = field(default_factory=list)

    def to_json(self):
        out = super().to_json()
        out.update(level=self.level, words=[list(map(int, w)) for w in self.words])
        return out


def q_value(graph, psi=None, method="howard", arc_weights=None, check_connected=True):
    """Finite-level ``Q``: the maximum mean cycle of the weighted cylinder graph.

    Pass a node potential ``psi`` or explicit ``arc_weights`` aligned with
    ``graph.arcs``.
    """
    if check_connected:
        graph.require_strongly_connected()
    if arc_weights is None:
        psi = _values(graph, psi)
        src, _ = graph.arcs
        arc_weights = psi[src]
    res = max_mean_cycle(arc_graph(graph, arc_weights), method)
    return QResult(res.q, res.cycle, res.method, res.certificate, level=graph.level,
                   words=[graph.words[v].tolist() for v in res.cycle])


def q_by_level(rule, potential, levels, method="howard"):
    """``Q_n`` for each level of a closed-form potential."""
    out = []
    for n in levels:
        g = cylinder_graph(rule, n)
        out.append(q_value(g, discretize(potential, rule, n), method).q)
    return np.array(out)


# -- sub-actions ----------------------------------------------------------------------


def calibrated_subaction(graph, psi, q, max_iters=200_000, tol=1e-12, burn_in=None, method="iterate"):
    """Fixed point of ``L_{psi - q}``.

    ``iterate`` follows the iterates of ``0`` and keeps their running
    coordinatewise supremum after a burn-in of ``4 * level`` steps.  At a
    finite level the iterates are eventually periodic and the supremum over
    one period is a fixed point; if the transient outlasts the burn-in the
    supremum is restarted over doubling windows.  ``longest_path`` instead takes heaviest
    paths of ``psi - q`` out of a node on the optimal cycle.
    """
    psi = _values(graph, psi)
    if method == "longest_path":
        return _longest_path_subaction(graph, psi, q, tol)
    if method != "iterate":
        raise ValidationError(f"unknown sub-action method {method!r}")
    burn_in = 4 * graph.level if burn_in is None else burn_in
    u = np.zeros(graph.n_nodes)
    for _ in range(burn_in):
        u = _apply(graph, u, psi, q)
    sup = u.copy()
    residual = np.inf
    block, start = max(64, burn_in), 0
    for k in range(max_iters):
        u = _apply(graph, u, psi, q)
        np.maximum(sup, u, out=sup)
        if k % 8 == 7:
            residual = float(np.max(np.abs(_apply(graph, sup, psi, q) - sup)))
            if residual <= tol:
                break
        if k - start >= block:
            # the transient outlasted the burn-in: restart the supremum here
            sup = u.copy()
            start, block = k, 2 * block
    else:
        raise ConvergenceError(
            f"sub-action iteration stalled after {max_iters} steps (residual {residual:.3e})",
            residual=residual,
        )
    state = BouschState(graph.level, sup, residual, burn_in + k + 1)
    log.debug("sub-action: level %d, %d iterations, |u| <= %.3g", graph.level, state.iterations,
              float(np.abs(sup).max()))
    return state


def _longest_path_subaction(graph, psi, q, tol):
    res = q_value(graph, psi)
    root = res.cycle[0]
    u = np.full(graph.n_nodes, -np.inf)
    u[root] = 0.0
    for k in range(graph.n_nodes + 1):
        new = np.maximum(u, _apply(graph, u, psi, q))
        new[root] = 0.0
        if np.array_equal(new, u):
            break
        u = new
    residual = float(np.max(np.abs(_apply(graph, u, psi, q) - u)))
    if residual > tol:
        raise ConvergenceError(f"longest-path sub-action has residual {residual:.3e}", residual=residual)
    return BouschState(graph.level, u, residual, k + 1)


# -- normalization and the maximizing set ------------------------------------------------


@dataclass
class NormalizedPotential:
    """Arc values ``psi(v) - q + u(v) - u(w)`` on every arc ``v -> w``."""

    level: int
    arc_values: np.ndarray = field(repr=False)
    node_values: np.ndarray = field(repr=False)

    @property
    def max_value(self):
        return float(self.arc_values.max())


def mane_normalize(graph, psi, u, q, tol=1e-10):
    """Mane normalization; the node values are the max over outgoing arcs."""
    psi = _values(graph, psi)
    uu = u.u if isinstance(u, BouschState) else np.asarray(u, dtype=float)
    src, dst = graph.arcs
    arc = psi[src] - q + uu[src] - uu[dst]
    top = float(arc.max())
    if top > tol:
        raise ContractViolation(f"normalized potential reaches {top:.3e} > tol; u is not a sub-action for q")
    node = np.full(graph.n_nodes, -np.inf)
    np.maximum.at(node, src, arc)
    return NormalizedPotential(graph.level, arc, node)


def maximizing_set(graph, phi, tol=1e-10):
    """Nodes of the largest subgraph of near-zero arcs with no dead ends.

    Starts from arcs with ``phi >= -tol`` and repeatedly drops nodes that
    have no kept outgoing arc or no kept incoming arc.
    """
    arc_values = phi.arc_values if isinstance(phi, NormalizedPotential) else np.asarray(phi, float)
    src, dst = graph.arcs
    keep_arc = arc_values >= -tol
    alive = np.zeros(graph.n_nodes, dtype=bool)
    alive[src[keep_arc]] = True
    while True:
        live_arc = keep_arc & alive[src] & alive[dst]
        has_out = np.zeros(graph.n_nodes, dtype=bool)
        has_in = np.zeros(graph.n_nodes, dtype=bool)
        has_out[src[live_arc]] = True
        has_in[dst[live_arc]] = True
        nxt = alive & has_out & has_in
        if np.array_equal(nxt, alive):
            break
        alive = nxt
    nodes = np.nonzero(alive)[0]
    if not len(nodes):
        raise ValidationError("maximizing set is empty; tol is too small")
    return set(int(v) for v in nodes)


def maximizing_subgraph_arcs(graph, phi, nodes, tol=1e-10):
    """Mask of near-zero arcs inside ``nodes``."""
    arc_values = phi.arc_values if isinstance(phi, NormalizedPotential) else np.asarray(phi, float)
    src, dst = graph.arcs
    inside = np.zeros(graph.n_nodes, dtype=bool)
    inside[list(nodes)] = True
    return (arc_values >= -tol) & inside[src] & inside[dst]


# -- Livsic -------------------------------------------------------------------------


@dataclass
class LivsicVerdict:
    coboundary_like: bool
    q_plus: float
    q_minus: float
    max_cycle_sum: float
    max_period: int
    level: int

    def to_json(self):
        return dict(self.__dict__)


def closed_walk_extremes(graph, psi, max_period):
    """Largest and smallest sum of ``psi`` over closed walks of each length ``1..max_period``."""
    psi = _values(graph, psi)
    n = graph.n_nodes
    pred = graph.pred
    hi = np.full((n, n), -np.inf)
    lo = np.full((n, n), np.inf)
    # walks of length 1 from start s: s -> w with weight psi[s]
    np.fill_diagonal(hi, 0.0)
    np.fill_diagonal(lo, 0.0)
    highs, lows = [], []
    for _ in range(max_period):
        hi = np.max(hi[:, pred] + psi[pred][None], axis=2)
        lo = np.min(lo[:, pred] + psi[pred][None], axis=2)
        d_hi, d_lo = np.diag(hi), np.diag(lo)
        highs.append(float(d_hi[np.isfinite(d_hi)].max()) if np.isfinite(d_hi).any() else -np.inf)
        lows.append(float(d_lo[np.isfinite(d_lo)].min()) if np.isfinite(d_lo).any() else np.inf)
    return np.array(highs), np.array(lows)


def livsic_test(graph, psi, max_period=8, tol=1e-9):
    """Numerical coboundary test.

    The verdict uses both ``Q(psi)`` and ``Q(-psi)``: a coboundary has zero
    sum on every closed walk, so both vanish.  Closed-walk sums up to
    ``max_period`` are reported as well.
    """
    if max_period > 10:
        raise ContractViolation("max_period is limited to 10")
    psi = _values(graph, psi)
    qp = q_value(graph, psi).q
    qm = q_value(graph, -psi).q
    highs, lows = closed_walk_extremes(graph, psi, max_period)
    vals = np.concatenate([highs[np.isfinite(highs)], lows[np.isfinite(lows)]])
    worst = float(np.max(np.abs(vals))) if len(vals) else 0.0
    return LivsicVerdict(
        coboundary_like=bool(abs(qp) <= tol and abs(qm) <= tol),
        q_plus=qp,
        q_minus=qm,
        max_cycle_sum=worst,
        max_period=max_period,
        level=graph.level,
    )


def coboundary(graph, v):
    """Node potential ``w -> v(w[:-1]) - v(w[1:])`` from a table ``v`` one level down."""
    if graph.level < 2:
        raise ContractViolation("coboundaries need level >= 2")
    low = cylinder_graph(graph.rule, graph.level - 1)
    v = np.asarray(v, dtype=float)
    if v.shape != (low.n_nodes,):
        raise ContractViolation(f"expected {low.n_nodes} values one level down")
    head = low.index(graph.words[:, :-1])
    tail = low.index(graph.words[:, 1:])
    return v[head] - v[tail]


def bousch_power_bruteforce(graph, psi, u, steps):
    """``max{S_k psi(y) + u(y)}`` over ``k``-step predecessors, by explicit path expansion."""
    psi = _values(graph, psi)
    paths = [(w, 0.0, w) for w in range(graph.n_nodes)]  # (end, sum, start)
    for _ in range(steps):
        paths = [(end, s + psi[v], v) for end, s, start in paths for v in graph.pred[start]]
    out = np.full(graph.n_nodes, -np.inf)
    for end, s, start in paths:
        out[end] = max(out[end], s + u[start])
    return out
