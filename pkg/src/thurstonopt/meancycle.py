"""Maximum mean cycle: Karp's recurrence, Howard policy iteration, brute force.

Graphs are given as arc arrays ``(src, dst, weight)`` over nodes
``0 .. n-1``.  Every method returns the cycle it found and reports ``q``
as the exact mean of that cycle's weights, so methods that find the same
cycle agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, ConvergenceError

METHODS = ("karp", "howard", "brute")


@dataclass
class MaxMeanResult:
    q: float
    cycle: list
    method: str
    certificate: dict = field(default_factory=dict, repr=False)

    def to_json(self):
        return {"q": self.q, "cycle": [int(v) for v in self.cycle], "method": self.method}


@dataclass(frozen=True, eq=False)
class ArcGraph:
    """Arc list sorted by source, with CSR pointers."""

    n: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    ptr: np.ndarray

    @classmethod
    def build(cls, n, src, dst, weight):
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        weight = np.asarray(weight, dtype=float)
        if not (len(src) == len(dst) == len(weight)):
            raise ContractViolation("arc arrays differ in length")
        if len(src) and (src.min() < 0 or src.max() >= n or dst.min() < 0 or dst.max() >= n):
            raise ContractViolation("arc endpoint out of range")
        if not np.all(np.isfinite(weight)):
            raise ContractViolation("arc weights must be finite")
        order = np.lexsort((dst, src))
        src, dst, weight = src[order], dst[order], weight[order]
        ptr = np.searchsorted(src, np.arange(n + 1))
        return cls(int(n), src, dst, weight, ptr)

    def arc_weight(self, u, v):
        lo, hi = self.ptr[u], self.ptr[u + 1]
        sel = np.nonzero(self.dst[lo:hi] == v)[0]
        if not len(sel):
            raise ContractViolation(f"no arc {u} -> {v}")
        return float(self.weight[lo:hi][sel].max())


def cycle_mean(graph, cycle):
    w = [graph.arc_weight(u, v) for u, v in zip(cycle, list(cycle[1:]) + list(cycle[:1]))]
    return math.fsum(w) / len(w)


def _canonical_rotation(cycle):
    cycle = [int(v) for v in cycle]
    k = cycle.index(min(cycle))
    return cycle[k:] + cycle[:k]


def _result(graph, cycle, method, certificate=None):
    cycle = _canonical_rotation(cycle)
    return MaxMeanResult(cycle_mean(graph, cycle), cycle, method, certificate or {})


# -- Karp ------------------------------------------------------------------------


def karp(graph):
    """Karp's recurrence from a virtual source joined to every node.

    ``D[k, v]`` is the heaviest walk of exactly ``k`` arcs ending at ``v``;
    the witness is a cycle on the walk realizing ``D[n, v*]``.
    """
    n = graph.n
    if len(graph.src) == 0:
        raise ContractViolation("graph has no arcs")
    D = np.full((n + 1, n), -np.inf)
    D[0] = 0.0
    back = np.full((n + 1, n), -1, dtype=np.int64)
    src, dst, w = graph.src, graph.dst, graph.weight
    for k in range(1, n + 1):
        cand = D[k - 1, src] + w
        # max per destination; ties to the smallest source id (arcs are sorted by source)
        order = np.lexsort((src, -cand, dst))
        first = np.ones(len(order), dtype=bool)
        first[1:] = dst[order][1:] != dst[order][:-1]
        pick = order[first]
        D[k, dst[pick]] = cand[pick]
        back[k, dst[pick]] = src[pick]
    with np.errstate(invalid="ignore"):
        ks = np.arange(n)[:, None]
        ratios = (D[n][None, :] - D[:n]) / (n - ks)
        ratios[~np.isfinite(D[:n])] = np.inf
        worst = ratios.min(axis=0)
    worst[~np.isfinite(D[n])] = -np.inf
    lam = float(worst.max())
    if not np.isfinite(lam):
        raise ContractViolation("graph has no cycle")
    v = int(np.argmax(worst))
    walk = [v]
    for k in range(n, 0, -1):
        v = int(back[k, v])
        walk.append(v)
    walk.reverse()
    best, best_mean = None, -np.inf
    seen = {}
    for i, u in enumerate(walk):
        if u in seen:
            cyc = walk[seen[u]:i]
            mean = cycle_mean(graph, cyc)
            if mean > best_mean + 1e-15 or (abs(mean - best_mean) <= 1e-15 and _canonical_rotation(cyc) < best):
                best, best_mean = _canonical_rotation(cyc), mean
        seen[u] = i
    return _result(graph, best, "karp", {"lambda": lam})


# -- Howard ------------------------------------------------------------------------


def _evaluate_policy(graph, policy, policy_w):
    """Cycle means ``eta`` and biases ``h`` of a functional graph."""
    n = graph.n
    eta = np.empty(n)
    h = np.empty(n)
    state = np.zeros(n, dtype=np.int8)  # 0 new, 1 on stack, 2 done
    roots = []
    for s in range(n):
        if state[s]:
            continue
        path = []
        v = s
        while state[v] == 0:
            state[v] = 1
            path.append(v)
            v = int(policy[v])
        if state[v] == 1:
            # new cycle: from v to the end of path
            k = path.index(v)
            cyc = path[k:]
            mean = math.fsum(policy_w[cyc]) / len(cyc)
            root = min(cyc)
            # bias on the cycle: h(root) = 0, walk backwards from root
            order = cyc[cyc.index(root):] + cyc[:cyc.index(root)]
            h[root] = 0.0
            for u in reversed(order[1:]):
                h[u] = policy_w[u] - mean + h[int(policy[u])]
            eta[cyc] = mean
            roots.append(root)
            for u in cyc:
                state[u] = 2
            path = path[:k]
        for u in reversed(path):
            nxt = int(policy[u])
            eta[u] = eta[nxt]
            h[u] = policy_w[u] - eta[nxt] + h[nxt]
            state[u] = 2
    return eta, h


def _segment_argmax(values, graph):
    """Per-node max of arc values."""
    n = graph.n
    best = np.full(n, -np.inf)
    np.maximum.at(best, graph.src, values)
    return best


def howard(graph, max_iter=10_000, policy=None):
    """Howard policy iteration for the maximum cycle mean.

    Every node needs an outgoing arc.  Switches use the lexicographically
    least improving target, which keeps runs deterministic.  ``policy``
    optionally warm-starts from an arc index per node.
    """
    if np.any(graph.ptr[1:] == graph.ptr[:-1]):
        raise ContractViolation("every node needs an outgoing arc")
    src, dst, w = graph.src, graph.dst, graph.weight
    scale = 1.0 + float(np.max(np.abs(w)))
    eps = 1e-13 * scale
    if policy is None:
        best = _segment_argmax(w, graph)
        tight = w >= best[src]
        arc = _first_per_node(graph, tight)
    else:
        arc = np.asarray(policy, dtype=np.int64)
    for it in range(max_iter):
        eta, h = _evaluate_policy(graph, dst[arc], w[arc])
        # first criterion: reach a better cycle mean
        e_val = eta[dst]
        e_best = _segment_argmax(e_val, graph)
        improve = e_best > eta + eps
        if improve.any():
            cand = _first_per_node(graph, e_val >= e_best[src])
            arc = np.where(improve, cand, arc)
            continue
        # second criterion: same mean, better bias
        val = w - eta[src] + h[dst]
        val = np.where(np.abs(eta[dst] - eta[src]) <= eps, val, -np.inf)
        v_best = _segment_argmax(val, graph)
        improve = v_best > h + eps
        if not improve.any():
            break
        cand = _first_per_node(graph, val >= v_best[src])
        arc = np.where(improve, cand, arc)
    else:
        raise ConvergenceError(f"policy iteration did not converge in {max_iter} rounds")
    top = float(eta.max())
    start = int(np.nonzero(eta >= top - eps)[0].min())
    # walk the policy from the first optimal node until it closes
    seen = {}
    v, path = start, []
    while v not in seen:
        seen[v] = len(path)
        path.append(v)
        v = int(dst[arc[v]])
    cycle = path[seen[v]:]
    return _result(graph, cycle, "howard", {"eta": eta, "bias": h, "policy": arc, "iterations": it + 1})


def _first_per_node(graph, mask):
    """Index of the first arc of each node satisfying ``mask`` (arcs are sorted by target)."""
    idx = np.nonzero(mask)[0]
    first = np.full(graph.n, len(graph.src), dtype=np.int64)
    np.minimum.at(first, graph.src[idx], idx)
    return first


# -- brute force ------------------------------------------------------------------


def brute(graph, max_nodes=12):
    """Enumerate all simple cycles (small graphs only)."""
    import networkx as nx

    if graph.n > max_nodes:
        raise ContractViolation(f"brute force limited to {max_nodes} nodes")
    G = nx.DiGraph()
    G.add_nodes_from(range(graph.n))
    for u, v, x in zip(graph.src, graph.dst, graph.weight):
        u, v = int(u), int(v)
        if G.has_edge(u, v):
            G[u][v]["weight"] = max(G[u][v]["weight"], float(x))
        else:
            G.add_edge(u, v, weight=float(x))
    W = np.full((graph.n, graph.n), -np.inf)
    np.maximum.at(W, (graph.src, graph.dst), graph.weight)
    best, best_mean = None, -np.inf
    for cyc in nx.simple_cycles(G):
        mean = W[cyc, np.roll(cyc, -1)].sum() / len(cyc)
        if mean > best_mean + 1e-12:
            best, best_mean = _canonical_rotation(cyc), mean
        elif mean >= best_mean - 1e-12:
            # near-tie: settle with exact sums, then lexicographically
            cyc = _canonical_rotation(cyc)
            exact, held = cycle_mean(graph, cyc), cycle_mean(graph, best)
            if exact > held or (exact == held and cyc < best):
                best, best_mean = cyc, exact
    if best is None:
        raise ContractViolation("graph has no cycle")
    return _result(graph, best, "brute")


def max_mean_cycle(graph, method="howard", **kwargs):
    if method == "karp":
        return karp(graph)
    if method == "howard":
        return howard(graph, **kwargs)
    if method == "brute":
        return brute(graph, **kwargs)
    raise ContractViolation(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def random_graph(rng, n, p=0.3, strongly_connected=True, weights=(-1.0, 1.0)):
    """Random digraph as an :class:`ArcGraph` (test and benchmark helper)."""
    mask = rng.random((n, n)) < p
    if strongly_connected:
        perm = rng.permutation(n)
        mask[perm, np.roll(perm, -1)] = True
    src, dst = np.nonzero(mask)
    w = rng.uniform(weights[0], weights[1], len(src))
    return ArcGraph.build(n, src, dst, w)
