"""Perturbation toward a periodic orbit, locking trials and zero-temperature sweeps.

A potential is pushed down away from a periodic orbit ``O`` found near
its maximizing set; the experiment checks that the maximizing cycle of
the perturbed table is ``O``'s cycle, unique with a positive margin, and
that it survives small random perturbations.  Gibbs surrogates at growing
inverse temperature should concentrate on ``O``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .closing import GapSpec, bound_by_gap
from .errors import ContractViolation, ConvergenceError
from .ergopt import (
    _values,
    calibrated_subaction,
    mane_normalize,
    maximizing_set,
    maximizing_subgraph_arcs,
    q_value,
)
from .geometry import model_distance, random_points_in_polygon
from .meancycle import ArcGraph, howard
from .potential import Potential, discretize, distance_potential, holder_seminorm_estimate
from .symbolic import cycle_nodes, cylinder_graph, representative_points

log = logging.getLogger(__name__)

__all__ = [
    "TpoReport",
    "GibbsVector",
    "tpo_pipeline",
    "locking_test",
    "equilibrium_state",
    "zero_temperature_sweep",
    "second_best",
]


def _canonical(cycle):
    cycle = [int(v) for v in cycle]
    k = cycle.index(min(cycle))
    return cycle[k:] + cycle[:k]


def second_best(graph, values, cycle):
    """Largest cycle mean over closed walks that avoid at least one arc of ``cycle``.

    Each arc of ``cycle`` is removed in turn and policy iteration is rerun;
    every cycle other than ``cycle`` misses one of its arcs.
    """
    src, dst = graph.arcs
    arcs = list(zip(cycle, cycle[1:] + cycle[:1]))
    best, best_cycle = -math.inf, None
    for u, v in arcs:
        keep = ~((src == u) & (dst == v))
        g = ArcGraph.build(graph.n_nodes, src[keep], dst[keep], values[src[keep]])
        res = howard(g)
        if res.q > best:
            best, best_cycle = res.q, res.cycle
    return best, best_cycle


@dataclass
class TpoReport:
    potential: str
    level: int
    orbit_word: tuple
    period: int
    epsilon: float
    alpha: float
    q_before: float
    q_after: float
    cycle_before: list
    cycle_after: list
    target_cycle: list
    second_best: float
    birkhoff_mean: float
    gap_steps: int
    table: np.ndarray = field(repr=False)
    trials: int = 0
    successes: int = 0
    notes: list = field(default_factory=list)

    @property
    def margin(self):
        return self.q_after - self.second_best

    @property
    def success(self):
        return self.cycle_after == self.target_cycle and self.margin > 0

    def to_json(self):
        return {
            "version": 1,
            "potential": self.potential,
            "level": self.level,
            "orbit": {"word": list(self.orbit_word), "period": self.period},
            "epsilon": self.epsilon,
            "alpha": self.alpha,
            "q_before": self.q_before,
            "q_after": self.q_after,
            "cycle_before": self.cycle_before,
            "cycle_after": self.cycle_after,
            "second_best": self.second_best,
            "margin": self.margin,
            "birkhoff_mean": self.birkhoff_mean,
            "success": self.success,
            "gap_recursion_steps": self.gap_steps,
            "locking": {"trials": self.trials, "successes": self.successes},
            "notes": self.notes,
        }


def tpo_pipeline(phi, rule, level=5, epsilon=None, alpha=None, gap_spec=GapSpec(1.0, 1.0), tau=1.0,
                 kappa=2.0, search_epsilon=0.1, tol=1e-10):
    """Perturb ``phi`` toward a periodic orbit near its maximizing set.

    ``epsilon`` defaults to ``0.05 * range`` of the level table and
    ``alpha`` to the potential's exponent.
    """
    if level < 3:
        raise ContractViolation("the experiment needs level >= 3")
    graph = cylinder_graph(rule, level)
    graph.require_strongly_connected()
    psi = discretize(phi, rule, level)
    values = psi.values
    alpha = phi.alpha if alpha is None else alpha
    spread = float(values.max() - values.min())
    epsilon = 0.05 * spread if epsilon is None else epsilon
    notes = []
    if epsilon <= 0:
        if spread == 0:
            # constant potentials still get pushed toward the orbit
            epsilon = 0.05
            notes.append("constant potential: epsilon set to 0.05")
        else:
            raise ContractViolation("epsilon must be positive")
    before = q_value(graph, values)
    u = calibrated_subaction(graph, values, before.q)
    phi_t = mane_normalize(graph, values, u, before.q, tol=1e-9)
    K = maximizing_set(graph, phi_t, tol)
    tight = maximizing_subgraph_arcs(graph, phi_t, K, tol)
    found = bound_by_gap(graph, K, gap_spec.r, gap_spec.theta, alpha, tau, search_epsilon, kappa, tight)
    orbit = found.orbit
    dist = discretize(distance_potential(orbit, alpha), rule, level).values
    table = values - epsilon * dist
    after = q_value(graph, table)
    target = _canonical(cycle_nodes(graph, orbit.word))
    runner_up, _ = second_best(graph, table, after.cycle)
    mean_on_orbit = math.fsum(table[target]) / len(target)
    if abs(mean_on_orbit - after.q) > 1e-9 and after.cycle == target:
        notes.append("Birkhoff mean over O differs from q_after")
    report = TpoReport(
        potential=phi.name,
        level=level,
        orbit_word=orbit.word,
        period=orbit.period,
        epsilon=epsilon,
        alpha=alpha,
        q_before=before.q,
        q_after=after.q,
        cycle_before=list(before.cycle),
        cycle_after=list(after.cycle),
        target_cycle=target,
        second_best=runner_up,
        birkhoff_mean=mean_on_orbit,
        gap_steps=found.steps,
        table=table,
        notes=notes,
    )
    log.info("tpo %s: period %d, margin %.3e, success %s", phi.name, orbit.period, report.margin,
             report.success)
    return report


# -- locking ------------------------------------------------------------------------


def lipschitz_perturbation(rule, level, rho, rng, bumps=4):
    """Table of ``c * sum a_j d(x, c_j)`` scaled to sup-norm and Lipschitz constant at most ``rho``."""
    words = cylinder_graph(rule, level).words
    faces, xy = representative_points(rule, words)
    cf = rng.integers(0, 2, bumps)
    centres = random_points_in_polygon(rule.polygon, bumps, rng)
    amp = rng.uniform(-1.0, 1.0, bumps)
    out = np.zeros(len(words))
    for f, c, a in zip(cf, centres, amp):
        out += a * model_distance(rule, faces, xy, np.full(len(xy), f), np.repeat(c[None], len(xy), axis=0))
    out -= 0.5 * (out.max() + out.min())
    scale = max(float(np.abs(out).max()), float(np.abs(amp).sum()), 1e-300)
    return out * (rho / scale)


def locking_test(graph, table, trials=20, rho=0.0, seed=0, reference=None, workers=1):
    """Count random perturbations of sup-norm and seminorm at most ``rho`` that keep the argmax cycle.

    Trial ``k`` uses the seed ``(seed, k)``, so results do not depend on
    the number of ``workers`` (``None`` means all cores).  Returns
    ``(successes, trials, largest observed norm)``.
    """
    if rho < 0:
        raise ContractViolation("rho must be >= 0")
    table = _values(graph, table)
    ref = _canonical(q_value(graph, table).cycle) if reference is None else _canonical(reference)

    def trial(k):
        if rho == 0:
            return _canonical(q_value(graph, table, check_connected=False).cycle) == ref, 0.0
        rng = np.random.default_rng([seed, k])
        h = lipschitz_perturbation(graph.rule, graph.level, rho, rng)
        est = holder_seminorm_estimate(Potential.table(graph.rule, graph.level, h, 1.0), 1.0)
        res = q_value(graph, table + h, check_connected=False)
        return _canonical(res.cycle) == ref, max(float(np.abs(h).max()), est.seminorm_est)

    _ = graph.arcs  # build cached structures before threads share the graph
    if workers == 1:
        results = [trial(k) for k in range(trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(trial, range(trials)))
    return sum(ok for ok, _ in results), trials, max((n for _, n in results), default=0.0)


# -- Gibbs surrogates ------------------------------------------------------------------


@dataclass
class GibbsVector:
    level: int
    t: float
    weights: np.ndarray = field(repr=False)
    log_eigenvalue: float = math.nan
    iterations: int = 0

    def __post_init__(self):
        s = float(self.weights.sum())
        if abs(s - 1.0) > 1e-12 or np.any(self.weights < 0):
            raise ContractViolation(f"weights do not form a probability vector (sum {s!r})")

    def to_json(self):
        return {"version": 1, "level": self.level, "t": self.t, "weights": self.weights.tolist(),
                "log_eigenvalue": self.log_eigenvalue}


def equilibrium_state(graph, psi, t, tol=1e-12, max_iter=1_000_000):
    """Stationary node measure of ``A(v, w) exp(t psi(v))`` from its Perron vectors.

    The matrix is first conjugated by ``diag(exp(t u))`` with ``u`` a
    calibrated sub-action and divided by ``exp(t Q)``, so its arc weights
    become ``exp(t phi~)`` with the Mane-normalized ``phi~ <= 0``.  This
    keeps the Perron vectors of order one on the maximizing set at large
    ``t`` without changing the measure.  Both vectors come from lazy power
    iteration ``x -> (x + Mx / |Mx|) / 2`` (periodic dominant blocks would
    otherwise oscillate).
    """
    if not math.isfinite(t):
        raise ContractViolation("t must be finite")
    graph.require_strongly_connected()
    psi = _values(graph, psi)
    q = q_value(graph, psi, check_connected=False).q
    u = calibrated_subaction(graph, psi, q)
    phi = mane_normalize(graph, psi, u, q, tol=1e-9).arc_values
    w = np.exp(t * np.minimum(phi, 0.0))
    src, dst = graph.arcs
    n = graph.n_nodes

    def right(x):  # (M x)(v) = sum_{v -> u} w(v, u) x(u)
        out = np.zeros(n)
        np.add.at(out, src, w * x[dst])
        return out

    def left(y):  # (y M)(u) = sum_{v -> u} y(v) w(v, u)
        out = np.zeros(n)
        np.add.at(out, dst, w * y[src])
        return out

    r, lam, it_r = _perron(right, n, tol, max_iter)
    l, _, it_l = _perron(left, n, tol, max_iter)
    mu = l * r
    mu /= mu.sum()
    return GibbsVector(graph.level, float(t), mu, math.log(lam) + t * q, max(it_r, it_l))


def _perron(op, n, tol, max_iter):
    x = np.full(n, 1.0 / n)
    residual = np.inf
    for k in range(max_iter):
        y = op(x)
        lam = y.sum()
        y = 0.5 * (x + y / lam)
        residual = float(np.abs(y - x).max() / y.max())
        x = y / y.sum()
        if residual <= tol:
            return x, float(lam), k + 1
    raise ConvergenceError(f"Perron iteration stalled (residual {residual:.3e})", residual=residual)


def total_variation(mu, nu):
    return 0.5 * float(np.abs(np.asarray(mu) - np.asarray(nu)).sum())


def zero_temperature_sweep(graph, psi, t_list, orbit_word):
    """``(t, TV(mu_t, uniform on O's cylinders))`` for each ``t``."""
    t_list = [float(t) for t in t_list]
    if any(b <= a for a, b in zip(t_list, t_list[1:])):
        raise ContractViolation("t_list must be increasing")
    target = np.zeros(graph.n_nodes)
    nodes = cycle_nodes(graph, orbit_word)
    target[nodes] += 1.0 / len(nodes)
    return [(t, total_variation(equilibrium_state(graph, psi, t).weights, target)) for t in t_list]
