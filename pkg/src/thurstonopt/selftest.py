"""Fast invariant checks behind ``thurstonopt selftest``."""

from __future__ import annotations

import math

import numpy as np


def _check(name, fn):
    try:
        ok, detail = fn()
    except Exception as exc:  # a crashing check is a failed check
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return {"name": name, "ok": bool(ok), "detail": detail}


def _counts():
    from .subdivision import load_builtin, refine

    rule = load_builtin("pillow_lattes")
    got = [(refine(rule, n).n_tiles, refine(rule, n).n_edges) for n in (1, 2, 3)]
    return got == [(8, 16), (32, 64), (128, 256)], got


def _euler():
    from .subdivision import BUILTIN_NAMES, load_builtin, refine

    chi = {}
    for name in BUILTIN_NAMES:
        dec = refine(load_builtin(name), 2)
        chi[name] = dec.n_vertices - dec.n_edges + dec.n_tiles
    return all(v == 2 for v in chi.values()), chi


def _words():
    from .subdivision import BUILTIN_NAMES, load_builtin, refine
    from .symbolic import count_words

    bad = {}
    for name in BUILTIN_NAMES:
        rule = load_builtin(name)
        for n in range(1, 4):
            if count_words(rule, n) != refine(rule, n).n_tiles:
                bad[name] = n
    return not bad, bad or "words match tiles for n <= 3"


def _mean_cycle():
    from .meancycle import brute, howard, karp, random_graph

    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        g = random_graph(rng, int(rng.integers(2, 9)), 0.3)
        qs = [karp(g).q, howard(g).q, brute(g).q]
        worst = max(worst, max(qs) - min(qs))
    return worst <= 1e-12, worst


def _bousch():
    from .ergopt import calibrated_subaction, mane_normalize, q_value
    from .potential import discretize, random_smooth
    from .subdivision import load_builtin
    from .symbolic import cylinder_graph

    rule = load_builtin("pillow_lattes")
    g = cylinder_graph(rule, 3)
    psi = discretize(random_smooth(rule, np.random.default_rng(0)), rule, 3)
    q = q_value(g, psi).q
    u = calibrated_subaction(g, psi, q)
    phi = mane_normalize(g, psi, u, q)
    q0 = q_value(g, arc_weights=phi.arc_values).q
    return u.residual <= 1e-10 and phi.max_value <= 1e-10 and abs(q0) <= 1e-10, {
        "residual": u.residual, "max": phi.max_value, "q": q0}


def _factor():
    from .subdivision import load_builtin
    from .symbolic import factor_commutation_check

    rep = factor_commutation_check(load_builtin("pillow_lattes"), samples=100)
    return rep["max_distance"] <= 1e-8, rep["max_distance"]


def _closing():
    from .closing import verify_periodic
    from .subdivision import load_builtin
    from .symbolic import orbit_from_word

    orbit = orbit_from_word(load_builtin("pillow_lattes"), (1, 5))
    err = verify_periodic(orbit)
    return err <= 1e-8 and math.isinf(orbit.gap), err


CHECKS = [
    ("tile and edge counts", _counts),
    ("Euler characteristic", _euler),
    ("word-tile bijection", _words),
    ("mean-cycle methods agree", _mean_cycle),
    ("Bousch fixed point", _bousch),
    ("shift and map commute", _factor),
    ("periodic orbit closes", _closing),
]


def run_selftest():
    return [_check(name, fn) for name, fn in CHECKS]
