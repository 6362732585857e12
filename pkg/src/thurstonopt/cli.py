"""Command-line interface.

Settings come from built-in defaults, then the ``[run]`` section of an
optional ``--config`` file, then command-line flags; later sources win.
Reports are printed as JSON and, with ``--out DIR``, written to ``DIR``
together with a ``manifest.json`` recording the resolved configuration,
library versions, seed and wall time.

Exit codes: 0 success, 1 computational failure, 2 usage or configuration
error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import platform
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ContractViolation, NotFoundError, PreconditionError, ThurstonOptError, ValidationError

log = logging.getLogger("thurstonopt")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


@dataclass
class RunConfig:
    rule: str = "pillow_lattes"
    level: int = 4
    lam: float = 0.0  # 0 means the rule's own expansion factor
    alpha: float = 1.0
    potential: str = "smooth:0"
    method: str = "howard"
    epsilon: float = 0.0  # 0 means 0.05 * range of the potential
    search_epsilon: float = 0.1
    r: float = 1.0
    theta: float = 1.0
    tau: float = 1.0
    kappa: float = 2.0
    rho: float = 0.0  # 0 means epsilon / 10
    trials: int = 20
    seed: int = 0
    threads: int = 0  # 0 means all available cores
    out: str = ""

    def validate(self):
        if self.level < 1 or self.level > 12:
            raise ValidationError("level must lie in 1..12")
        if self.lam < 0 or (self.lam and self.lam <= 1):
            raise ValidationError("lambda must exceed 1")
        if not 0 < self.alpha <= 1:
            raise ValidationError("alpha must lie in (0, 1]")
        for name in ("epsilon", "rho"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if not 0 < self.search_epsilon < 1:
            raise ValidationError("search_epsilon must lie in (0, 1)")
        for name in ("r", "theta", "tau", "kappa"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.trials < 0 or self.threads < 0:
            raise ValidationError("trials and threads must be >= 0")
        return self


def _coerce(name, value):
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    try:
        if kind in ("int", int):
            return int(value)
        if kind in ("float", float):
            return float(value)
    except ValueError as exc:
        raise ValidationError(f"config key {name!r}: {exc}") from None
    return str(value)


def resolve_config(args):
    """Defaults, then the config file's ``[run]`` section, then explicit flags."""
    values = asdict(RunConfig())
    if getattr(args, "config", None):
        parser = configparser.ConfigParser()
        if not parser.read(args.config):
            raise ValidationError(f"cannot read config file {args.config}")
        if parser.has_section("run"):
            for key, raw in parser.items("run"):
                key = key.replace("-", "_")
                if key not in values:
                    raise ValidationError(f"unknown config key {key!r}")
                values[key] = _coerce(key, raw)
    for key in values:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = _coerce(key, flag)
    return RunConfig(**values).validate()


# -- helpers ----------------------------------------------------------------------


def _rule(cfg):
    from dataclasses import replace

    from .subdivision import load_rule

    rule = load_rule(cfg.rule)
    return replace(rule, lam=cfg.lam) if cfg.lam else rule


def _table(cfg, rule, level=None):
    from .potential import discretize, parse_potential

    level = cfg.level if level is None else level
    return discretize(parse_potential(cfg.potential, rule), rule, level)


def _emit(report, cfg, name, started, extra_files=None):
    text = json.dumps(report, indent=2, sort_keys=True, default=_json_default)
    print(text)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.json").write_text(text + "\n")
        for fname, content in (extra_files or {}).items():
            (out / fname).write_text(content)
        manifest = {
            "version": 1,
            "command": name,
            "config": asdict(cfg),
            "seed": cfg.seed,
            "versions": _versions(),
            "wall_time_s": round(time.perf_counter() - started, 6),
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def _versions():
    import networkx
    import scipy

    return {
        "thurstonopt": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "networkx": networkx.__version__,
    }


def _finite(x):
    return None if x is None or not math.isfinite(x) else x


def _normalized(cfg, rule, graph, table):
    from .ergopt import calibrated_subaction, mane_normalize, maximizing_set, q_value

    res = q_value(graph, table, cfg.method)
    state = calibrated_subaction(graph, table, res.q)
    phi = mane_normalize(graph, table, state, res.q, tol=1e-9)
    K = maximizing_set(graph, phi)
    return res, state, phi, K


# -- subcommands ----------------------------------------------------------------------


def cmd_info(cfg, args):
    from .subdivision import refine
    from .symbolic import build_transition, count_words

    rule = _rule(cfg)
    A = build_transition(rule)
    levels = []
    for n in range(0, args.max_level + 1):
        dec = refine(rule, n, map_action=False)
        levels.append({"level": n, "tiles": dec.n_tiles, "edges": dec.n_edges, "vertices": dec.n_vertices,
                       "words": count_words(A, n) if n else 2})
    return {
        "rule": rule.name,
        "degree": rule.degree,
        "m": rule.post_count,
        "lambda": rule.lam,
        "symbols": rule.n_symbols,
        "critical_vertices": sorted(rule.critical_vertices),
        "levels": levels,
    }, {}


def cmd_refine(cfg, args):
    from .subdivision import refine, render_svg

    rule = _rule(cfg)
    dec = refine(rule, cfg.level)
    if args.format == "json":
        return dec.to_json(), {}
    svg = render_svg(dec)
    if not cfg.out:
        sys.stdout.write(svg)
        return None, {}
    name = f"{rule.name}_level{cfg.level}.svg"
    return {"rule": rule.name, "level": cfg.level, "tiles": dec.n_tiles, "svg": name}, {name: svg}


def cmd_sft(cfg, args):
    from .symbolic import build_transition, count_words

    rule = _rule(cfg)
    A = build_transition(rule)
    n = args.max_length
    return {
        "matrix": A.to_json(),
        "row_sums": A.row_sums.tolist(),
        "column_sums": A.column_sums.tolist(),
        "word_counts": {k: count_words(A, k) for k in range(1, n + 1)},
        "trace": {k: A.trace_power(k) for k in range(1, n + 1)},
    }, {}


def cmd_q(cfg, args):
    from .ergopt import q_value
    from .potential import holder_seminorm_estimate, tile_diameter
    from .symbolic import cylinder_graph

    rule = _rule(cfg)
    graph = cylinder_graph(rule, cfg.level)
    table = _table(cfg, rule)
    res = q_value(graph, table, cfg.method)
    semi = holder_seminorm_estimate(table, cfg.alpha).seminorm_est
    band = semi * tile_diameter(rule, cfg.level) ** cfg.alpha
    out = res.to_json()
    out.update(potential=cfg.potential, bounds={"error_band": band, "seminorm_estimate": semi})
    return out, {}


def cmd_subaction(cfg, args):
    from .symbolic import cylinder_graph

    rule = _rule(cfg)
    graph = cylinder_graph(rule, cfg.level)
    table = _table(cfg, rule)
    res, state, phi, K = _normalized(cfg, rule, graph, table)
    report = {
        "level": cfg.level,
        "q": res.q,
        "cycle": res.cycle,
        "residual": state.residual,
        "iterations": state.iterations,
        "normalized_max": phi.max_value,
        "maximizing_set": sorted(K),
    }
    if args.full:
        report["u"] = state.u.tolist()
        report["normalized_nodes"] = phi.node_values.tolist()
    return report, {}


def cmd_close(cfg, args):
    from .closing import bound_by_gap, bq_search, local_anosov_close
    from .ergopt import maximizing_subgraph_arcs
    from .symbolic import cylinder_graph, random_closed_word

    rule = _rule(cfg)
    graph = cylinder_graph(rule, cfg.level)
    if args.mode == "anosov":
        rng = np.random.default_rng(cfg.seed)
        u = random_closed_word(graph.A, args.length, rng)
        k = min(args.context, len(u))
        word = u + u[:k]
        rep = local_anosov_close(rule, word, len(u), eta=args.eta)
        out = rep.to_json()
        out["pseudo_orbit"] = word
        return out, {}
    table = _table(cfg, rule)
    _, _, phi, K = _normalized(cfg, rule, graph, table)
    tight = maximizing_subgraph_arcs(graph, phi, K)
    if args.mode == "bq":
        res = bq_search(graph, K, cfg.kappa, cfg.search_epsilon, tight)
    else:
        res = bound_by_gap(graph, K, cfg.r, cfg.theta, cfg.alpha, cfg.tau, cfg.search_epsilon, cfg.kappa, tight)
    out = res.to_json()
    out["points"] = res.orbit.points.tolist()
    out["faces"] = res.orbit.faces.tolist()
    out["gap"] = _finite(res.orbit.gap)
    return out, {}


def _pipeline(cfg):
    from .closing import GapSpec
    from .potential import parse_potential
    from .tpo import tpo_pipeline

    rule = _rule(cfg)
    phi = parse_potential(cfg.potential, rule)
    return rule, tpo_pipeline(phi, rule, cfg.level, cfg.epsilon or None, cfg.alpha, GapSpec(cfg.r, cfg.theta),
                              cfg.tau, cfg.kappa, cfg.search_epsilon)


def cmd_tpo(cfg, args):
    from .symbolic import cylinder_graph
    from .tpo import locking_test

    rule, rep = _pipeline(cfg)
    graph = cylinder_graph(rule, cfg.level)
    rho = cfg.rho or rep.epsilon / 10
    ok, n, norm = locking_test(graph, rep.table, cfg.trials, rho, cfg.seed, rep.target_cycle,
                               workers=cfg.threads or None)
    rep.trials, rep.successes = n, ok
    out = rep.to_json()
    out["locking"].update(rho=rho, largest_norm=norm)
    return out, {}


def cmd_sweep(cfg, args):
    from .symbolic import cylinder_graph
    from .tpo import zero_temperature_sweep

    rule, rep = _pipeline(cfg)
    graph = cylinder_graph(rule, cfg.level)
    ts = [float(t) for t in args.t.split(",")] if args.t else [2.0**k for k in range(9)]
    rows = zero_temperature_sweep(graph, rep.table, ts, rep.orbit_word)
    csv = "t,distance\n" + "".join(f"{t!r},{d!r}\n" for t, d in rows)
    return {"level": cfg.level, "orbit": list(rep.orbit_word), "sweep": [{"t": t, "distance": d} for t, d in rows]}, {
        "sweep.csv": csv
    }


def cmd_selftest(cfg, args):
    from .selftest import run_selftest

    results = run_selftest()
    failed = [r for r in results if not r["ok"]]
    report = {"checks": results, "passed": len(results) - len(failed), "failed": len(failed)}
    if failed:
        raise _SelftestFailure(report)
    return report, {}


class _SelftestFailure(ThurstonOptError):
    def __init__(self, report):
        super().__init__(f"{report['failed']} self-test checks failed")
        self.report = report


COMMANDS = {
    "info": cmd_info,
    "refine": cmd_refine,
    "sft": cmd_sft,
    "q": cmd_q,
    "subaction": cmd_subaction,
    "close": cmd_close,
    "tpo": cmd_tpo,
    "sweep": cmd_sweep,
    "selftest": cmd_selftest,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="sectioned key=value file; keys of [run] mirror the flags")
    common.add_argument("--rule", help="built-in rule name or rule file")
    common.add_argument("--level", type=int)
    common.add_argument("--lambda", dest="lam", type=float, help="visual-metric expansion factor")
    common.add_argument("--alpha", type=float)
    common.add_argument("--potential", help="const:C, coord:x, smooth:SEED, holder:SEED[:ALPHA], table:PATH")
    common.add_argument("--method", choices=("howard", "karp", "brute"))
    common.add_argument("--epsilon", type=float, help="perturbation size (default 0.05 * range)")
    common.add_argument("--search-epsilon", dest="search_epsilon", type=float)
    common.add_argument("--r", type=float)
    common.add_argument("--theta", type=float)
    common.add_argument("--tau", type=float)
    common.add_argument("--kappa", type=float)
    common.add_argument("--rho", type=float, help="locking perturbation size (default epsilon / 10)")
    common.add_argument("--trials", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="worker threads for locking trials (default: all cores)")
    common.add_argument("--out", help="directory for reports and the run manifest")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="thurstonopt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("info", parents=[common], help="rule summary and cell counts")
    p.add_argument("name", nargs="?", help="rule name (same as --rule)")
    p.add_argument("--max-level", dest="max_level", type=int, default=3)
    p = sub.add_parser("refine", parents=[common], help="level-n cell decomposition as JSON or SVG")
    p.add_argument("--format", choices=("json", "svg"), default="json")
    p = sub.add_parser("sft", parents=[common], help="transition matrix, word counts and traces")
    p.add_argument("--max-length", dest="max_length", type=int, default=6)
    sub.add_parser("q", parents=[common], help="finite-level maximal potential energy")
    p = sub.add_parser("subaction", parents=[common], help="calibrated sub-action and normalization")
    p.add_argument("--full", action="store_true", help="include per-node vectors")
    p = sub.add_parser("close", parents=[common], help="closing procedures")
    p.add_argument("mode", choices=("bq", "anosov", "gap"))
    p.add_argument("--length", type=int, default=8, help="pseudo-orbit length (anosov)")
    p.add_argument("--context", type=int, default=3, help="symbols shared by x and f^l x (anosov)")
    p.add_argument("--eta", type=float, default=1e-3, help="critical-vertex clearance (anosov)")
    sub.add_parser("tpo", parents=[common], help="perturbation toward a periodic orbit plus locking trials")
    p = sub.add_parser("sweep", parents=[common], help="zero-temperature sweep on the perturbed potential")
    p.add_argument("--t", help="comma-separated inverse temperatures (default 1,2,4,...,256)")
    sub.add_parser("selftest", parents=[common], help="run the invariant checks")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "info" and args.name:
        args.rule = args.rule or args.name
    started = time.perf_counter()
    try:
        cfg = resolve_config(args)
        report, files = COMMANDS[args.command](cfg, args)
        if report is not None:
            _emit(report, cfg, args.command, started, files)
    except _SelftestFailure as exc:
        print(json.dumps(exc.report, indent=2, sort_keys=True, default=_json_default))
        return EXIT_FAILURE
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (NotFoundError, ValidationError, ContractViolation, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ThurstonOptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK

