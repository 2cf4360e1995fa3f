"""Command-line entry point.

Every command that produces a report also writes a manifest recording the
argv, the seed and the graph hashes; ``repro`` re-runs a manifest and checks
that the report hash is unchanged.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import random
import secrets
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .builders import (
    audit_depth_robust,
    check_amenable,
    layered_stack,
    line_graph,
    random_static_spec,
    sample_fig4,
    sample_fig5,
    superconcentrator,
)
from .errors import PebblemarkError, RangeError
from .evaluator import evaluate, format_vector, graph_hash, required_capacity
from .game import GameConfig, attacker_by_name, default_inputs, run_adaptive, run_single
from .graph import Dag, DynamicGraphSpec, parse, serialize
from .labeling import Oracle, output
from .memory import TieredMemory
from .pebbling import (
    AttackParams,
    World,
    best_generic,
    cc,
    generic_attack,
    greedy_discard,
    keep_all,
    serialize_trace,
)
from .reports import canonical_json, loglog_slope, plot_emit, report_hash
from .rng import as_seed, derive

FAMILIES = ("line", "grates", "superconc", "fig4", "fig5")


def resolve_seed(arg: str | None) -> str:
    """Explicit flag, then PEBBLEMARK_SEED, else a fresh seed that is printed."""
    if arg:
        return arg
    env = os.environ.get("PEBBLEMARK_SEED")
    if env:
        return env
    fresh = secrets.token_hex(16)
    print(f"seed: {fresh}", file=sys.stderr)
    return fresh


def _hex(text: str, what: str) -> bytes:
    try:
        return bytes.fromhex(text)
    except ValueError:
        raise RangeError(f"{what} must be hex") from None


def _load_graph(path: str):
    return parse(Path(path).read_text())


def _file_hash(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _emit(args, report: dict, argv: list[str], seed: str | None, graph_files=(), seed_flag: str = "--seed") -> None:
    text = canonical_json(report)
    if seed is not None and seed_flag not in argv:
        # pin generated or environment seeds so the manifest replays exactly
        argv = argv + [seed_flag, seed]
    if args.report:
        Path(args.report).write_text(text)
        manifest = {
            "command": argv,
            "seed": seed,
            "graph_hashes": {p: _file_hash(p) for p in graph_files},
            "report_hash": report_hash(report),
            "version": __version__,
        }
        Path(args.manifest or args.report + ".manifest.json").write_text(canonical_json(manifest))
    if not args.report or getattr(args, "json", False):
        sys.stdout.write(text)


# -- graph ------------------------------------------------------------------------------


def cmd_graph_build(args, argv):
    seed = resolve_seed(args.seed) if args.family in ("grates", "fig4", "fig5") else None
    fam = args.family
    if fam == "line":
        obj = line_graph(args.n)
    elif fam == "grates":
        obj = layered_stack(args.n, args.eps, as_seed(seed)).dag
    elif fam == "superconc":
        obj = superconcentrator(args.n)
    elif fam == "fig4":
        obj = sample_fig4(args.n, args.eps, args.k, as_seed(seed)).spec
    else:
        obj = sample_fig5(args.n, args.eps, args.k, as_seed(seed)).spec
    text = serialize(obj)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if seed is not None and args.out:
        print(f"seed: {seed}", file=sys.stderr)
    return 0


def cmd_graph_verify(args, argv):
    g = _load_graph(args.file)
    if args.check == "amenable":
        if not isinstance(g, DynamicGraphSpec):
            raise RangeError("amenability needs a dynamic graph")
        rep = check_amenable(g, trials=args.trials, seed=as_seed(resolve_seed(args.seed)))
        body = {"check": "amenable", "passed": rep.passed, "clauses": {k: {"passed": ok, "detail": d} for k, (ok, d) in rep.clauses.items()}}
    elif args.check == "superconc":
        from .audits import superconcentrator_audit

        n_io = args.n_io or len(g.sources())
        ok, detail = superconcentrator_audit(g, n_io, args.trials, as_seed(resolve_seed(args.seed)))
        body = {"check": "superconc", "passed": ok, "detail": detail}
    else:
        from .builders import Stack

        if not isinstance(g, Dag):
            raise RangeError("depth-robustness audit needs a static graph")
        n_io = args.n_io or len(g.sources())
        prof = audit_depth_robust(Stack(g, n_io, 0), args.eps)
        body = {"check": "depth-robust", "passed": not prof.degraded, "gamma": prof.gamma, "c": prof.c, "d_target": prof.d_target, "estimated": True}
    sys.stdout.write(canonical_json(body))
    return 0 if body["passed"] else 1


# -- pebble -----------------------------------------------------------------------------


def _run_strategy(graph, strategy: str, seed: bytes, eta: int | None, g: int | None):
    world = World(graph, Oracle(), derive(seed, "x"), derive(seed, "key"))
    k = graph.k if isinstance(graph, DynamicGraphSpec) else 1
    if strategy == "keep_all":
        tr = keep_all(world)
        return tr, cc(tr), None
    if strategy == "greedy_discard":
        tr = greedy_discard(world)
        return tr, cc(tr), None
    if eta is not None:
        p = AttackParams(graph.n, k, graph.indeg_bound, eta, g or AttackParams.balanced(graph.n, k, graph.indeg_bound, eta).g)
    else:
        _, p = best_generic(lambda: World(graph, Oracle(), derive(seed, "x"), derive(seed, "key")), graph.n, k, graph.indeg_bound)
    tr, rep = generic_attack(World(graph, Oracle(), derive(seed, "x"), derive(seed, "key")), p)
    cc(tr)  # legality check
    return tr, rep, p


def cmd_pebble_run(args, argv):
    seed = resolve_seed(args.seed)
    graph = _load_graph(args.graph)
    tr, rep, p = _run_strategy(graph, args.strategy, as_seed(seed), args.eta, args.g)
    trace_text = serialize_trace(tr)
    if args.trace:
        Path(args.trace).write_text(trace_text)
    report = {
        "kind": "pebble",
        "strategy": args.strategy,
        "n": graph.n,
        "cc": rep.cc,
        "rounds": rep.rounds,
        "max_pebbles": rep.max_pebbles,
        "params": None if p is None else {"eta": p.eta, "g": p.g, "e": p.e, "d": p.d},
        "trace_hash": hashlib.sha256(trace_text.encode()).hexdigest(),
        "seed": seed,
    }
    _emit(args, report, argv, seed, [args.graph])
    return 0


def _suite_point(job):
    family, n, k_rule, seed, eps = job
    if family == "fig5":
        k = math.ceil(math.sqrt(n)) if k_rule == "sqrt" else int(k_rule)
        while n % k:
            k += 1
        spec = sample_fig5(n, eps, k, derive(seed, "graph", n)).spec
    else:
        spec = random_static_spec(n, derive(seed, "graph", n))
        k = 1
    rep, p = best_generic(lambda: World(spec, Oracle(), derive(seed, "x", n), derive(seed, "key", n)), spec.n, spec.k, spec.indeg_bound)
    return {"n": n, "k": k, "nodes": spec.n, "strategy": "generic", "cc": rep.cc, "eta": p.eta, "g": p.g}


def cost_trend(family: str, ns: list[int], seed: bytes, k_rule: str = "sqrt", eps: float = 0.5, jobs: int = 1) -> dict:
    jobs_list = [(family, n, k_rule, seed, eps) for n in ns]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_suite_point, jobs_list))
    else:
        rows = [_suite_point(j) for j in jobs_list]
    slope = loglog_slope([r["n"] for r in rows], [r["cc"] for r in rows]) if len(rows) > 1 else None
    return {"kind": "cc", "family": family, "rows": rows, "slope": slope}


def cmd_pebble_suite(args, argv):
    seed = resolve_seed(args.seed)
    ns = [int(v) for v in args.ns.split(",")]
    report = cost_trend(args.family, ns, as_seed(seed), args.k, args.eps, args.jobs)
    report["seed"] = seed
    _emit(args, report, argv, seed)
    return 0


# -- mhf --------------------------------------------------------------------------------


def cmd_mhf_eval(args, argv):
    spec = _load_graph(args.graph)
    x = _hex(args.input, "--input")
    if args.coins is None:
        coins_hex = secrets.token_hex(16)
        print(f"coins: {coins_hex}", file=sys.stderr)
    else:
        coins_hex = args.coins
    coins = _hex(coins_hex, "--coins")
    oracle = Oracle()
    if isinstance(spec, Dag):
        out = output(spec, oracle, x)
        report = {"kind": "mhf", "output": out.hex(), "trace_hash": None}
        if args.emit_output:
            print(out.hex())
        _emit(args, report, argv, None, [args.graph])
        return 0
    cap = args.cache or required_capacity(spec)
    res = evaluate(spec, oracle, x, coins, TieredMemory(cap, args.policy, oracle.width))
    trace_text = res.leakage.serialize()
    if args.trace:
        Path(args.trace).write_text(trace_text)
    if args.emit_output:
        print(res.output.hex())
    if args.vector:
        with open(args.vector, "a") as fh:
            fh.write(format_vector(spec, x, coins, res.output) + "\n")
    report = {
        "kind": "mhf",
        "graph_hash": graph_hash(spec),
        "input": x.hex(),
        "coins": coins.hex(),
        "cache": cap,
        "policy": args.policy,
        "output": res.output.hex(),
        "trace_hash": hashlib.sha256(trace_text.encode()).hexdigest(),
        "events": len(res.leakage.events),
    }
    if args.report or args.json:
        _emit(args, report, argv, coins_hex, [args.graph], "--coins")
    return 0


# -- game -------------------------------------------------------------------------------


def game_report(spec, attacker: str, trials: int, mode: str, evaluator: str, seed: str, jobs: int = 1, policy: str = "lru", show_rounds: bool = True) -> dict:
    rounds = 1
    kind = mode
    if mode.startswith("adaptive"):
        kind, _, r = mode.partition(":")
        rounds = int(r or 1)
    cfg = GameConfig(trials, mode=kind, rounds=rounds, evaluator=evaluator, seed=as_seed(seed), policy=policy, show_rounds=show_rounds)
    att = attacker_by_name(attacker, derive(as_seed(seed), "attacker"))
    if kind == "single":
        x0, x1 = default_inputs()
        res = run_single(cfg, att, x0, x1, spec, jobs=jobs)
    else:
        res = run_adaptive(cfg, att, spec, jobs=jobs)
    est = res.estimate
    return {
        "kind": "game",
        "attacker": attacker,
        "mode": kind,
        "rounds": rounds,
        "evaluator": evaluator,
        "trials": est.trials,
        "wins": est.wins,
        "advantage": est.advantage,
        "ci": {"method": est.method, "level": est.level, "win_rate": list(est.win_ci), "advantage": list(est.advantage_ci)},
        "seed": seed,
        "graph_hash": graph_hash(spec),
        "transcript_hash": res.transcript_digest(),
    }


def cmd_game_run(args, argv):
    seed = resolve_seed(args.seed)
    spec = _load_graph(args.graph)
    if not isinstance(spec, DynamicGraphSpec):
        raise RangeError("the game needs a dynamic graph")
    report = game_report(spec, args.attacker, args.trials, args.mode, args.evaluator, seed, args.jobs, args.policy, not args.hide_rounds)
    _emit(args, report, argv, seed, [args.graph])
    return 0


# -- plot / repro ----------------------------------------------------------------------


def cmd_plot(args, argv):
    report = json.loads(Path(args.report_file).read_text())
    if report.get("kind") == "game" and args.kind == "advantage":
        report = {"kind": "advantage", "rows": [{"attacker": report["attacker"], "evaluator": report["evaluator"], "advantage": report["advantage"], "ci_low": report["ci"]["advantage"][0], "ci_high": report["ci"]["advantage"][1]}]}
    text = plot_emit(report, args.kind)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_repro(args, argv):
    manifest = json.loads(Path(args.manifest_file).read_text())
    for path, digest in manifest.get("graph_hashes", {}).items():
        if _file_hash(path) != digest:
            raise RangeError(f"input {path} changed since the manifest was written")
    cmd = list(manifest["command"])
    out = Path(args.out or "repro-report.json")
    cmd = _replace_flag(cmd, "--report", str(out))
    cmd = _replace_flag(cmd, "--manifest", str(out) + ".manifest.json")
    rc = main(cmd)
    if rc:
        return rc
    got = report_hash(json.loads(out.read_text()))
    same = got == manifest["report_hash"]
    print(f"report hash {got} {'matches' if same else 'DIFFERS from ' + manifest['report_hash']}")
    return 0 if same else 1


def _replace_flag(cmd: list[str], flag: str, value: str) -> list[str]:
    out = list(cmd)
    if flag in out:
        out[out.index(flag) + 1] = value
    else:
        out += [flag, value]
    return out


# -- parser -----------------------------------------------------------------------------


def _report_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--report", help="write the JSON report here (plus a manifest)")
    p.add_argument("--manifest", help="manifest path (default: REPORT.manifest.json)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pebblemark", description="Dynamic-graph memory-hard function toolkit.")
    ap.add_argument("--version", action="version", version=f"pebblemark {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    graph = sub.add_parser("graph", help="build and verify graphs").add_subparsers(dest="action", required=True)
    b = graph.add_parser("build")
    b.add_argument("--family", choices=FAMILIES, required=True)
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--eps", type=float, default=0.5)
    b.add_argument("--k", type=int, default=1)
    b.add_argument("--seed")
    b.add_argument("--out")
    b.set_defaults(func=cmd_graph_build)
    v = graph.add_parser("verify")
    v.add_argument("--check", choices=("amenable", "superconc", "depth-robust"), required=True)
    v.add_argument("--n-io", type=int)
    v.add_argument("--eps", type=float, default=0.5)
    v.add_argument("--trials", type=int, default=64)
    v.add_argument("--seed")
    v.add_argument("file")
    v.set_defaults(func=cmd_graph_verify)

    peb = sub.add_parser("pebble", help="pebbling strategies and cost curves").add_subparsers(dest="action", required=True)
    r = peb.add_parser("run")
    r.add_argument("--graph", required=True)
    r.add_argument("--strategy", choices=("keep_all", "greedy_discard", "generic"), default="generic")
    r.add_argument("--eta", type=int)
    r.add_argument("--g", type=int)
    r.add_argument("--seed")
    r.add_argument("--trace")
    _report_flags(r)
    r.set_defaults(func=cmd_pebble_run)
    s = peb.add_parser("suite")
    s.add_argument("--family", choices=("fig5", "static"), required=True)
    s.add_argument("--ns", required=True, help="comma-separated N values")
    s.add_argument("--k", default="sqrt", help="'sqrt' or an integer")
    s.add_argument("--eps", type=float, default=0.5)
    s.add_argument("--seed")
    s.add_argument("--jobs", type=int, default=1)
    _report_flags(s)
    s.set_defaults(func=cmd_pebble_suite)

    mhf = sub.add_parser("mhf", help="evaluate the function").add_subparsers(dest="action", required=True)
    e = mhf.add_parser("eval")
    e.add_argument("--graph", required=True)
    e.add_argument("--input", required=True, help="hex")
    e.add_argument("--coins", help="hex; generated and printed if absent")
    e.add_argument("--cache", type=int)
    e.add_argument("--policy", choices=("lru", "fifo"), default="lru")
    e.add_argument("--trace")
    e.add_argument("--vector", help="append a test vector line to this file")
    e.add_argument("--emit-output", action="store_true")
    e.add_argument("--json", action="store_true")
    _report_flags(e)
    e.set_defaults(func=cmd_mhf_eval)

    game = sub.add_parser("game", help="leakage-indistinguishability game").add_subparsers(dest="action", required=True)
    g = game.add_parser("run")
    g.add_argument("--graph", required=True)
    g.add_argument("--attacker", default="exact")
    g.add_argument("--trials", type=int, default=1000)
    g.add_argument("--mode", default="single", help="single | adaptive:R")
    g.add_argument("--evaluator", choices=("full", "hybrid", "noshuffle"), default="full")
    g.add_argument("--policy", choices=("lru", "fifo"), default="lru")
    g.add_argument("--hide-rounds", action="store_true")
    g.add_argument("--seed")
    g.add_argument("--jobs", type=int, default=1)
    g.add_argument("--json", action="store_true")
    _report_flags(g)
    g.set_defaults(func=cmd_game_run)

    pl = sub.add_parser("plot", help="columnar data from a report")
    pl.add_argument("--kind", choices=("cc", "advantage"), required=True)
    pl.add_argument("--out")
    pl.add_argument("report_file")
    pl.set_defaults(func=cmd_plot)

    rp = sub.add_parser("repro", help="re-run a manifest and compare report hashes")
    rp.add_argument("--out")
    rp.add_argument("manifest_file")
    rp.set_defaults(func=cmd_repro)
    return ap


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, argv)
    except PebblemarkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
