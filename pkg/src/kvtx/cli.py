"""Command-line front end.

Exit status: 0 when the outcome is the expected one, 1 when a checked property
fails (a counterexample, a conformance violation, a mismatching anomaly
matrix), 2 for usage and input errors.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import anomalies, deps, engine, robustness
from .models import MODELS, normalize_model
from .protocols import clocksi_check_run, cops_check_run
from .scenario import ParseError, load_scenario
from .serialize import dumps_store, load_store
from .store import KVStore, StoreError, format_fingerprint

EXIT_OK, EXIT_VIOLATED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _model(name: str) -> str:
    try:
        return normalize_model(name)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def format_store(K: KVStore) -> str:
    rows = []
    for k, vs in K.items():
        cells = " ".join(
            f"({v.value},{v.writer},{{{','.join(sorted(map(str, v.readers)))}}})" for v in vs
        )
        rows.append(f"  {k}: {cells}")
    return "\n".join(rows)


def _load_store(path: str) -> KVStore:
    try:
        return load_store(path)
    except OSError as e:
        raise UsageError(f"{path}: {e.strerror}") from None
    except StoreError as e:
        raise UsageError(f"{path}: {e}") from None


# -- commands ----------------------------------------------------------------------


def cmd_run(args) -> int:
    try:
        sc = load_scenario(args.program)
    except OSError as e:
        raise UsageError(f"{args.program}: {e.strerror}") from None
    except ParseError as e:
        raise UsageError(f"{args.program}: {e}") from None
    model = args.model or (sc.model and _model(sc.model))
    if model is None:
        raise UsageError("no model given on the command line or in the scenario")
    bound = args.max_steps if args.max_steps is not None else (sc.bound or engine.DEFAULT_MAX_STEPS)
    ex = engine.explore(
        model, sc.clients, sc.keys or None, bound, every_post_view=args.every_post_view
    )
    finals = sorted(ex.finals, key=lambda K: K.canonical())
    classes: dict = {}
    for K in finals:
        classes.setdefault(robustness.canonical_up_to_clients(K), []).append(K)
    print(
        f"model {model}: {len(finals)} final store(s), {len(classes)} up to client renaming"
        + (" (bound reached)" if ex.partial else "")
    )
    if not args.all:
        finals = sorted(classes, key=lambda K: K.canonical())
    if args.list_finals:
        for i, K in enumerate(finals, 1):
            print(f"final {i}:")
            print(format_store(K))
    if args.traces:
        for st in ex.final_states:
            print("trace:")
            for c in ex.trace_to(st):
                print(f"  {c.client}: {c}")
    if args.find_store:
        target = _load_store(args.find_store)
        hit = next((st for st in ex.final_states if st.store == target), None)
        if hit is None:
            print(f"{args.find_store}: not reachable within the bound")
            return EXIT_VIOLATED
        print(f"{args.find_store}: reachable")
        for c in ex.trace_to(hit):
            print(f"  {c.client}: {c}")
    return EXIT_OK


def cmd_check_robust(args) -> int:
    lib = robustness.LIBRARIES[args.library]()
    if args.ops < 1:
        raise UsageError("--ops must be at least 1")
    rep = robustness.check_robust(args.model, lib, args.ops, args.clients, args.wsi_safe)
    print(rep.summary())
    if args.witness and not rep.robust:
        Path(args.witness).write_text(dumps_store(rep.store) + "\n")
    if not rep.robust:
        return EXIT_VIOLATED
    if args.wsi_safe and not rep.all_wsi_safe:
        return EXIT_VIOLATED
    return EXIT_OK


def _cops_one(a):
    return cops_check_run(*a)


def _clocksi_one(a):
    return clocksi_check_run(*a)


def _simulate(args, one, params) -> int:
    seeds = range(args.seed, args.seed + args.runs)
    jobs = [(s, *params) for s in seeds]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            reports = list(pool.map(one, jobs, chunksize=16))
    else:
        reports = [one(j) for j in jobs]
    if args.dump_trace:
        Path(args.dump_trace).write_text("\n".join(reports[0].trace) + "\n")
    bad = [r for r in reports if not r.conformant or r.converged is False]
    commits = sum(r.commits for r in reports)
    if args.check:
        for r in bad[:5]:
            print(r.summary())
        print(f"{len(reports)} run(s), {commits} commits checked, {len(bad)} non-conformant")
        return EXIT_VIOLATED if bad else EXIT_OK
    for r in reports:
        print(f"seed {r.seed}: {r.commits} commits")
    return EXIT_OK


def cmd_simulate_cops(args) -> int:
    params = (args.clients, args.replicas, args.ops, args.keys, not args.skip_dependency_check)
    return _simulate(args, _cops_one, params)


def cmd_simulate_clocksi(args) -> int:
    params = (args.clients, args.shards, args.ops, args.skew, args.keys, args.commit_rule)
    return _simulate(args, _clocksi_one, params)


def store_to_dot(K: KVStore) -> str:
    lines = ["digraph dependencies {", "  node [shape=box];"]
    for t in sorted(K.txids()):
        label = f"{t}\\n{format_fingerprint(K.fingerprint_of(t))}"
        lines.append(f'  "{t}" [label="{label}"];')
    for a, lab, b in deps.edge_list(K):
        lines.append(f'  "{a}" -> "{b}" [label="{lab}"];')
    lines.append("}")
    return "\n".join(lines)


def cmd_graph(args) -> int:
    K = _load_store(args.store)
    print(store_to_dot(K))
    if args.cycle:
        cyc = deps.find_cycle(K)
        print("// cycle: " + (" ".join(f"{a} -{lab}->" for a, lab, _ in cyc) + f" {cyc[0][0]}" if cyc else "none"))
    return EXIT_OK


def cmd_check_store(args) -> int:
    K = _load_store(args.store)
    models = [args.model] if args.model else list(MODELS)
    for m in models:
        print(f"{m:>4}: {'admitted' if engine.admits(m, K) else 'rejected'}")
    print(f"serialisable: {deps.acyclic(K)}")
    return EXIT_OK


def cmd_anomalies(args) -> int:
    if args.fixtures:
        try:
            stores = anomalies.load_fixtures(args.fixtures)
        except OSError as e:
            raise UsageError(f"{e.filename}: {e.strerror}") from None
        except StoreError as e:
            raise UsageError(str(e)) from None
    else:
        stores = anomalies.anomaly_stores()
    matrix = anomalies.anomaly_matrix(stores)
    print(anomalies.format_matrix(matrix))
    bad = anomalies.mismatches(matrix)
    if bad:
        print("unexpected: " + ", ".join(f"{n} under {m}" for n, m in bad))
        return EXIT_VIOLATED
    print("matrix matches the expected table")
    return EXIT_OK


def cmd_dump_anomalies(args) -> int:
    out = Path(args.directory)
    out.mkdir(parents=True, exist_ok=True)
    for name, K in anomalies.anomaly_stores().items():
        (out / f"{name}.json").write_text(dumps_store(K) + "\n")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kvtx", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="enumerate final stores of a scenario under a model")
    r.add_argument("--model", type=_model)
    r.add_argument("--program", required=True, help="scenario file")
    r.add_argument("--max-steps", type=int, help="bound on commits along any path")
    r.add_argument("--list-finals", action="store_true")
    r.add_argument("--all", action="store_true", help="list renamings of the same store separately")
    r.add_argument("--traces", action="store_true", help="print one commit trace per final state")
    r.add_argument("--every-post-view", action="store_true", help="branch on all post-views")
    r.add_argument("--find-store", metavar="FILE", help="exit 1 unless this store is reachable")
    r.set_defaults(fn=cmd_run)

    c = sub.add_parser("check-robust", help="bounded robustness of a library against SER")
    c.add_argument("--model", type=_model, required=True)
    c.add_argument("--library", choices=sorted(robustness.LIBRARIES), required=True)
    c.add_argument("--ops", type=int, required=True, help="bound on library calls")
    c.add_argument("--clients", type=int, default=2)
    c.add_argument("--wsi-safe", action="store_true", help="also require every store to be WSI-safe")
    c.add_argument("--witness", metavar="FILE", help="write the non-serialisable store as JSON")
    c.set_defaults(fn=cmd_check_robust)

    for name, fn, place in (
        ("simulate-cops", cmd_simulate_cops, "replicas"),
        ("simulate-clocksi", cmd_simulate_clocksi, "shards"),
    ):
        s = sub.add_parser(name, help=f"seeded runs of the {name.split('-')[1]} simulator")
        s.add_argument("--clients", type=int, default=2)
        s.add_argument(f"--{place}", type=int, default=2)
        s.add_argument("--ops", type=int, default=6)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--runs", type=int, default=1, help="consecutive seeds to run")
        s.add_argument("--jobs", type=int, default=1, help="worker processes")
        s.add_argument("--check", action="store_true", help="check every commit")
        s.add_argument("--dump-trace", metavar="FILE", help="write the first run's schedule")
        s.set_defaults(fn=fn)
    sc = sub.choices["simulate-cops"]
    sc.add_argument("--keys", type=int, default=2)
    sc.add_argument("--skip-dependency-check", action="store_true", help="mutant: deliver eagerly")
    sk = sub.choices["simulate-clocksi"]
    sk.add_argument("--keys", type=int, default=None)
    sk.add_argument("--skew", type=int, default=5)
    sk.add_argument("--commit-rule", choices=("max", "min"), default="max")

    g = sub.add_parser("graph", help="dependency graph of a store in dot format")
    g.add_argument("--store", required=True)
    g.add_argument("--cycle", action="store_true", help="append the shortest cycle as a comment")
    g.set_defaults(fn=cmd_graph)

    k = sub.add_parser("check-store", help="which models admit a store")
    k.add_argument("--store", required=True)
    k.add_argument("--model", type=_model)
    k.set_defaults(fn=cmd_check_store)

    a = sub.add_parser("anomalies", help="admission matrix of the eight anomaly stores")
    a.add_argument("--fixtures", help="directory of <name>.json stores (default: built in)")
    a.set_defaults(fn=cmd_anomalies)

    d = sub.add_parser("dump-anomalies", help="write the anomaly stores as JSON files")
    d.add_argument("directory")
    d.set_defaults(fn=cmd_dump_anomalies)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"kvtx: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
