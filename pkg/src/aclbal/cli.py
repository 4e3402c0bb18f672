"""``aclbal`` command-line front end.

Exit status: 0 on success, 1 when a problem is infeasible or a benchmark's
oracle cross-check fails, 2 on unreadable or malformed input.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import formats
from .balancer import STRATEGIES, InfeasibleError, balance
from .bench import KINDS, BenchConfig, OracleMismatchError, bench_throughput, scaling_curve
from .lpm import Dir24Tables, LpmError, format_route_results, parse_routes
from .lpm_acl import LpmAclTables
from .rfc import DEEP_TREE, DEFAULT_TREE, rfc_build
from .rules import LinearClassifier, parse_rules, serialize_rules
from .simulator import (LoadKind, LoadModel, generate_topology, provision_controllers,
                        run_episode)
from .workload import keys_array, random_addresses, random_keys, random_prefixes, random_ruleset

TREES = {"flat": DEFAULT_TREE, "deep": DEEP_TREE}


class InputError(Exception):
    pass


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _counts(text: str) -> tuple[int, ...]:
    try:
        out = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if any(n < 1 for n in out):
        raise argparse.ArgumentTypeError("rule counts must be positive")
    return out


def _kinds(text: str) -> tuple[str, ...]:
    out = tuple(text.split(","))
    bad = [k for k in out if k not in KINDS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown classifier {bad[0]!r}; choose from {KINDS}")
    return out


def cmd_classify(args) -> int:
    rules = parse_rules(_read(args.rules))
    keys = formats.parse_keys(_read(args.keys))
    if args.algo == "linear":
        ids = [LinearClassifier(rules).classify(k) for k in keys]
    elif args.algo == "rfc":
        tables = rfc_build(rules, TREES[args.tree])
        ids = tables.classify_batch(keys_array(keys)).tolist()
    else:
        tables = LpmAclTables(rules)
        ids = [tables.classify(k) for k in keys]
    _write(args.output, formats.format_classify_results(ids))
    return 0


def cmd_route(args) -> int:
    table = Dir24Tables(max_tbl8=args.max_tbl8)
    for prefix, ident in parse_routes(_read(args.routes)):
        table.add_prefix(prefix, ident)
    addrs = np.array(formats.parse_addresses(_read(args.keys)), dtype=np.uint32)
    ids, reads = table.lookup_bulk(addrs)
    _write(args.output, format_route_results(addrs, ids, reads))
    return 0


def cmd_rfc_report(args) -> int:
    tables = rfc_build(parse_rules(_read(args.rules)), TREES[args.tree])
    _write(args.output, tables.report_csv())
    return 0


def _bench_config(args) -> BenchConfig:
    return BenchConfig(kinds=args.algo, rule_counts=args.rules, key_count=args.keys,
                       threads=args.threads, warmup=args.warmup, measure=args.measure,
                       seed=args.seed, long_fraction=args.long_fraction, rounds=args.rounds)


def cmd_bench(args) -> int:
    _write(args.output, bench_throughput(_bench_config(args)).to_csv())
    return 0


def cmd_scaling(args) -> int:
    _write(args.output, scaling_curve(_bench_config(args)).to_csv())
    return 0


def cmd_balance(args) -> int:
    graph, controllers, current = formats.load_topology(_read(args.topology))
    plan = balance(graph, controllers, current, args.strategy)
    if args.format == "csv":
        _write(args.output, plan.summary_csv())
    else:
        _write(args.output, plan.to_json())
        if args.summary:
            _write(args.summary, plan.summary_csv())
    return 0


def cmd_simulate(args) -> int:
    if args.topology:
        graph, controllers, current = formats.load_topology(_read(args.topology))
    else:
        graph = generate_topology(args.sensors, args.density, tuple(args.load_range),
                                  seed=args.seed)
        controllers = provision_controllers(graph, args.controllers)
        current = None
    model = LoadModel(LoadKind(args.model), args.step, args.spike_magnitude,
                      args.spike_probability, args.seed)
    log = run_episode(graph, controllers, model, args.epochs, current, args.strategy,
                      baseline=args.baseline)
    if args.format == "csv":
        _write(args.output, log.summary_csv())
    else:
        _write(args.output, log.to_jsonl())
        if args.summary:
            _write(args.summary, log.summary_csv())
    return 0


def cmd_generate(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.what == "rules":
        text = serialize_rules(random_ruleset(args.count, rng, args.long_fraction,
                                              wildcard_fraction=args.wildcard_fraction))
    elif args.what == "keys":
        rules = parse_rules(_read(args.rules)) if args.rules else random_ruleset(0, rng)
        text = formats.dump_keys(random_keys(rules, args.count, rng))
    elif args.what == "routes":
        text = "".join(f"{p} {i}\n" for i, p in
                       enumerate(random_prefixes(args.count, rng, args.long_fraction)))
    elif args.what == "addrs":
        near = [p for p, _ in parse_routes(_read(args.routes))] if args.routes else None
        text = formats.dump_addresses(random_addresses(args.count, rng, near))
    else:
        graph = generate_topology(args.count, args.density, seed=args.seed)
        controllers = provision_controllers(graph, args.controllers)
        text = formats.dump_topology(graph, controllers)
    _write(args.output, text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aclbal", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def out(sp):
        sp.add_argument("-o", "--output", help="output file (default: stdout)")

    sp = sub.add_parser("classify", help="classify a key CSV against a rule file")
    sp.add_argument("--rules", required=True, help="rule file")
    sp.add_argument("--keys", required=True, help="key CSV: proto,src,dst,sport,dport")
    sp.add_argument("--algo", choices=("linear", "rfc", "lpm-acl"), default="lpm-acl")
    sp.add_argument("--tree", choices=tuple(TREES), default="flat", help="RFC reduction tree")
    sp.add_argument("--format", choices=("csv",), default="csv")
    out(sp)
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("route", help="longest-prefix lookup of addresses")
    sp.add_argument("--routes", required=True, help="route file: <ip>/<len> <id> per line")
    sp.add_argument("--keys", "--addrs", dest="keys", required=True,
                    help="one dotted-quad per line")
    sp.add_argument("--max-tbl8", type=int, default=4096)
    sp.add_argument("--format", choices=("csv",), default="csv")
    out(sp)
    sp.set_defaults(func=cmd_route)

    sp = sub.add_parser("rfc-report", help="build RFC tables and report their sizes")
    sp.add_argument("--rules", required=True)
    sp.add_argument("--tree", choices=tuple(TREES), default="flat")
    sp.add_argument("--format", choices=("csv",), default="csv")
    out(sp)
    sp.set_defaults(func=cmd_rfc_report)

    for name, func, default_kinds, help_text in (
            ("bench", cmd_bench, ("linear", "lpm-acl"), "lookup throughput per classifier"),
            ("scaling", cmd_scaling, ("linear", "rfc", "lpm-acl"), "latency vs rule count")):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--algo", type=_kinds, default=default_kinds,
                        help=f"comma-separated subset of {','.join(KINDS)}")
        sp.add_argument("--rules", type=_counts, default=(100, 1_000, 10_000),
                        help="comma-separated rule counts")
        sp.add_argument("--keys", type=int, default=10_000, help="keys per cell")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--warmup", type=float, default=0.2, help="seconds")
        sp.add_argument("--measure", type=float, default=1.0, help="seconds")
        sp.add_argument("--rounds", type=int, default=10,
                        help="interleaved measurement rounds per cell")
        sp.add_argument("--long-fraction", type=float, default=0.05,
                        help="share of prefixes longer than 24 bits")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--format", choices=("csv",), default="csv")
        out(sp)
        sp.set_defaults(func=func)

    sp = sub.add_parser("balance", help="partition sensors and assign controllers")
    sp.add_argument("--topology", required=True, help="topology JSON")
    sp.add_argument("--strategy", choices=STRATEGIES, default="min",
                    help="which edge stage 1 cuts first")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--summary", help="also write the CSV summary here")
    out(sp)
    sp.set_defaults(func=cmd_balance)

    sp = sub.add_parser("simulate", help="rebalance across epochs of drifting load")
    sp.add_argument("--topology", help="topology JSON (default: generate one)")
    sp.add_argument("--sensors", type=int, default=20)
    sp.add_argument("--controllers", type=int, default=4)
    sp.add_argument("--density", type=float, default=0.2)
    sp.add_argument("--load-range", type=int, nargs=2, default=(1, 10), metavar=("LO", "HI"))
    sp.add_argument("--model", choices=[k.value for k in LoadKind], default="random-walk")
    sp.add_argument("--step", type=int, default=1)
    sp.add_argument("--spike-magnitude", type=int, default=10)
    sp.add_argument("--spike-probability", type=float, default=0.1)
    sp.add_argument("--epochs", type=int, default=10)
    sp.add_argument("--strategy", choices=STRATEGIES, default="min")
    sp.add_argument("--baseline", action="store_true",
                    help="also record migrations of a from-scratch rebalance")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    sp.add_argument("--summary", help="also write the CSV summary here")
    out(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("generate", help="write a seeded synthetic input file")
    sp.add_argument("what", choices=("rules", "keys", "routes", "addrs", "topology"))
    sp.add_argument("--count", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--long-fraction", type=float, default=0.05)
    sp.add_argument("--wildcard-fraction", type=float, default=0.0)
    sp.add_argument("--rules", help="for keys: draw half the keys inside these rules")
    sp.add_argument("--routes", help="for addrs: draw half the addresses inside these routes")
    sp.add_argument("--density", type=float, default=0.2)
    sp.add_argument("--controllers", type=int, default=4)
    out(sp)
    sp.set_defaults(func=cmd_generate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (InfeasibleError, OracleMismatchError) as exc:
        print(f"aclbal: {exc}", file=sys.stderr)
        return 1
    except (InputError, ValueError, KeyError, LpmError) as exc:
        print(f"aclbal: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        # reader went away (e.g. `| head`); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0


if __name__ == "__main__":
    sys.exit(main())
