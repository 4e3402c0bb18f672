"""Throughput and scaling benchmarks for the classifiers.

Every run first checks a sample of classifications against the linear
reference (or, for plain route lookup, a brute-force longest-match scan) and
refuses to report numbers if any disagree.  Timing covers batches of 64
lookups to amortise the clock read; for the per-key classifiers each lookup
is one Python call, while ``lpm-route`` times one vectorised bulk lookup per
batch.

The measure window is split into ``rounds`` equal rounds, interleaved
across rule counts.  ``mean_ns`` is
the lowest per-round mean (the ``timeit`` convention: interference from
other processes only ever adds time), while ``lookups_per_sec`` is the plain
total over the whole window.
"""

from __future__ import annotations

import io
import json
import threading
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .lpm import Dir24Tables
from .lpm_acl import LpmAclTables
from .rfc import DEFAULT_TREE, rfc_build
from .rules import LinearClassifier, classify_linear
from .workload import random_addresses, random_keys, random_prefixes, random_ruleset

KINDS = ("linear", "rfc", "lpm-acl", "lpm-route")
BATCH = 64


class OracleMismatchError(RuntimeError):
    pass


@dataclass
class BenchConfig:
    kinds: tuple[str, ...] = ("linear", "lpm-acl")
    rule_counts: tuple[int, ...] = (100, 1_000, 10_000)
    key_count: int = 10_000
    threads: int = 1
    warmup: float = 0.2
    measure: float = 1.0
    seed: int = 0
    long_fraction: float = 0.05
    check_fraction: float = 0.01
    max_tbl8: int = 4096
    rounds: int = 10

    def __post_init__(self):
        bad = [k for k in self.kinds if k not in KINDS]
        if bad:
            raise ValueError(f"unknown classifier kind(s) {bad}; choose from {KINDS}")
        if not (self.warmup > 0 and self.measure > 0):
            raise ValueError("warmup and measure durations must be positive")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        if self.rounds < 1:
            raise ValueError("rounds must be at least 1")
        if self.key_count < BATCH:
            raise ValueError(f"key_count must be at least {BATCH}")


@dataclass
class BenchRow:
    kind: str
    rules: int
    threads: int
    lookups: int
    lookups_per_sec: float
    per_thread_lookups_per_sec: float
    mean_ns: float
    p50_ns: float
    p99_ns: float
    accesses_per_lookup: float | None
    checked: int


@dataclass
class BenchResult:
    config: BenchConfig
    rows: list[BenchRow] = field(default_factory=list)

    def row(self, kind: str, rules: int) -> BenchRow:
        return next(r for r in self.rows if r.kind == kind and r.rules == rules)

    def to_csv(self) -> str:
        buf = io.StringIO()
        cfg = asdict(self.config)
        buf.write(f"# seed={self.config.seed} config={json.dumps(cfg, sort_keys=True)}\n")
        buf.write("kind,rules,threads,lookups,lookups_per_sec,per_thread_lookups_per_sec,"
                  "mean_ns,p50_ns,p99_ns,accesses_per_lookup,checked\n")
        for r in self.rows:
            acc = "" if r.accesses_per_lookup is None else f"{r.accesses_per_lookup:.4f}"
            buf.write(f"{r.kind},{r.rules},{r.threads},{r.lookups},{r.lookups_per_sec:.1f},"
                      f"{r.per_thread_lookups_per_sec:.1f},{r.mean_ns:.1f},{r.p50_ns:.1f},"
                      f"{r.p99_ns:.1f},{acc},{r.checked}\n")
        return buf.getvalue()


class _Workload:
    """Built classifier plus its key stream for one (kind, rule count) cell."""

    def __init__(self, kind: str, n: int, cfg: BenchConfig):
        self.kind = kind
        seed = [cfg.seed, n, KINDS.index(kind)]
        rng = np.random.default_rng(seed)
        if kind == "lpm-route":
            self.routes = random_prefixes(n, rng, cfg.long_fraction)
            self.table = Dir24Tables(max_tbl8=cfg.max_tbl8)
            for i, p in enumerate(self.routes):
                self.table.add_prefix(p, i)
            self.keys = random_addresses(cfg.key_count, rng, near=self.routes)
            return
        self.rules = random_ruleset(n, rng, cfg.long_fraction)
        self.keys = random_keys(self.rules, cfg.key_count, rng)
        if kind == "linear":
            self.clf = LinearClassifier(self.rules)
            self.one = self.clf.classify
        elif kind == "rfc":
            self.clf = rfc_build(self.rules, DEFAULT_TREE)
            self.one = self.clf.classify
        else:
            self.clf = LpmAclTables(self.rules, max_tbl8=cfg.max_tbl8)
            self.one = self.clf.classify

    def answer(self, i: int):
        if self.kind == "lpm-route":
            ident, _ = self.table.lookup(int(self.keys[i]))
            return ident
        got = self.one(self.keys[i])
        return got[0] if self.kind == "rfc" else got

    def expected(self, i: int):
        if self.kind == "lpm-route":
            addr = int(self.keys[i])
            best, best_len = None, -1
            for ident, p in enumerate(self.routes):
                if p.length > best_len and p.contains(addr):
                    best, best_len = ident, p.length
            return best
        return classify_linear(self.rules, self.keys[i])

    def accesses(self, sample: range) -> float | None:
        if self.kind == "lpm-route":
            _, reads = self.table.lookup_bulk(self.keys[sample.start:sample.stop])
            return float(np.mean(reads))
        if self.kind == "linear":
            return float(np.mean([self.clf.classify_counted(self.keys[i])[1] for i in sample]))
        if self.kind == "rfc":
            return float(np.mean([self.clf.classify(self.keys[i])[1] for i in sample]))
        return float(np.mean([self.clf.reads(self.keys[i]) for i in sample]))

    def run_batch(self, start: int) -> None:
        if self.kind == "lpm-route":
            self.table.lookup_bulk(self.keys[start:start + BATCH])
            return
        one = self.one
        for k in self.keys[start:start + BATCH]:
            one(k)


def _timed(work: _Workload, duration: float, offset: int) -> tuple[int, float, list[float]]:
    """Run batches for ``duration`` seconds; returns (lookups, seconds, per-batch ns/lookup)."""
    nbatches = len(work.keys) // BATCH
    samples = []
    total_ns = 0
    b = offset % nbatches
    deadline = time.perf_counter_ns() + int(duration * 1e9)
    while True:
        t0 = time.perf_counter_ns()
        work.run_batch(b * BATCH)
        t1 = time.perf_counter_ns()
        total_ns += t1 - t0
        samples.append((t1 - t0) / BATCH)
        b = (b + 1) % nbatches
        if t1 >= deadline:
            break
    return len(samples) * BATCH, total_ns / 1e9, samples


def _check(work: _Workload, cfg: BenchConfig) -> int:
    n = max(1, int(len(work.keys) * cfg.check_fraction))
    step = max(1, len(work.keys) // n)
    checked = 0
    for i in range(0, len(work.keys), step):
        got, want = work.answer(i), work.expected(i)
        if got != want:
            raise OracleMismatchError(
                f"{work.kind}: key #{i} classified as {got}, reference says {want}")
        checked += 1
    return checked


def _round(work: _Workload, cfg: BenchConfig, r: int) -> list[tuple[int, float, list[float]]]:
    """One measurement round on every thread; returns one result per thread."""
    per_round = cfg.measure / cfg.rounds
    if cfg.threads == 1:
        return [_timed(work, per_round, 1 + r * 31)]
    out: list = [None] * cfg.threads

    def worker(t: int):
        out[t] = _timed(work, per_round, 1 + t * 7919 + r * 31)

    pool = [threading.Thread(target=worker, args=(t,)) for t in range(cfg.threads)]
    for th in pool:
        th.start()
    for th in pool:
        th.join()
    return out


def _row(work: _Workload, n: int, cfg: BenchConfig, checked: int, rounds: list) -> BenchRow:
    """``rounds[r][t]`` is thread ``t``'s result in round ``r``."""
    flat = [res for per_round in rounds for res in per_round]
    lookups = sum(res[0] for res in flat)
    per_thread = [sum(rounds[r][t][0] for r in range(len(rounds)))
                  / sum(rounds[r][t][1] for r in range(len(rounds)))
                  for t in range(cfg.threads)]
    samples = np.concatenate([res[2] for res in flat])
    sample = range(0, min(len(work.keys), 2_000))
    return BenchRow(
        kind=work.kind, rules=n, threads=cfg.threads, lookups=lookups,
        lookups_per_sec=float(sum(per_thread)),
        per_thread_lookups_per_sec=float(np.mean(per_thread)),
        mean_ns=min(res[1] / res[0] for res in flat) * 1e9,
        p50_ns=float(np.percentile(samples, 50)), p99_ns=float(np.percentile(samples, 99)),
        accesses_per_lookup=work.accesses(sample), checked=checked)


def bench_kind(kind: str, cfg: BenchConfig) -> list[BenchRow]:
    """All rule counts of one classifier, with measurement rounds interleaved
    across rule counts so slow drift on the host affects every count alike."""
    works = {n: _Workload(kind, n, cfg) for n in cfg.rule_counts}
    checked = {n: _check(w, cfg) for n, w in works.items()}
    for w in works.values():
        _timed(w, cfg.warmup, 0)
    rounds: dict[int, list] = {n: [] for n in works}
    for r in range(cfg.rounds):
        for n, w in works.items():
            rounds[n].append(_round(w, cfg, r))
    return [_row(w, n, cfg, checked[n], rounds[n]) for n, w in works.items()]


def measure_cell(kind: str, n: int, cfg: BenchConfig) -> BenchRow:
    return bench_kind(kind, BenchConfig(**{**asdict(cfg), "kinds": (kind,),
                                           "rule_counts": (n,)}))[0]


def bench_throughput(config: BenchConfig) -> BenchResult:
    result = BenchResult(config)
    for kind in config.kinds:
        result.rows.extend(bench_kind(kind, config))
    return result


def scaling_curve(config: BenchConfig) -> BenchResult:
    """Latency against rule count, one row per (classifier, rule count)."""
    counts = sorted(config.rule_counts)
    if len(counts) < 2 or counts[-1] < 100 * counts[0]:
        raise ValueError("rule counts must span at least two decades")
    cfg = BenchConfig(**{**asdict(config), "rule_counts": tuple(counts), "threads": 1})
    return bench_throughput(cfg)


def latency_ratio(result: BenchResult, kind: str) -> float:
    rows = sorted((r for r in result.rows if r.kind == kind), key=lambda r: r.rules)
    return rows[-1].mean_ns / rows[0].mean_ns
