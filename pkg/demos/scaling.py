"""Latency against rule count for each classifier.

Linear search grows with the rule count, RFC reads a fixed number of tables,
and the LPM-based ACL stays nearly flat.  Longer ``--measure`` values give
steadier numbers on a noisy machine.

    python demos/scaling.py [--measure SECONDS]
"""

import argparse

from aclbal.bench import BenchConfig, latency_ratio, scaling_curve

ap = argparse.ArgumentParser()
ap.add_argument("--measure", type=float, default=1.0)
args = ap.parse_args()

res = scaling_curve(BenchConfig(kinds=("linear", "rfc", "lpm-acl"),
                                rule_counts=(100, 1_000, 10_000),
                                measure=args.measure, rounds=10))
print(f"{'kind':8s} {'rules':>6s} {'mean ns':>10s} {'p99 ns':>10s} {'reads':>7s}")
for r in res.rows:
    acc = f"{r.accesses_per_lookup:7.1f}" if r.accesses_per_lookup is not None else ""
    print(f"{r.kind:8s} {r.rules:6d} {r.mean_ns:10.0f} {r.p99_ns:10.0f} {acc}")
print()
for kind in ("linear", "rfc", "lpm-acl"):
    print(f"{kind:8s} latency at 10,000 rules / at 100 rules: {latency_ratio(res, kind):.2f}x")
