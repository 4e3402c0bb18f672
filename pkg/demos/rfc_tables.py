"""Build recursive-flow-classification tables and inspect their sizes.

    python demos/rfc_tables.py [rule count]
"""

import sys
import time

from aclbal.rfc import DEEP_TREE, DEFAULT_TREE, rfc_build
from aclbal.rules import classify_linear_batch
from aclbal.workload import keys_array, random_keys, random_ruleset

n = int(sys.argv[1]) if len(sys.argv) > 1 else 500
rules = random_ruleset(n, 11)
keys = random_keys(rules, 20_000, 11)
arr = keys_array(keys)

for name, tree in (("flat", DEFAULT_TREE), ("deep", DEEP_TREE)):
    t0 = time.perf_counter()
    tables = rfc_build(rules, tree)
    built = time.perf_counter() - t0
    print(f"{name} tree, {n} rules: built in {built:.2f} s, "
          f"{tables.memory_bytes / 2**20:.1f} MiB, {tables.accesses} reads per lookup")
    print(tables.report_csv())
    same = (tables.classify_batch(arr) == classify_linear_batch(rules, arr)).all()
    print(f"agrees with the linear scan on {len(keys)} keys: {bool(same)}\n")

ident, reads = tables.classify(keys[0])
print(f"one scalar lookup: key {keys[0]} -> rule {ident} after {reads} reads")
