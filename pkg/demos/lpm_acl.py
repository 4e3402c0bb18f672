"""ACL classification on per-field LPM tables with bitset payloads.

    python demos/lpm_acl.py
"""

import time

from aclbal.lpm_acl import LpmAclTables, port_range_to_prefixes
from aclbal.rules import FiveTupleKey, LinearClassifier, ip_to_int, parse_rules
from aclbal.workload import random_keys, random_ruleset

print("port range 1000-1003 ->", port_range_to_prefixes(1000, 1003))
print("port range 1-65534 needs", len(port_range_to_prefixes(1, 65534)), "prefixes\n")

rules = parse_rules("permit * 10.0.0.0/8 * * *\npermit * 10.1.0.0/16 * * 22\n")
t = LpmAclTables(rules)
key = FiveTupleKey(6, ip_to_int("10.1.2.3"), ip_to_int("1.1.1.1"), 999, 22)
names = ("proto", "src", "dst", "sport", "dport")
print("bitsets for", key)
for name, bits in zip(names, t.field_bitsets(key)):
    print(f"  {name:5s} {bits:02b}")
print("lowest common bit -> rule", t.classify(key), "\n")

print("rules   lpm-acl ns   linear ns")
for n in (100, 1_000, 10_000):
    rs = random_ruleset(n, n)
    keys = random_keys(rs, 5_000, n)
    acl, lin = LpmAclTables(rs), LinearClassifier(rs)
    assert all(acl.classify(k) == lin.classify(k) for k in keys[:500])
    t0 = time.perf_counter()
    for k in keys:
        acl.classify(k)
    a = (time.perf_counter() - t0) / len(keys) * 1e9
    t0 = time.perf_counter()
    for k in keys[:200]:
        lin.classify(k)
    b = (time.perf_counter() - t0) / 200 * 1e9
    print(f"{n:5d}   {a:10.0f}   {b:9.0f}")
