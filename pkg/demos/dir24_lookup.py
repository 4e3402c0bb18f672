"""Walk through DIR-24-8 inserts, lookups and deletes, watching the read count.

    python demos/dir24_lookup.py
"""

import time

from aclbal.lpm import EXT, Dir24Tables
from aclbal.rules import Ipv4Prefix, ip_to_int
from aclbal.workload import random_addresses, random_prefixes

t = Dir24Tables()
routes = {"0.0.0.0/0": 0, "10.0.0.0/8": 1, "10.1.1.0/24": 2, "10.1.1.7/32": 3}
for text, ident in routes.items():
    t.add_prefix(Ipv4Prefix.parse(text), ident)
    print(f"added {text:14s} -> id {ident}; tbl8 blocks in use: {t.blocks_in_use}")

print()
for addr in ("10.1.1.7", "10.1.1.8", "10.9.9.9", "192.0.2.1"):
    ident, reads = t.lookup(ip_to_int(addr))
    print(f"lookup {addr:10s} -> id {ident} in {reads} read{'s' * (reads > 1)}")

slot = ip_to_int("10.1.1.0") >> 8
print(f"\ntbl24[10.1.1] has the extension flag set: {bool(int(t.tbl24[slot]) & EXT)}")
t.delete_prefix(Ipv4Prefix.parse("10.1.1.7/32"))
print("after deleting 10.1.1.7/32:", t.lookup(ip_to_int("10.1.1.7")),
      f"blocks in use: {t.blocks_in_use}")

print("\nbulk lookup of 1,000,000 addresses against 10,000 routes:")
big = Dir24Tables(max_tbl8=4096)
prefixes = random_prefixes(10_000, 1)
for i, p in enumerate(prefixes):
    big.add_prefix(p, i)
addrs = random_addresses(1_000_000, 2, near=prefixes)
t0 = time.perf_counter()
ids, reads = big.lookup_bulk(addrs)
dt = time.perf_counter() - t0
print(f"  {len(addrs) / dt / 1e6:.1f} M lookups/s vectorised, "
      f"{(reads == 2).mean():.1%} needed a second read, {(ids < 0).mean():.1%} had no route")
