"""Seeded synthetic rule sets, packet keys and route tables.

Rule sets draw their addresses from a pool of networks roughly ``2*sqrt(n)``
wide and their ports from a short list of service ports and ranges, the way
production ACLs reuse the same handful of subnets and services.  Prefix
lengths are skewed toward 24 bits and shorter; a configurable fraction is
longer than 24 bits to exercise the extension blocks.
"""

from __future__ import annotations

import math

import numpy as np

from .rules import (ANY_PORT, ANY_PROTO, Action, AclRule, FiveTupleKey, Ipv4Prefix,
                    PortRange, ProtoMatch, RuleSet, WildcardAddress)

SERVICE_PORTS = (20, 21, 22, 23, 25, 53, 80, 110, 123, 143, 161, 389, 443, 636,
                 993, 1433, 3306, 3389, 5432, 8080)
PORT_RANGES = ((0, 1023), (1024, 65535), (6000, 6063), (49152, 65535), (8000, 8099),
               (1000, 1003), (135, 139), (32768, 60999))
SHORT_LENGTHS = np.array([0, 8, 12, 16, 18, 20, 22, 23, 24])
SHORT_WEIGHTS = np.array([1, 4, 2, 10, 3, 5, 5, 5, 20], dtype=float)


def rng_for(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def random_prefix(rng: np.random.Generator, long_fraction: float = 0.05) -> Ipv4Prefix:
    if rng.random() < long_fraction:
        length = int(rng.integers(25, 33))
    else:
        length = int(rng.choice(SHORT_LENGTHS, p=SHORT_WEIGHTS / SHORT_WEIGHTS.sum()))
    return Ipv4Prefix.canonical(int(rng.integers(0, 1 << 32)), length)


def random_prefixes(count: int, seed=None, long_fraction: float = 0.05,
                    unique: bool = True) -> list[Ipv4Prefix]:
    """``count`` prefixes; about a third are nested under earlier ones."""
    rng = rng_for(seed)
    out: list[Ipv4Prefix] = []
    seen = set()
    while len(out) < count:
        if out and rng.random() < 0.3:
            parent = out[int(rng.integers(len(out)))]
            if parent.length < 32:
                longer = rng.random() < long_fraction or parent.length >= 24
                lo = max(parent.length + 1, 25) if longer else parent.length + 1
                hi = 32 if longer else 24
                length = int(rng.integers(lo, hi + 1))
                host = int(rng.integers(0, 1 << (32 - parent.length)))
                p = Ipv4Prefix.canonical(parent.address | host, length)
            else:
                p = random_prefix(rng, long_fraction)
        else:
            p = random_prefix(rng, long_fraction)
        if unique and p in seen:
            continue
        seen.add(p)
        out.append(p)
    return out


def _random_port(rng: np.random.Generator, wildcard_p: float,
                 service_p: float) -> PortRange:
    if rng.random() < wildcard_p:
        return ANY_PORT
    if rng.random() < service_p:
        p = int(rng.choice(SERVICE_PORTS))
        return PortRange(p, p)
    lo, hi = PORT_RANGES[int(rng.integers(len(PORT_RANGES)))]
    return PortRange(lo, hi)


def _random_proto(rng: np.random.Generator) -> ProtoMatch:
    u = rng.random()
    if u < 0.3:
        return ANY_PROTO
    if u < 0.7:
        return ProtoMatch(6)
    if u < 0.95:
        return ProtoMatch(17)
    return ProtoMatch(1)


def random_ruleset(n: int, seed=None, long_fraction: float = 0.05,
                   pool_size: int | None = None, wildcard_fraction: float = 0.0,
                   catch_all: bool = False) -> RuleSet:
    """A seeded rule set of ``n`` rules with ids ``0..n-1`` and shuffled priorities.

    ``wildcard_fraction`` of the address fields use a non-contiguous wildcard
    mask.  ``catch_all`` makes the lowest-priority rule match everything.
    """
    rng = rng_for(seed)
    if pool_size is None:
        pool_size = max(4, int(2 * math.sqrt(max(n, 1))))
    src_pool = random_prefixes(pool_size, rng, long_fraction)
    dst_pool = random_prefixes(pool_size, rng, long_fraction)
    priorities = rng.permutation(n) * 10
    actions = list(Action)
    rules = []
    for i in range(n):
        src = src_pool[int(rng.integers(pool_size))]
        dst = dst_pool[int(rng.integers(pool_size))]
        if wildcard_fraction and rng.random() < wildcard_fraction:
            src = _random_wildcard(rng)
        if wildcard_fraction and rng.random() < wildcard_fraction:
            dst = _random_wildcard(rng)
        rules.append(AclRule(
            priority=int(priorities[i]), action=actions[int(rng.integers(3))], id=i,
            proto=_random_proto(rng), src=src, dst=dst,
            sport=_random_port(rng, 0.95, 0.0), dport=_random_port(rng, 0.35, 0.7)))
    if catch_all and n:
        last = max(rules, key=lambda r: r.priority)
        rules[rules.index(last)] = AclRule(priority=last.priority, action=Action.DENY,
                                           id=last.id)
    return RuleSet(tuple(rules))


def _random_wildcard(rng: np.random.Generator) -> WildcardAddress:
    """A mask with a low host run plus one or two scattered free bits."""
    host = int(rng.integers(0, 9))
    mask = (1 << host) - 1
    for _ in range(int(rng.integers(1, 3))):
        mask |= 1 << int(rng.integers(host, 32))
    return WildcardAddress.canonical(int(rng.integers(0, 1 << 32)), mask)


def _addr_in(match, rng: np.random.Generator) -> int:
    prefixes = match.prefixes()
    p = prefixes[int(rng.integers(len(prefixes)))]
    return p.address | int(rng.integers(0, 1 << (32 - p.length)))


def random_keys(rules: RuleSet, count: int, seed=None,
                match_fraction: float = 0.5) -> list[FiveTupleKey]:
    """Keys that are uniformly random or, with ``match_fraction``, drawn inside a rule."""
    rng = rng_for(seed)
    keys = []
    for _ in range(count):
        if len(rules) and rng.random() < match_fraction:
            r = rules[int(rng.integers(len(rules)))]
            proto = r.proto.value if r.proto.value is not None else int(
                rng.choice((1, 6, 17)))
            keys.append(FiveTupleKey(
                proto, _addr_in(r.src, rng), _addr_in(r.dst, rng),
                int(rng.integers(r.sport.lo, r.sport.hi + 1)),
                int(rng.integers(r.dport.lo, r.dport.hi + 1))))
        else:
            proto = int(rng.choice((1, 6, 17, int(rng.integers(0, 256)))))
            keys.append(FiveTupleKey(
                proto, int(rng.integers(0, 1 << 32)), int(rng.integers(0, 1 << 32)),
                int(rng.integers(0, 65536)), int(rng.integers(0, 65536))))
    return keys


def keys_array(keys) -> np.ndarray:
    return np.array(keys, dtype=np.int64).reshape(-1, 5)


def random_addresses(count: int, seed=None, near: list[Ipv4Prefix] | None = None,
                     near_fraction: float = 0.5) -> np.ndarray:
    """Uniform addresses, half of them (by default) inside prefixes from ``near``."""
    rng = rng_for(seed)
    addrs = rng.integers(0, 1 << 32, size=count, dtype=np.uint64)
    if near:
        pick = rng.random(count) < near_fraction
        idx = rng.integers(0, len(near), size=int(pick.sum()))
        base = np.array([p.address for p in near], dtype=np.uint64)[idx]
        span = np.array([1 << (32 - p.length) for p in near], dtype=np.uint64)[idx]
        addrs[pick] = base + rng.integers(0, 1 << 62, size=len(idx), dtype=np.uint64) % span
    return addrs.astype(np.uint32)
