"""ACL classification on top of longest-prefix-match tables.

Each of the five fields gets its own lookup structure whose payload is a
bitset over rule positions (bit ``i`` is the ``i``-th rule in priority order):

* source and destination address: :class:`~aclbal.lpm.Dir24Tables`
* source and destination port: a 16-bit two-level table (8 + 8 stride),
  with port ranges decomposed into prefixes first
* protocol: a direct 256-entry array

The bitset stored under a prefix ``P`` is the set of rules whose field
contains all of ``P``.  Because every prefix covering an address lies on one
chain, the longest match's bitset is exactly the set of rules matching the
address.  Classification intersects the five bitsets and returns the lowest
set bit.

Bitsets are GMP integers (``gmpy2.mpz``), where a 10,000-bit AND and a
lowest-set-bit scan each cost well under 100 ns.

Two products are precomputed at build time so that a lookup does at most
one bitset AND:

* every (proto, sport, dport) class triple, since real rule sets reuse a
  few protocols and services and there are only a few thousand triples;
* every (src, dst) class pair, stored as the handful of rule positions
  that match both addresses, or as a bitset when there are more.

Each has a memory budget; past it, classification falls back to
intersecting the per-field bitsets directly.  Either way a lookup is five
field lookups plus work bounded by the rules that match both addresses.
"""

from __future__ import annotations

import gmpy2

from .lpm import Dir24Tables, TwoLevelLpm
from .rules import FiveTupleKey, RuleSet

DEFAULT_CAPACITY = 32_768
# Memory ceilings (bytes) for the two pre-intersected tables; over either,
# classify falls back to intersecting the per-field bitsets directly.
COMBO_BUDGET = 64 << 20
PAIR_BUDGET = 256 << 20
SPARSE_PAIR = 8


class CapacityError(ValueError):
    pass


def port_range_to_prefixes(lo: int, hi: int, width: int = 16) -> list[tuple[int, int]]:
    """Minimal list of ``(value, length)`` prefixes covering exactly ``[lo, hi]``."""
    if not 0 <= lo <= hi < (1 << width):
        raise ValueError(f"bad range {lo}-{hi}")
    out = []
    while lo <= hi:
        size = lo & -lo if lo else 1 << width
        while size > hi - lo + 1:
            size >>= 1
        out.append((lo, width - size.bit_length() + 1))
        lo += size
    return out


EMPTY = gmpy2.mpz(0)


class FieldBitsetTable:
    """One field's lookup structure with bitset payloads."""

    def __init__(self, name: str, lpm: TwoLevelLpm | None, bitsets: list,
                 direct: list[int] | None = None):
        self.name = name
        self.lpm = lpm
        self.bitsets = bitsets  # indexed by stored id; the last entry is the empty set
        self.direct = direct  # proto: value -> bitset index

    @property
    def empty_index(self) -> int:
        return len(self.bitsets) - 1

    def lookup(self, value: int) -> tuple[gmpy2.mpz, int]:
        if self.lpm is None:
            return self.bitsets[self.direct[value]], 1
        ident, reads = self.lpm.lookup(value)
        return self.bitsets[self.empty_index if ident is None else ident], reads


def _inherit(own: dict[tuple[int, int], int], width: int) -> dict[tuple[int, int], int]:
    """Fold each prefix's ancestors' rule bits into its own bitset."""
    full: dict[tuple[int, int], int] = {}
    for value, length in sorted(own, key=lambda p: p[1]):
        bits = own[(value, length)]
        for plen in range(length - 1, -1, -1):
            parent = (value >> (width - plen) << (width - plen) if plen else 0, plen)
            if parent in full:
                bits |= full[parent]
                break
        full[(value, length)] = bits
    return full


def _build_prefix_field(name: str, own: dict[tuple[int, int], int],
                        lpm: TwoLevelLpm) -> FieldBitsetTable:
    full = _inherit(own, lpm.width)
    bitsets = []
    index: dict[int, int] = {}
    for prefix in sorted(full):
        bits = full[prefix]
        if bits not in index:
            index[bits] = len(bitsets)
            bitsets.append(gmpy2.mpz(bits))
        lpm.add(prefix[0], prefix[1], index[bits])
    bitsets.append(EMPTY)
    return FieldBitsetTable(name, lpm, bitsets)


class LpmAclTables:
    """Five field tables compiled from one rule set."""

    def __init__(self, rules: RuleSet, capacity: int = DEFAULT_CAPACITY,
                 max_tbl8: int = 4096, combo_budget: int = COMBO_BUDGET,
                 pair_budget: int = PAIR_BUDGET):
        if len(rules) > capacity:
            raise CapacityError(f"{len(rules)} rules exceed bitset capacity {capacity}")
        self.rules = rules
        self.rule_ids = rules.ids
        own = {f: {} for f in ("src", "dst", "sport", "dport")}
        proto_any, proto_exact = 0, [0] * 256
        for pos, r in enumerate(rules):
            bit = 1 << pos
            for f in ("src", "dst"):
                for p in getattr(r, f).prefixes():
                    key = (p.address, p.length)
                    own[f][key] = own[f].get(key, 0) | bit
            for f in ("sport", "dport"):
                rng = getattr(r, f)
                for key in port_range_to_prefixes(rng.lo, rng.hi):
                    own[f][key] = own[f].get(key, 0) | bit
            if r.proto.value is None:
                proto_any |= bit
            else:
                proto_exact[r.proto.value] |= bit
        self.src = _build_prefix_field("src", own["src"], Dir24Tables(max_tbl8))
        self.dst = _build_prefix_field("dst", own["dst"], Dir24Tables(max_tbl8))
        self.sport = _build_prefix_field("sport", own["sport"], TwoLevelLpm(16, 8, 256))
        self.dport = _build_prefix_field("dport", own["dport"], TwoLevelLpm(16, 8, 256))
        proto_sets, direct, seen = [], [], {}
        for v in range(256):
            bits = proto_any | proto_exact[v]
            if bits not in seen:
                seen[bits] = len(proto_sets)
                proto_sets.append(gmpy2.mpz(bits))
            direct.append(seen[bits])
        proto_sets.append(EMPTY)
        self.proto = FieldBitsetTable("proto", None, proto_sets, direct)
        self._fields = (self.proto, self.src, self.dst, self.sport, self.dport)
        self.combo = _combine_small_fields(self, combo_budget)
        self.pairs = _pair_addresses(self, pair_budget) if self.combo is not None else None
        self.classify = _compile(self)

    def field_bitsets(self, key: FiveTupleKey) -> list[int]:
        return [int(t.lookup(v)[0]) for t, v in zip(self._fields, key)]

    def reads(self, key: FiveTupleKey) -> int:
        """Table reads for one classification (five field lookups)."""
        return sum(t.lookup(v)[1] for t, v in zip(self._fields, key))

    @property
    def memory_bytes(self) -> int:
        tables = sum(t.lpm.memory_bytes for t in (self.src, self.dst, self.sport, self.dport))
        bits = sum(gmpy2.num_digits(b, 2) for t in self._fields for b in t.bitsets)
        if self.combo is not None:
            bits += sum(gmpy2.num_digits(b, 2) for b in self.combo[1])
        if self.pairs is not None:
            bits += sum(64 * len(c) if isinstance(c, tuple) else gmpy2.num_digits(c, 2)
                        for c in self.pairs)
        return tables + (bits + 7) // 8 + 2 * len(self.proto.direct)


def _combine_small_fields(t: LpmAclTables, budget: int):
    """Pre-intersect proto, sport and dport bitsets for every class triple.

    Real rule sets reuse a handful of protocols and services, so the three
    small fields have few distinct bitsets and the product table is small.
    Returns ``(proto_class_by_value, table)`` or None when over ``budget``.
    """
    P, S, D = t.proto.bitsets, t.sport.bitsets, t.dport.bitsets
    if len(P) * len(S) * len(D) * (len(t.rules) // 8 + 32) > budget:
        return None
    table = []
    for a in P:
        for c in S:
            ac = a & c
            table.extend(ac & d for d in D)
    return t.proto.direct, table


def _pair_addresses(t: LpmAclTables, budget: int):
    """Pre-intersect every (src class, dst class) pair.

    Few rules match both addresses of a key, so most pairs hold a handful of
    rule positions; those are stored as ascending tuples.  Pairs with more
    than ``SPARSE_PAIR`` positions stay bitsets.  None when over ``budget``.
    """
    S, D = t.src.bitsets, t.dst.bitsets
    cost = len(S) * len(D) * 64
    if cost > budget:
        return None
    table = []
    for a in S:
        for b in D:
            x = a & b
            if gmpy2.popcount(x) <= SPARSE_PAIR:
                table.append(tuple(gmpy2.xmpz(x).iter_set()))
                cost += 8 * len(table[-1])
            else:
                table.append(x)
                cost += gmpy2.num_digits(x, 2) // 8
            if cost > budget:
                return None
    return table


def _compile(t: LpmAclTables):
    """Build the classify function as a closure over the finished tables.

    The literals are the entry flag bits (valid 1 << 31, ext 1 << 30) and
    the 24-bit payload mask; both second-level strides are 8 bits.
    """
    s1, s2, sb = memoryview(t.src.lpm.tbl1), memoryview(t.src.lpm.tbl2), t.src.bitsets
    d1, d2, db = memoryview(t.dst.lpm.tbl1), memoryview(t.dst.lpm.tbl2), t.dst.bitsets
    p1, p2, pb = memoryview(t.sport.lpm.tbl1), memoryview(t.sport.lpm.tbl2), t.sport.bitsets
    q1, q2, qb = memoryview(t.dport.lpm.tbl1), memoryview(t.dport.lpm.tbl2), t.dport.bitsets
    ids = t.rule_ids

    if t.combo is not None and t.pairs is not None:
        pclass, combo = t.combo
        pairs = t.pairs
        nsd = len(db)
        ns, nd = len(pb), len(qb)
        pstride = [c * ns * nd for c in pclass]

        def classify(key: FiveTupleKey) -> int | None:
            """First rule (by priority) matching ``key``, or None."""
            proto, src, dst, sport, dport = key
            e = s1[src >> 8]
            if e & 0x40000000:
                e = s2[((e & 0xFFFFFF) << 8) | (src & 0xFF)]
            f = d1[dst >> 8]
            if f & 0x40000000:
                f = d2[((f & 0xFFFFFF) << 8) | (dst & 0xFF)]
            if not e & f & 0x80000000:
                return None
            cand = pairs[(e & 0xFFFFFF) * nsd + (f & 0xFFFFFF)]
            if not cand:
                return None
            g = p1[sport >> 8]
            if g & 0x40000000:
                g = p2[((g & 0xFFFFFF) << 8) | (sport & 0xFF)]
            h = q1[dport >> 8]
            if h & 0x40000000:
                h = q2[((h & 0xFFFFFF) << 8) | (dport & 0xFF)]
            # an invalid port entry selects the empty class (the last one)
            gi = g & 0xFFFFFF if g & 0x80000000 else ns - 1
            hi = h & 0xFFFFFF if h & 0x80000000 else nd - 1
            rest = combo[pstride[proto] + gi * nd + hi]
            if cand.__class__ is tuple:
                for i in cand:
                    if rest.bit_test(i):
                        return ids[i]
                return None
            i = (cand & rest).bit_scan1()
            return None if i is None else ids[i]

        return classify

    pd = [t.proto.bitsets[i] for i in t.proto.direct]

    def classify(key: FiveTupleKey) -> int | None:
        """First rule (by priority) matching ``key``, or None."""
        proto, src, dst, sport, dport = key
        e = s1[src >> 8]
        if e & 0x40000000:
            e = s2[((e & 0xFFFFFF) << 8) | (src & 0xFF)]
        f = d1[dst >> 8]
        if f & 0x40000000:
            f = d2[((f & 0xFFFFFF) << 8) | (dst & 0xFF)]
        if not e & f & 0x80000000:
            return None
        x = sb[e & 0xFFFFFF] & db[f & 0xFFFFFF]
        i = x.bit_scan1()
        if i is None:
            return None
        g = p1[sport >> 8]
        if g & 0x40000000:
            g = p2[((g & 0xFFFFFF) << 8) | (sport & 0xFF)]
        h = q1[dport >> 8]
        if h & 0x40000000:
            h = q2[((h & 0xFFFFFF) << 8) | (dport & 0xFF)]
        if not g & h & 0x80000000:
            return None
        a, c, d = pd[proto], pb[g & 0xFFFFFF], qb[h & 0xFFFFFF]
        while i is not None:
            if a.bit_test(i) and d.bit_test(i) and c.bit_test(i):
                return ids[i]
            i = x.bit_scan1(i + 1)
        return None

    return classify


def _lookup(table: FieldBitsetTable, value: int) -> gmpy2.mpz:
    lpm = table.lpm
    e = lpm.tbl1.item(value >> lpm.second_bits)
    if e & 0x40000000:
        e = lpm.tbl2.item(((e & 0xFFFFFF) << lpm.second_bits) | (value & (lpm.block_size - 1)))
    if e & 0x80000000:
        return table.bitsets[e & 0xFFFFFF]
    return table.bitsets[-1]


def acl_build(rules: RuleSet, capacity: int = DEFAULT_CAPACITY) -> LpmAclTables:
    return LpmAclTables(rules, capacity)


def acl_classify(tables: LpmAclTables, key: FiveTupleKey) -> int | None:
    return tables.classify(key)
