"""Two-level longest-prefix-match tables (DIR-24-8 and its 16-bit sibling).

The first level is a flat array indexed by the top ``first_bits`` of the key.
Prefixes no longer than ``first_bits`` are written straight into it; longer
prefixes get a 2**(width - first_bits) entry extension block, and the
first-level slot is flipped to point at that block.  A lookup therefore reads
one entry, or two when it lands on an extended slot.

Entry encoding (both levels, ``uint32``)::

    bit 31     valid
    bit 30     extended (first level only; payload is then a block index)
    bits 0-23  payload: stored id or block index

The prefix length that wrote each entry lives in a parallel ``uint8`` array
and guards shorter prefixes from overwriting longer ones.  Extension blocks
are back-filled with the covering short prefix so a second read always
answers the lookup.
"""

from __future__ import annotations

import numpy as np

from .rules import Ipv4Prefix, int_to_ip

VALID = 1 << 31
EXT = 1 << 30
PAYLOAD = (1 << 24) - 1
MAX_ID = PAYLOAD

DEFAULT_MAX_BLOCKS = 256


class LpmError(Exception):
    pass


class PoolExhaustedError(LpmError):
    """No free extension block is left."""


class PrefixNotFoundError(LpmError, KeyError):
    pass


class TwoLevelLpm:
    """Longest-prefix-match table over ``width``-bit keys.

    Prefixes are ``(value, length)`` pairs with host bits cleared.  ``add`` and
    ``delete`` mutate in place and assume a single writer; readers that need a
    stable view should take :meth:`copy` and read from that.
    """

    def __init__(self, width: int = 32, first_bits: int = 24,
                 max_blocks: int = DEFAULT_MAX_BLOCKS):
        if not 0 < first_bits < width:
            raise ValueError("first_bits must lie strictly between 0 and width")
        self.width = width
        self.first_bits = first_bits
        self.second_bits = width - first_bits
        self.max_blocks = max_blocks
        # np.full writes every page.  np.zeros would leave untouched pages
        # mapped to the kernel's shared zero page, which always hits in cache
        # and makes sparsely populated tables look faster than they are.
        self.tbl1 = np.full(1 << first_bits, 0, dtype=np.uint32)
        self.depth1 = np.full(1 << first_bits, 0, dtype=np.uint8)
        block = 1 << self.second_bits
        self.tbl2 = np.full(max_blocks * block, 0, dtype=np.uint32)
        self.depth2 = np.full(max_blocks * block, 0, dtype=np.uint8)
        self._free = list(range(max_blocks - 1, -1, -1))
        self._owner: dict[int, int] = {}  # block -> first-level index
        self.routes: dict[tuple[int, int], int] = {}

    # -- helpers ---------------------------------------------------------

    def _check_prefix(self, value: int, length: int) -> None:
        if not 0 <= length <= self.width:
            raise ValueError(f"prefix length {length} outside 0..{self.width}")
        host = self.width - length
        if value >> self.width or (host and value & ((1 << host) - 1)):
            raise ValueError(f"prefix value {value:#x}/{length} is not canonical")

    def _first_range(self, value: int, length: int) -> tuple[int, int]:
        lo = value >> self.second_bits
        if length >= self.first_bits:
            return lo, lo + 1
        return lo, lo + (1 << (self.first_bits - length))

    def _block_slice(self, block: int) -> slice:
        size = 1 << self.second_bits
        return slice(block * size, (block + 1) * size)

    @property
    def blocks_in_use(self) -> int:
        return len(self._owner)

    @property
    def block_size(self) -> int:
        return 1 << self.second_bits

    # -- mutation ----------------------------------------------------------

    def add(self, value: int, length: int, ident: int) -> None:
        """Insert or replace a prefix.  Raises PoolExhaustedError when full."""
        self._check_prefix(value, length)
        if not 0 <= ident <= MAX_ID:
            raise ValueError(f"id {ident} does not fit in 24 bits")
        key = (value, length)
        if key in self.routes:
            self.routes[key] = ident
            self._rebuild(*self._first_range(value, length))
            return
        if length <= self.first_bits:
            self.routes[key] = ident
            self._write_short(value, length, ident)
            return
        idx = value >> self.second_bits
        entry = int(self.tbl1[idx])
        if not entry & EXT:
            if not self._free:
                raise PoolExhaustedError(
                    f"all {self.max_blocks} extension blocks are in use")
            block = self._free.pop()
            self._owner[block] = idx
            sl = self._block_slice(block)
            self.tbl2[sl] = entry
            self.depth2[sl] = self.depth1[idx]
            self.tbl1[idx] = VALID | EXT | block
        else:
            block = entry & PAYLOAD
        self.routes[key] = ident
        base = block * self.block_size + (value & (self.block_size - 1))
        sl = slice(base, base + (1 << (self.width - length)))
        keep = self.depth2[sl] > length
        self.tbl2[sl] = np.where(keep, self.tbl2[sl], VALID | ident)
        self.depth2[sl] = np.where(keep, self.depth2[sl], length)

    def _write_short(self, value: int, length: int, ident: int) -> None:
        lo, hi = self._first_range(value, length)
        t, d = self.tbl1[lo:hi], self.depth1[lo:hi]
        ext = (t & EXT) != 0
        write = ~ext & (d <= length)
        t[write] = VALID | ident
        d[write] = length
        for off in np.flatnonzero(ext):
            sl = self._block_slice(int(t[off]) & PAYLOAD)
            bd = self.depth2[sl]
            hit = bd <= length
            self.tbl2[sl][hit] = VALID | ident
            bd[hit] = length
            # the first-level depth of an extended slot tracks its covering short prefix
            if d[off] <= length:
                d[off] = length

    def delete(self, value: int, length: int) -> None:
        """Remove a prefix; affected slots fall back to the next covering prefix."""
        self._check_prefix(value, length)
        key = (value, length)
        if key not in self.routes:
            raise PrefixNotFoundError(f"prefix {value:#x}/{length} is not present")
        del self.routes[key]
        self._rebuild(*self._first_range(value, length))

    def _rebuild(self, lo: int, hi: int) -> None:
        """Recompute first-level slots ``lo:hi`` and their blocks from ``routes``."""
        sb, fb = self.second_bits, self.first_bits
        short, long_ = [], {}
        for (value, length), ident in self.routes.items():
            if length <= fb:
                plo, phi = self._first_range(value, length)
                if plo < hi and lo < phi:
                    short.append((length, max(plo, lo), min(phi, hi), ident))
            else:
                idx = value >> sb
                if lo <= idx < hi:
                    long_.setdefault(idx, []).append((length, value, ident))
        t = np.zeros(hi - lo, dtype=np.uint32)
        d = np.zeros(hi - lo, dtype=np.uint8)
        for length, a, b, ident in sorted(short):
            t[a - lo:b - lo] = VALID | ident
            d[a - lo:b - lo] = length
        # release blocks owned by this range, then re-create the ones still needed
        old = self.tbl1[lo:hi]
        for off in np.flatnonzero((old & EXT) != 0):
            block = int(old[off]) & PAYLOAD
            del self._owner[block]
            self._free.append(block)
        for idx in sorted(long_):
            block = self._free.pop()
            self._owner[block] = idx
            sl = self._block_slice(block)
            bt = np.full(self.block_size, t[idx - lo], dtype=np.uint32)
            bd = np.full(self.block_size, d[idx - lo], dtype=np.uint8)
            for length, value, ident in sorted(long_[idx]):
                off = value & (self.block_size - 1)
                span = 1 << (self.width - length)
                bt[off:off + span] = VALID | ident
                bd[off:off + span] = length
            self.tbl2[sl] = bt
            self.depth2[sl] = bd
            t[idx - lo] = VALID | EXT | block
        self.tbl1[lo:hi] = t
        self.depth1[lo:hi] = d

    # -- lookup --------------------------------------------------------------

    def lookup(self, key: int) -> tuple[int | None, int]:
        """Return ``(id or None, memory reads)``; reads is 1 or 2."""
        e = self.tbl1.item(key >> self.second_bits)
        if e & EXT:
            e = self.tbl2.item(((e & PAYLOAD) << self.second_bits)
                               | (key & (self.block_size - 1)))
            return (e & PAYLOAD if e & VALID else None), 2
        return (e & PAYLOAD if e & VALID else None), 1

    def lookup_bulk(self, keys) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised lookup.  Returns ``(ids, reads)`` with ``-1`` for no match."""
        keys = np.asarray(keys, dtype=np.uint32)
        e = self.tbl1[keys >> self.second_bits]
        ext = (e & EXT) != 0
        if ext.any():
            slot = ((e[ext] & PAYLOAD).astype(np.int64) << self.second_bits) \
                | (keys[ext] & (self.block_size - 1))
            e = e.copy()
            e[ext] = self.tbl2[slot]
        ids = np.where((e & VALID) != 0, (e & PAYLOAD).astype(np.int64), -1)
        return ids, np.where(ext, 2, 1)

    def copy(self) -> "TwoLevelLpm":
        other = object.__new__(type(self))
        other.__dict__.update(self.__dict__)
        for name in ("tbl1", "depth1", "tbl2", "depth2"):
            setattr(other, name, getattr(self, name).copy())
        other._free = list(self._free)
        other._owner = dict(self._owner)
        other.routes = dict(self.routes)
        return other

    @property
    def memory_bytes(self) -> int:
        return sum(a.nbytes for a in (self.tbl1, self.depth1, self.tbl2, self.depth2))

    def check_invariants(self) -> None:
        """Assert the structural invariants; used by the tests."""
        ext_slots = np.flatnonzero((self.tbl1 & EXT) != 0)
        blocks = {int(self.tbl1[i]) & PAYLOAD: int(i) for i in ext_slots}
        assert blocks == self._owner, "block ownership out of sync"
        assert len(blocks) == len(ext_slots), "a block is referenced twice"
        parents = {v >> self.second_bits for (v, n) in self.routes if n > self.first_bits}
        assert parents == set(blocks.values()), "blocks do not match long-prefix parents"
        assert len(self._free) + len(blocks) == self.max_blocks


class Dir24Tables(TwoLevelLpm):
    """IPv4 DIR-24-8: a 2**24-entry first table plus 256-entry tbl8 blocks."""

    def __init__(self, max_tbl8: int = DEFAULT_MAX_BLOCKS):
        super().__init__(width=32, first_bits=24, max_blocks=max_tbl8)

    tbl24 = property(lambda self: self.tbl1)
    tbl8 = property(lambda self: self.tbl2)

    def add_prefix(self, prefix: Ipv4Prefix, ident: int) -> None:
        self.add(prefix.address, prefix.length, ident)

    def delete_prefix(self, prefix: Ipv4Prefix) -> None:
        self.delete(prefix.address, prefix.length)


def lpm_add(tables: TwoLevelLpm, prefix: Ipv4Prefix, ident: int) -> TwoLevelLpm:
    tables.add(prefix.address, prefix.length, ident)
    return tables


def lpm_delete(tables: TwoLevelLpm, prefix: Ipv4Prefix) -> TwoLevelLpm:
    tables.delete(prefix.address, prefix.length)
    return tables


def lpm_lookup(tables: TwoLevelLpm, addr: int) -> tuple[int | None, int]:
    return tables.lookup(addr)


def parse_routes(text: str) -> list[tuple[Ipv4Prefix, int]]:
    """Parse ``<ip>/<len> <id>`` lines; ``#`` starts a comment."""
    routes = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected '<ip>/<len> <id>'")
        try:
            routes.append((Ipv4Prefix.parse(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return routes


def format_route_results(addrs, ids, reads) -> str:
    lines = []
    for a, i, r in zip(addrs, ids, reads):
        lines.append(f"{int_to_ip(int(a))},{'-' if i is None or i < 0 else int(i)},{int(r)}")
    return "".join(line + "\n" for line in lines)
