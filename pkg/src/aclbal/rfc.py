"""Recursive flow classification.

The 104-bit key is cut into seven 16-bit chunks (source and destination
address halves, the two ports, and the protocol padded to 16 bits).  Phase 0
maps every chunk value to an equivalence class: two values share a class iff
they match the same rules on that chunk.  Later phases index a table by the
tuple of their children's class ids and again store a class id; the root
stores the first matching rule directly.  A lookup reads exactly one entry
per table on the tree, whatever the key or the rule count.

Rules whose address fields expand to several prefixes (non-contiguous
wildcards) become several internal columns that all map back to the same
rule.  Columns are ordered by rule position, so the lowest set column bit
still names the first matching rule.  The empty rule set is its own class
and is carried through every phase.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from itertools import product
from typing import Sequence, Union

import numpy as np

from .rules import FiveTupleKey, RuleSet

CHUNKS = ("src_hi", "src_lo", "dst_hi", "dst_lo", "sport", "dport", "proto")
DEFAULT_TREE = (("src_hi", "src_lo"), ("dst_hi", "dst_lo"), ("sport", "dport", "proto"))
# joins (src x dst) before the ports: one more read, a much smaller last table
DEEP_TREE = ((("src_hi", "src_lo"), ("dst_hi", "dst_lo")), ("sport", "dport", "proto"))
DEFAULT_MAX_CLASSES = 1 << 20
DEFAULT_MAX_ENTRIES = 1 << 26
_BLOCK_ELEMS = 1 << 22

Tree = Union[str, Sequence["Tree"]]


class RfcCapacityError(ValueError):
    """Preprocessing would exceed the configured class or table-size ceiling."""


def _chunk_column(keys: np.ndarray, name: str) -> np.ndarray:
    col = {"proto": 0, "src_hi": 1, "src_lo": 1, "dst_hi": 2, "dst_lo": 2,
           "sport": 3, "dport": 4}[name]
    v = keys[:, col]
    if name.endswith("_hi"):
        return v >> 16
    if name.endswith("_lo"):
        return v & 0xFFFF
    return v


def _prefix_halves(address: int, length: int) -> tuple[tuple[int, int], tuple[int, int]]:
    """Project a 32-bit prefix onto its high and low 16-bit chunks as intervals."""
    hi = address >> 16
    if length <= 16:
        return (hi, hi + (1 << (16 - length)) - 1), (0, 0xFFFF)
    lo = address & 0xFFFF
    return (hi, hi), (lo, lo + (1 << (32 - length)) - 1)


def rule_columns(rules: RuleSet) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Per-chunk ``(lo, hi)`` intervals for every internal column, plus column -> rule position."""
    lo = {c: [] for c in CHUNKS}
    hi = {c: [] for c in CHUNKS}
    owner = []
    for pos, r in enumerate(rules):
        proto = (0, 0xFFFF) if r.proto.value is None else (r.proto.value, r.proto.value)
        for sp, dp in product(r.src.prefixes(), r.dst.prefixes()):
            (sh, sl), (dh, dl) = _prefix_halves(sp.address, sp.length), \
                _prefix_halves(dp.address, dp.length)
            for name, (a, b) in (("src_hi", sh), ("src_lo", sl), ("dst_hi", dh),
                                 ("dst_lo", dl), ("sport", (r.sport.lo, r.sport.hi)),
                                 ("dport", (r.dport.lo, r.dport.hi)), ("proto", proto)):
                lo[name].append(a)
                hi[name].append(b)
            owner.append(pos)
    intervals = {c: np.array([lo[c], hi[c]], dtype=np.int64).reshape(2, -1) for c in CHUNKS}
    return intervals, np.array(owner, dtype=np.int64)


def _pack(bools: np.ndarray, nwords: int) -> np.ndarray:
    """Pack a boolean ``(rows, columns)`` matrix into ``(rows, nwords)`` uint64 words."""
    packed = np.packbits(bools, axis=1, bitorder="little")
    out = np.zeros((len(bools), nwords * 8), dtype=np.uint8)
    out[:, :packed.shape[1]] = packed
    return out.view(np.uint64)


class _Interner:
    """Assigns dense class ids to distinct bitset rows."""

    def __init__(self, nwords: int, max_classes: int):
        self.ids: dict[bytes, int] = {}
        self.rows: list[np.ndarray] = []
        self.nwords = nwords
        self.max_classes = max_classes

    def add_block(self, block: np.ndarray) -> np.ndarray:
        uniq, inv = np.unique(block, axis=0, return_inverse=True)
        mapping = np.empty(len(uniq), dtype=np.int32)
        for i, row in enumerate(uniq):
            k = row.tobytes()
            cid = self.ids.get(k)
            if cid is None:
                cid = len(self.rows)
                if cid >= self.max_classes:
                    raise RfcCapacityError(
                        f"more than {self.max_classes} equivalence classes in one table")
                self.ids[k] = cid
                self.rows.append(row)
            mapping[i] = cid
        return mapping[inv.reshape(-1)]

    def matrix(self) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, self.nwords), dtype=np.uint64)
        return np.stack(self.rows)


def _first_set(x: np.ndarray) -> np.ndarray:
    """Index of the lowest set bit along the last (word) axis, ``-1`` if none."""
    nz = x != 0
    has = nz.any(axis=-1)
    j = nz.argmax(axis=-1)
    w = np.take_along_axis(x, j[..., None], axis=-1)[..., 0]
    low = w & (~w + np.uint64(1))
    bit = np.log2(np.where(has, low, 1).astype(np.float64)).astype(np.int64)
    return np.where(has, j.astype(np.int64) * 64 + bit, -1)


@dataclass
class RfcChunkTable:
    name: str
    phase: int
    entries: np.ndarray
    classes: int
    children: tuple[int, ...] = ()
    strides: tuple[int, ...] = ()
    chunk: str | None = None

    @property
    def index_width(self) -> float:
        return float(np.log2(len(self.entries))) if len(self.entries) else 0.0


class RfcTables:
    def __init__(self, tables: list[RfcChunkTable], rule_ids: list[int], tree: Tree):
        self.tables = tables
        self.rule_ids = rule_ids
        self.tree = tree
        self._final_ids = np.array(rule_ids + [-1], dtype=np.int64)
        self._plan = [(t.entries, t.chunk, t.children, t.strides) for t in tables]

    k = 5

    @property
    def phase_count(self) -> int:
        return self.tables[-1].phase + 1

    @property
    def accesses(self) -> int:
        return len(self.tables)

    @property
    def memory_bytes(self) -> int:
        return sum(t.entries.nbytes for t in self.tables)

    def classify(self, key: FiveTupleKey) -> tuple[int | None, int]:
        proto, src, dst, sport, dport = key
        chunks = {"src_hi": src >> 16, "src_lo": src & 0xFFFF, "dst_hi": dst >> 16,
                  "dst_lo": dst & 0xFFFF, "sport": sport, "dport": dport, "proto": proto}
        vals = []
        for entries, chunk, children, strides in self._plan:
            if chunk is not None:
                vals.append(entries.item(chunks[chunk]))
            else:
                idx = 0
                for c, s in zip(children, strides):
                    idx += vals[c] * s
                vals.append(entries.item(idx))
        pos = vals[-1]
        return (None if pos < 0 else self.rule_ids[pos]), len(vals)

    def classify_batch(self, keys) -> np.ndarray:
        """Vectorised classify over an ``(n, 5)`` key array; ``-1`` means no match."""
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, 5)
        vals = []
        for t in self.tables:
            if t.chunk is not None:
                vals.append(t.entries[_chunk_column(keys, t.chunk)].astype(np.int64))
            else:
                idx = np.zeros(len(keys), dtype=np.int64)
                for c, s in zip(t.children, t.strides):
                    idx += vals[c] * s
                vals.append(t.entries[idx].astype(np.int64))
        return self._final_ids[vals[-1]]

    def report_rows(self) -> list[dict]:
        return [{"table": t.name, "phase": t.phase, "entries": len(t.entries),
                 "classes": t.classes, "bytes": t.entries.nbytes} for t in self.tables]

    def report_csv(self) -> str:
        buf = io.StringIO()
        buf.write("table,phase,entries,classes,bytes\n")
        for row in self.report_rows():
            buf.write(f"{row['table']},{row['phase']},{row['entries']},{row['classes']},"
                      f"{row['bytes']}\n")
        buf.write(f"# phases={self.phase_count} accesses={self.accesses} "
                  f"total_bytes={self.memory_bytes}\n")
        return buf.getvalue()


class _Builder:
    def __init__(self, rules: RuleSet, max_classes: int, max_entries: int):
        self.intervals, owner = rule_columns(rules)
        self.ncols = len(owner)
        # trailing -1 lets column index -1 (no match) map to "no rule"
        self.owner = np.append(owner, -1)
        self.nwords = max(1, -(-self.ncols // 64))
        self.max_classes = max_classes
        self.max_entries = max_entries
        self.tables: list[RfcChunkTable] = []

    def leaf(self, name: str) -> tuple[int, np.ndarray]:
        lo, hi = self.intervals[name]
        cuts = np.unique(np.concatenate([[0], lo, hi + 1]))
        starts = cuts[cuts <= 0xFFFF]
        lengths = np.diff(np.append(starts, 0x10000))
        interner = _Interner(self.nwords, self.max_classes)
        seg_class = []
        step = max(1, _BLOCK_ELEMS // max(1, self.ncols))
        for a in range(0, len(starts), step):
            s = starts[a:a + step, None]
            seg_class.append(interner.add_block(_pack((lo <= s) & (s <= hi), self.nwords)))
        cls = np.concatenate(seg_class) if seg_class else np.zeros(0, dtype=np.int32)
        entries = np.repeat(cls, lengths).astype(np.int32)
        bits = interner.matrix()
        self.tables.append(RfcChunkTable(name, 0, entries, len(bits), chunk=name))
        return len(self.tables) - 1, bits

    def _combine(self, parts: list[tuple[int, np.ndarray]], final: bool):
        """Cross-product children pairwise, interning as we go.

        Returns the flat table over the full index product, plus the class
        bitsets (or ``None`` at the root, whose entries are rule positions).
        """
        sizes = [len(b) for _, b in parts]
        total = int(np.prod(sizes, dtype=np.int64))
        if total > self.max_entries:
            raise RfcCapacityError(
                f"table of {total} entries exceeds the ceiling of {self.max_entries}")
        acc_bits = parts[0][1]
        acc_index = np.arange(sizes[0], dtype=np.int64)
        for k, (_, bits) in enumerate(parts[1:], start=1):
            last = final and k == len(parts) - 1
            ck = len(bits)
            step = max(1, _BLOCK_ELEMS // max(1, ck * self.nwords))
            if last:
                res = np.empty((len(acc_bits), ck), dtype=np.int64)
                for a in range(0, len(acc_bits), step):
                    prod = acc_bits[a:a + step, None, :] & bits[None, :, :]
                    col = _first_set(prod)
                    res[a:a + step] = self.owner[col]
                acc_index = res[acc_index].reshape(-1)
                acc_bits = None
            else:
                interner = _Interner(self.nwords, self.max_classes)
                pieces = []
                for a in range(0, len(acc_bits), step):
                    prod = acc_bits[a:a + step, None, :] & bits[None, :, :]
                    pieces.append(interner.add_block(prod.reshape(-1, self.nwords)))
                inv = np.concatenate(pieces).reshape(len(acc_bits), ck)
                acc_index = inv[acc_index].reshape(-1)
                acc_bits = interner.matrix()
        if final and len(parts) == 1:
            col = _first_set(acc_bits)
            acc_index = self.owner[col][acc_index]
            acc_bits = None
        return acc_index.astype(np.int32), acc_bits

    def node(self, tree: Tree, final: bool) -> tuple[int, np.ndarray | None]:
        if isinstance(tree, str):
            if tree not in CHUNKS:
                raise ValueError(f"unknown chunk {tree!r}")
            if final:
                raise ValueError("the reduction tree needs at least one combining phase")
            return self.leaf(tree)
        parts = [self.node(child, False) for child in tree]
        sizes = [len(b) for _, b in parts]
        strides = tuple(int(np.prod(sizes[i + 1:], dtype=np.int64)) for i in range(len(sizes)))
        entries, bits = self._combine(parts, final)
        phase = 1 + max(self.tables[i].phase for i, _ in parts)
        name = "final" if final else "+".join(_leaf_names(tree))
        classes = len(bits) if bits is not None else len(np.unique(entries))
        self.tables.append(RfcChunkTable(name, phase, entries, classes,
                                         children=tuple(i for i, _ in parts), strides=strides))
        return len(self.tables) - 1, bits


def _leaf_names(tree: Tree) -> list[str]:
    if isinstance(tree, str):
        return [tree]
    return [n for child in tree for n in _leaf_names(child)]


def rfc_build(rules: RuleSet, tree: Tree = DEFAULT_TREE,
              max_classes: int = DEFAULT_MAX_CLASSES,
              max_entries: int = DEFAULT_MAX_ENTRIES) -> RfcTables:
    """Preprocess ``rules`` into RFC tables along the reduction ``tree``.

    Every chunk must appear exactly once among the tree's leaves.
    """
    leaves = _leaf_names(tree)
    if sorted(leaves) != sorted(CHUNKS):
        raise ValueError(f"tree leaves {leaves} must be a permutation of {CHUNKS}")
    builder = _Builder(rules, max_classes, max_entries)
    builder.node(tree, True)
    return RfcTables(builder.tables, rules.ids, tree)


def rfc_classify(tables: RfcTables, key: FiveTupleKey) -> tuple[int | None, int]:
    return tables.classify(key)
