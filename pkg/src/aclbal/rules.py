"""ACL rules, packet keys and the linear first-match classifier.

A rule file holds one rule per line::

    [<priority>] <permit|deny|mirror> <proto|*> <src> <dst> <sport> <dport>

where an address is ``a.b.c.d/len``, ``a.b.c.d <wildcard-mask>`` (the
mask may also be introduced with the keyword ``wildcard``), or ``*``/``any``.
Ports are ``80``, ``1000-2000`` or ``*``.  ``#`` starts a comment.  When the
priority is omitted the rule gets ``10 * ordinal`` where ``ordinal`` counts
rule lines from zero.

Lower priority numbers are matched first and the first match wins.
:func:`classify_linear` is the reference semantics every other classifier in
this package is checked against.
"""

from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence, Union

ADDR_MASK = 0xFFFFFFFF
PORT_MAX = 0xFFFF
DEFAULT_EXPANSION_LIMIT = 256

PROTO_NAMES = {"icmp": 1, "tcp": 6, "udp": 17}


class RuleSyntaxError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ExpansionOverflowError(ValueError):
    """A wildcard mask expands to more prefixes than the configured limit."""


def ip_to_int(text: str) -> int:
    return int(ipaddress.IPv4Address(text))


def int_to_ip(value: int) -> str:
    return str(ipaddress.IPv4Address(value))


def prefix_mask(length: int) -> int:
    return (ADDR_MASK << (32 - length)) & ADDR_MASK


@dataclass(frozen=True, order=True)
class Ipv4Prefix:
    address: int
    length: int

    def __post_init__(self):
        if not 0 <= self.length <= 32:
            raise ValueError(f"prefix length {self.length} out of range 0..32")
        if not 0 <= self.address <= ADDR_MASK:
            raise ValueError(f"address {self.address} is not a 32-bit value")
        if self.address & ~prefix_mask(self.length) & ADDR_MASK:
            raise ValueError(f"{int_to_ip(self.address)}/{self.length} has host bits set")

    @classmethod
    def canonical(cls, address: int, length: int) -> "Ipv4Prefix":
        """Build a prefix, clearing any host bits below ``length``."""
        if not 0 <= length <= 32:
            raise ValueError(f"prefix length {length} out of range 0..32")
        return cls(address & prefix_mask(length), length)

    @classmethod
    def parse(cls, text: str) -> "Ipv4Prefix":
        addr, _, length = text.partition("/")
        return cls.canonical(ip_to_int(addr), int(length) if length else 32)

    @property
    def mask(self) -> int:
        return prefix_mask(self.length)

    @property
    def first(self) -> int:
        return self.address

    @property
    def last(self) -> int:
        return self.address | (~self.mask & ADDR_MASK)

    def contains(self, addr: int) -> bool:
        return (addr & self.mask) == self.address

    def covers(self, other: "Ipv4Prefix") -> bool:
        return self.length <= other.length and self.contains(other.address)

    def prefixes(self) -> list["Ipv4Prefix"]:
        return [self]

    def __str__(self) -> str:
        return f"{int_to_ip(self.address)}/{self.length}"


ANY_PREFIX = Ipv4Prefix(0, 0)


@dataclass(frozen=True)
class WildcardAddress:
    """Address with an inverted mask: set bits in ``wildcard`` may take any value.

    Non-contiguous masks are allowed.  Classifiers that need prefixes call
    :meth:`prefixes`, which expands the match into disjoint prefixes.
    """

    address: int
    wildcard: int

    def __post_init__(self):
        if self.address & self.wildcard:
            raise ValueError("address has bits set under the wildcard mask")

    @classmethod
    def canonical(cls, address: int, wildcard: int) -> "WildcardAddress":
        wildcard &= ADDR_MASK
        return cls(address & ~wildcard & ADDR_MASK, wildcard)

    def contains(self, addr: int) -> bool:
        return (addr & ~self.wildcard & ADDR_MASK) == self.address

    def prefixes(self, limit: int = DEFAULT_EXPANSION_LIMIT) -> list[Ipv4Prefix]:
        return wildcard_to_prefixes(self.address, self.wildcard, limit)

    def __str__(self) -> str:
        return f"{int_to_ip(self.address)} {int_to_ip(self.wildcard)}"


AddressMatch = Union[Ipv4Prefix, WildcardAddress]


def wildcard_to_prefixes(address: int, wildcard_mask: int,
                         limit: int = DEFAULT_EXPANSION_LIMIT) -> list[Ipv4Prefix]:
    """Expand ``(address, wildcard_mask)`` into disjoint prefixes.

    The trailing run of wildcard bits becomes the prefix length; every other
    wildcard bit doubles the number of prefixes.  Raises
    :class:`ExpansionOverflowError` when the result would exceed ``limit``.
    """
    wildcard_mask &= ADDR_MASK
    host = 0
    while host < 32 and (wildcard_mask >> host) & 1:
        host += 1
    free_bits = [b for b in range(host, 32) if (wildcard_mask >> b) & 1]
    count = 1 << len(free_bits)
    if count > limit:
        raise ExpansionOverflowError(
            f"wildcard mask {int_to_ip(wildcard_mask)} expands to {count} prefixes "
            f"(limit {limit})")
    base = address & ~wildcard_mask & ADDR_MASK
    out = []
    for combo in range(count):
        addr = base
        for i, bit in enumerate(free_bits):
            if (combo >> i) & 1:
                addr |= 1 << bit
        out.append(Ipv4Prefix(addr, 32 - host))
    out.sort()
    return out


def as_address_match(address: int, wildcard: int) -> AddressMatch:
    """Return a prefix when the wildcard is a contiguous low-bit run."""
    wildcard &= ADDR_MASK
    if wildcard & (wildcard + 1) == 0:
        host = wildcard.bit_length()
        return Ipv4Prefix.canonical(address, 32 - host)
    return WildcardAddress.canonical(address, wildcard)


@dataclass(frozen=True, order=True)
class PortRange:
    lo: int = 0
    hi: int = PORT_MAX

    def __post_init__(self):
        if not (0 <= self.lo <= PORT_MAX and 0 <= self.hi <= PORT_MAX):
            raise ValueError(f"port range {self.lo}-{self.hi} outside 0..65535")
        if self.lo > self.hi:
            raise ValueError(f"port range {self.lo}-{self.hi} has lo > hi")

    @property
    def is_wildcard(self) -> bool:
        return self.lo == 0 and self.hi == PORT_MAX

    def contains(self, port: int) -> bool:
        return self.lo <= port <= self.hi

    def __str__(self) -> str:
        if self.is_wildcard:
            return "*"
        if self.lo == self.hi:
            return str(self.lo)
        return f"{self.lo}-{self.hi}"


ANY_PORT = PortRange()


@dataclass(frozen=True)
class ProtoMatch:
    value: int | None = None  # None is the wildcard

    def __post_init__(self):
        if self.value is not None and not 0 <= self.value <= 255:
            raise ValueError(f"protocol {self.value} outside 0..255")

    @property
    def is_wildcard(self) -> bool:
        return self.value is None

    def contains(self, proto: int) -> bool:
        return self.value is None or self.value == proto

    def __str__(self) -> str:
        return "*" if self.value is None else str(self.value)


ANY_PROTO = ProtoMatch()


class Action(enum.Enum):
    PERMIT = "permit"
    DENY = "deny"
    MIRROR = "mirror"


class FiveTupleKey(NamedTuple):
    proto: int
    src_addr: int
    dst_addr: int
    sport: int
    dport: int

    def __str__(self) -> str:
        return (f"{self.proto},{int_to_ip(self.src_addr)},{int_to_ip(self.dst_addr)},"
                f"{self.sport},{self.dport}")


@dataclass(frozen=True)
class AclRule:
    priority: int
    action: Action
    id: int
    proto: ProtoMatch = ANY_PROTO
    src: AddressMatch = ANY_PREFIX
    dst: AddressMatch = ANY_PREFIX
    sport: PortRange = ANY_PORT
    dport: PortRange = ANY_PORT

    def matches(self, key: FiveTupleKey) -> bool:
        return (self.proto.contains(key.proto)
                and self.src.contains(key.src_addr)
                and self.dst.contains(key.dst_addr)
                and self.sport.contains(key.sport)
                and self.dport.contains(key.dport))

    def to_line(self) -> str:
        return (f"{self.priority} {self.action.value} {self.proto} {self.src} "
                f"{self.dst} {self.sport} {self.dport}")


@dataclass(frozen=True)
class RuleSet:
    """Rules sorted by ascending priority.  Immutable once built."""

    rules: tuple[AclRule, ...] = field(default_factory=tuple)

    def __post_init__(self):
        rules = tuple(sorted(self.rules, key=lambda r: r.priority))
        seen_prio, seen_id = set(), set()
        for r in rules:
            if r.priority in seen_prio:
                raise ValueError(f"duplicate priority {r.priority}")
            if r.id in seen_id:
                raise ValueError(f"duplicate rule id {r.id}")
            seen_prio.add(r.priority)
            seen_id.add(r.id)
        object.__setattr__(self, "rules", rules)

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def __getitem__(self, index: int) -> AclRule:
        return self.rules[index]

    @property
    def ids(self) -> list[int]:
        return [r.id for r in self.rules]


def _parse_proto(tok: str) -> ProtoMatch:
    if tok in ("*", "any", "ip"):
        return ANY_PROTO
    if tok.lower() in PROTO_NAMES:
        return ProtoMatch(PROTO_NAMES[tok.lower()])
    return ProtoMatch(int(tok))


def _parse_port(tok: str) -> PortRange:
    if tok in ("*", "any"):
        return ANY_PORT
    lo, sep, hi = tok.partition("-")
    return PortRange(int(lo), int(hi)) if sep else PortRange(int(lo), int(lo))


def _take_address(tokens: list[str], pos: int, limit: int) -> tuple[AddressMatch, int]:
    tok = tokens[pos]
    if tok in ("*", "any"):
        return ANY_PREFIX, pos + 1
    if "/" in tok:
        addr, _, length = tok.partition("/")
        if not length.isdigit() or int(length) > 32:
            raise ValueError(f"bad prefix length in {tok!r}")
        return Ipv4Prefix.canonical(ip_to_int(addr), int(length)), pos + 1
    addr = ip_to_int(tok)
    pos += 1
    if pos < len(tokens) and tokens[pos] == "wildcard":
        pos += 1
    if pos >= len(tokens):
        raise ValueError(f"address {tok!r} needs a /len or a wildcard mask")
    match = as_address_match(addr, ip_to_int(tokens[pos]))
    if isinstance(match, WildcardAddress):
        match.prefixes(limit)  # enforce the expansion guard at parse time
    return match, pos + 1


def parse_rule_line(line: str, *, priority: int, rule_id: int,
                    expansion_limit: int = DEFAULT_EXPANSION_LIMIT) -> tuple[AclRule, bool]:
    """Parse one non-empty rule line; return the rule and whether priority was explicit."""
    tokens = line.split()
    explicit = tokens[0].isdigit()
    if explicit:
        priority = int(tokens.pop(0))
    if not tokens:
        raise ValueError("missing action")
    try:
        action = Action(tokens[0].lower())
    except ValueError:
        raise ValueError(f"unknown action {tokens[0]!r}") from None
    if len(tokens) < 6:
        raise ValueError("expected <action> <proto> <src> <dst> <sport> <dport>")
    proto = _parse_proto(tokens[1])
    src, pos = _take_address(tokens, 2, expansion_limit)
    dst, pos = _take_address(tokens, pos, expansion_limit)
    if len(tokens) - pos != 2:
        raise ValueError("expected exactly two port fields after the addresses")
    sport, dport = _parse_port(tokens[pos]), _parse_port(tokens[pos + 1])
    rule = AclRule(priority=priority, action=action, id=rule_id, proto=proto,
                   src=src, dst=dst, sport=sport, dport=dport)
    return rule, explicit


def parse_rules(text: str, expansion_limit: int = DEFAULT_EXPANSION_LIMIT) -> RuleSet:
    """Parse rule-file text.  Rule ids are assigned in file order from zero."""
    rules = []
    owner: dict[int, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        ordinal = len(rules)
        try:
            rule, _ = parse_rule_line(line, priority=ordinal * 10, rule_id=ordinal,
                                      expansion_limit=expansion_limit)
        except (ValueError, ipaddress.AddressValueError) as exc:
            raise RuleSyntaxError(lineno, str(exc)) from exc
        if rule.priority in owner:
            raise RuleSyntaxError(
                lineno, f"duplicate priority {rule.priority} (first used on line "
                        f"{owner[rule.priority]})")
        owner[rule.priority] = lineno
        rules.append(rule)
    return RuleSet(tuple(rules))


def serialize_rules(rules: RuleSet | Iterable[AclRule]) -> str:
    """Write rules with explicit priorities, in id order.

    For rule sets whose ids are ``0..n-1`` this is the inverse of
    :func:`parse_rules`.
    """
    ordered = sorted(rules, key=lambda r: r.id)
    return "".join(r.to_line() + "\n" for r in ordered)


def classify_linear(rules: RuleSet | Sequence[AclRule], key: FiveTupleKey) -> int | None:
    """Top-down scan; the first (lowest priority number) matching rule wins."""
    for rule in rules:
        if rule.matches(key):
            return rule.id
    return None


class LinearClassifier:
    """Flattened first-match scan used by the benchmarks.

    Every address field is held as ``(value, care_mask)``, so wildcard masks
    are matched directly rather than through prefix expansion.
    """

    def __init__(self, rules: RuleSet):
        self.rules = rules
        rows = []
        for r in rules:
            rows.append((
                -1 if r.proto.value is None else r.proto.value,
                *_care(r.src), *_care(r.dst),
                r.sport.lo, r.sport.hi, r.dport.lo, r.dport.hi, r.id,
            ))
        self._rows = rows

    def classify(self, key: FiveTupleKey) -> int | None:
        return self.classify_counted(key)[0]

    def classify_counted(self, key: FiveTupleKey) -> tuple[int | None, int]:
        """Return the match and the number of rules examined."""
        proto, src, dst, sport, dport = key
        n = 0
        for p, sv, sm, dv, dm, slo, shi, dlo, dhi, rid in self._rows:
            n += 1
            if ((p < 0 or p == proto) and src & sm == sv and dst & dm == dv
                    and slo <= sport <= shi and dlo <= dport <= dhi):
                return rid, n
        return None, n


def _care(match: AddressMatch) -> tuple[int, int]:
    if isinstance(match, Ipv4Prefix):
        return match.address, match.mask
    return match.address, ~match.wildcard & ADDR_MASK


def classify_linear_batch(rules: RuleSet, keys) -> "numpy.ndarray":
    """Vectorised first-match over a key array; ``-1`` marks no match.

    ``keys`` is an ``(n, 5)`` integer array in ``FiveTupleKey`` field order.
    Returns rule ids (not positions).
    """
    import numpy as np

    keys = np.asarray(keys, dtype=np.int64).reshape(-1, 5)
    out = np.full(len(keys), -1, dtype=np.int64)
    if not len(rules):
        return out
    cols = np.array([[-1 if r.proto.value is None else r.proto.value, *_care(r.src),
                      *_care(r.dst), r.sport.lo, r.sport.hi, r.dport.lo, r.dport.hi]
                     for r in rules], dtype=np.int64)
    ids = np.array(rules.ids, dtype=np.int64)
    step = max(1, 4_000_000 // len(rules))
    for start in range(0, len(keys), step):
        k = keys[start:start + step, :, None]
        m = ((cols[:, 0] < 0) | (cols[:, 0] == k[:, 0]))
        m &= (k[:, 1] & cols[:, 2]) == cols[:, 1]
        m &= (k[:, 2] & cols[:, 4]) == cols[:, 3]
        m &= (cols[:, 5] <= k[:, 3]) & (k[:, 3] <= cols[:, 6])
        m &= (cols[:, 7] <= k[:, 4]) & (k[:, 4] <= cols[:, 8])
        hit = m.any(axis=1)
        first = m.argmax(axis=1)
        out[start:start + step] = np.where(hit, ids[first], -1)
    return out
