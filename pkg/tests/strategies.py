"""Hypothesis strategies shared by the classifier tests."""

from hypothesis import strategies as st

from aclbal.rules import (Action, AclRule, FiveTupleKey, Ipv4Prefix, PortRange, ProtoMatch,
                          RuleSet, WildcardAddress)

# A small alphabet of anchors makes random rules overlap and keys hit them.
ANCHORS = [0x0A000000, 0x0A010100, 0x0A010107, 0xC0A80000, 0xAC100000, 0x08080808]
PORTS = [0, 22, 53, 80, 443, 1000, 1003, 1024, 8080, 65535]


@st.composite
def prefixes(draw):
    base = draw(st.sampled_from(ANCHORS) | st.integers(0, 2**32 - 1))
    length = draw(st.sampled_from([0, 8, 16, 23, 24, 25, 30, 32]) | st.integers(0, 32))
    return Ipv4Prefix.canonical(base, length)


@st.composite
def addresses(draw):
    if draw(st.booleans()):
        base = draw(st.sampled_from(ANCHORS))
        return base ^ draw(st.sampled_from([0, 1, 7, 8, 0xFF, 0x100, 0xFFFF, 0x10000]))
    return draw(st.integers(0, 2**32 - 1))


@st.composite
def address_matches(draw):
    if draw(st.integers(0, 5)) == 0:
        base = draw(st.sampled_from(ANCHORS))
        free = draw(st.sampled_from([0x000002FF, 0x000000F0, 0x00010001, 0x00000300]))
        return WildcardAddress.canonical(base, free)
    return draw(prefixes())


@st.composite
def port_ranges(draw):
    a = draw(st.sampled_from(PORTS) | st.integers(0, 65535))
    b = draw(st.sampled_from(PORTS) | st.integers(0, 65535))
    if draw(st.integers(0, 3)) == 0:
        return PortRange()
    return PortRange(min(a, b), max(a, b))


@st.composite
def rulesets(draw, max_size=25):
    n = draw(st.integers(0, max_size))
    rules = []
    for i in range(n):
        proto = draw(st.sampled_from([None, None, 6, 17, 1]))
        rules.append(AclRule(
            priority=i * 10, action=draw(st.sampled_from(list(Action))), id=i,
            proto=ProtoMatch(proto), src=draw(address_matches()), dst=draw(address_matches()),
            sport=draw(port_ranges()), dport=draw(port_ranges())))
    order = draw(st.permutations(range(n)))
    # shuffle ids against priority so id order and priority order differ
    return RuleSet(tuple(AclRule(priority=r.priority, action=r.action, id=order[k],
                                 proto=r.proto, src=r.src, dst=r.dst, sport=r.sport,
                                 dport=r.dport) for k, r in enumerate(rules)))


@st.composite
def keys(draw):
    return FiveTupleKey(
        draw(st.sampled_from([6, 17, 1, 0, 255])), draw(addresses()), draw(addresses()),
        draw(st.sampled_from(PORTS) | st.integers(0, 65535)),
        draw(st.sampled_from(PORTS) | st.integers(0, 65535)))
