import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aclbal.rules import (ANY_PORT, ANY_PREFIX, ANY_PROTO, Action, AclRule, ExpansionOverflowError,
                          FiveTupleKey, Ipv4Prefix, LinearClassifier, PortRange, ProtoMatch,
                          RuleSet, RuleSyntaxError, WildcardAddress, as_address_match,
                          classify_linear, classify_linear_batch, int_to_ip, ip_to_int,
                          parse_rules, serialize_rules, wildcard_to_prefixes)
from aclbal.workload import keys_array, random_keys, random_ruleset

ip = ip_to_int
u32 = st.integers(0, 2**32 - 1)


def key(proto=6, src="0.0.0.0", dst="0.0.0.0", sport=0, dport=0):
    return FiveTupleKey(proto, ip(src), ip(dst), sport, dport)


# -- parsing -----------------------------------------------------------------

def test_empty_file():
    assert len(parse_rules("")) == 0
    assert len(parse_rules("# only a comment\n\n")) == 0


def test_catch_all_line():
    rs = parse_rules("permit * 0.0.0.0/0 0.0.0.0/0 * *")
    assert len(rs) == 1
    r = rs[0]
    assert r.priority == 0 and r.action is Action.PERMIT
    assert r.proto == ANY_PROTO and r.src == ANY_PREFIX and r.dport == ANY_PORT


def test_explicit_priorities_sort():
    rs = parse_rules("5 permit * * * * *\n1 deny * * * * *\n9 mirror * * * * *\n")
    assert [r.priority for r in rs] == [1, 5, 9]
    assert [r.id for r in rs] == [1, 0, 2]


def test_implicit_priority_is_line_order_times_ten():
    rs = parse_rules("permit tcp 10.0.0.0/8 * * 80\n\n# gap\ndeny udp * * * 53\n")
    assert [(r.id, r.priority) for r in rs] == [(0, 0), (1, 10)]
    assert rs[0].proto == ProtoMatch(6) and rs[1].proto == ProtoMatch(17)


def test_prefix_canonicalised():
    r = parse_rules("permit * 10.1.2.3/8 * * *")[0]
    assert r.src == Ipv4Prefix(ip("10.0.0.0"), 8)


def test_wildcard_forms():
    rs = parse_rules("permit * 10.1.1.0 0.0.0.255 10.0.0.0 wildcard 0.0.2.255 * 1000-1003\n")
    r = rs[0]
    assert r.src == Ipv4Prefix(ip("10.1.1.0"), 24)
    assert r.dst == WildcardAddress(ip("10.0.0.0"), ip("0.0.2.255"))
    assert r.dport == PortRange(1000, 1003)


@pytest.mark.parametrize("text, line", [
    ("permit * 10.0.0.0/33 * * *", 1),
    ("permit * * * 20-10 *", 1),
    ("\nallow * * * * *", 2),
    ("permit * * * *", 1),
    ("permit * 10.0.0.0 * * *", 1),
    ("permit * 300.0.0.0/8 * * *", 1),
    ("permit * * * 70000 *", 1),
    ("3 permit * * * * *\n3 deny * * * * *", 2),
])
def test_syntax_errors_carry_line_numbers(text, line):
    with pytest.raises(RuleSyntaxError) as info:
        parse_rules(text)
    assert info.value.lineno == line


def test_implicit_priority_can_collide_with_explicit():
    with pytest.raises(RuleSyntaxError):
        parse_rules("10 permit * * * * *\ndeny * * * * *\n")


def test_expansion_guard_at_parse_time():
    with pytest.raises(RuleSyntaxError):
        parse_rules("permit * 0.0.0.0 255.255.0.0 * * *")
    assert len(parse_rules("permit * 0.0.0.0 255.255.0.0 * * *", expansion_limit=1 << 16)) == 1


@pytest.mark.parametrize("seed", range(5))
def test_serialize_round_trip(seed):
    rs = random_ruleset(40, seed, wildcard_fraction=0.2)
    assert parse_rules(serialize_rules(rs)) == rs


def test_ruleset_rejects_duplicates():
    r = AclRule(priority=1, action=Action.PERMIT, id=0)
    with pytest.raises(ValueError):
        RuleSet((r, AclRule(priority=1, action=Action.DENY, id=1)))
    with pytest.raises(ValueError):
        RuleSet((r, AclRule(priority=2, action=Action.DENY, id=0)))


def test_domain_type_invariants():
    with pytest.raises(ValueError):
        Ipv4Prefix(ip("10.0.0.1"), 8)
    with pytest.raises(ValueError):
        PortRange(5, 4)
    with pytest.raises(ValueError):
        ProtoMatch(256)
    assert PortRange().is_wildcard and ANY_PROTO.contains(200)


# -- wildcard expansion --------------------------------------------------------

def test_wildcard_examples():
    assert wildcard_to_prefixes(ip("10.1.1.0"), ip("0.0.0.255")) == [Ipv4Prefix(ip("10.1.1.0"), 24)]
    assert wildcard_to_prefixes(ip("10.0.0.0"), 0) == [Ipv4Prefix(ip("10.0.0.0"), 32)]
    got = wildcard_to_prefixes(ip("10.0.0.0"), ip("0.0.2.255"))
    assert got == [Ipv4Prefix(ip("10.0.0.0"), 24), Ipv4Prefix(ip("10.0.2.0"), 24)]


def test_wildcard_example_by_enumeration():
    addr, mask = ip("10.0.0.0"), ip("0.0.2.255")
    matching = {a for a in range(ip("10.0.0.0"), ip("10.0.4.0"))
                if a & ~mask & 0xFFFFFFFF == addr}
    assert len(matching) == 2**9
    covered = set()
    for p in wildcard_to_prefixes(addr, mask):
        block = set(range(p.first, p.last + 1))
        assert not covered & block
        covered |= block
    assert covered == matching


def test_wildcard_overflow():
    with pytest.raises(ExpansionOverflowError):
        wildcard_to_prefixes(0, 0xFFFF0000)
    assert len(wildcard_to_prefixes(0, 0xFF000000, limit=256)) == 256


@given(u32, st.integers(0, 32), st.lists(st.integers(0, 31), max_size=6))
def test_wildcard_round_trip(addr, host, scattered):
    mask = (1 << host) - 1
    for b in scattered:
        mask |= 1 << b
    prefixes = wildcard_to_prefixes(addr, mask)
    total = sum(1 << (32 - p.length) for p in prefixes)
    assert total == 1 << bin(mask).count("1")
    for p in prefixes:
        for a in (p.first, p.last, (p.first + p.last) // 2):
            assert a & ~mask & 0xFFFFFFFF == addr & ~mask & 0xFFFFFFFF
    ordered = sorted(prefixes)
    assert all(a.last < b.first for a, b in zip(ordered, ordered[1:]))
    if mask & (mask + 1) == 0:
        assert len(prefixes) == 1


@given(u32, u32)
def test_as_address_match_contains(addr, mask):
    try:
        m = as_address_match(addr, mask)
    except ExpansionOverflowError:
        return
    probe = addr ^ (mask & 0x5A5A5A5A)
    assert m.contains(probe)
    if ~mask & 0xFFFFFFFF:
        assert not m.contains(addr ^ (~mask & 0xFFFFFFFF & -(~mask & 0xFFFFFFFF)))


# -- linear classification ---------------------------------------------------------

def test_empty_ruleset_never_matches():
    assert classify_linear(RuleSet(()), key()) is None


def test_first_match_not_longest_prefix():
    rs = parse_rules("permit * 10.0.0.0/8 * * *\ndeny * 10.1.0.0/16 * * *\n")
    assert classify_linear(rs, key(src="10.1.2.3")) == 0
    assert classify_linear(rs, key(src="11.0.0.1")) is None


def test_catch_all_matches_everything():
    rs = parse_rules("permit * * * * *")
    for k in random_keys(RuleSet(()), 50, seed=1):
        assert classify_linear(rs, k) == 0


def brute_first(rules, k):
    """Reference written independently of AclRule.matches."""
    best = None
    for r in rules:
        ok = (r.proto.value in (None, k.proto)
              and r.src.contains(k.src_addr) and r.dst.contains(k.dst_addr)
              and r.sport.lo <= k.sport <= r.sport.hi and r.dport.lo <= k.dport <= r.dport.hi)
        if ok and (best is None or r.priority < best.priority):
            best = r
    return None if best is None else best.id


@pytest.mark.parametrize("seed", range(4))
def test_linear_variants_agree(seed):
    rs = random_ruleset(150, seed, wildcard_fraction=0.1, catch_all=seed % 2 == 1)
    keys = random_keys(rs, 800, seed)
    lin = LinearClassifier(rs)
    batch = classify_linear_batch(rs, keys_array(keys))
    for k, b in zip(keys, batch):
        want = brute_first(rs, k)
        assert classify_linear(rs, k) == want
        assert lin.classify(k) == want
        assert (None if b < 0 else int(b)) == want


def test_classify_counted_reports_scan_length():
    rs = parse_rules("permit 6 * * * *\npermit 17 * * * *\n")
    lin = LinearClassifier(rs)
    assert lin.classify_counted(key(proto=17)) == (1, 2)
    assert lin.classify_counted(key(proto=1)) == (None, 2)


def test_key_formatting():
    k = key(6, "10.0.0.1", "192.168.1.1", 1234, 80)
    assert str(k) == "6,10.0.0.1,192.168.1.1,1234,80"
    assert int_to_ip(ip("1.2.3.4")) == "1.2.3.4"


def test_rule_line_round_trip_each_field():
    for combo in itertools.product(["*", "6"], ["*", "10.0.0.0/8", "10.0.0.0 0.255.0.255"],
                                   ["*", "80", "1000-1003"]):
        proto, addr, port = combo
        line = f"permit {proto} {addr} {addr} {port} {port}"
        rs = parse_rules(line)
        assert parse_rules(serialize_rules(rs)) == rs


def test_random_keys_hit_rules():
    rs = random_ruleset(200, 3)
    keys = random_keys(rs, 1000, 3, match_fraction=1.0)
    assert np.mean([classify_linear(rs, k) is not None for k in keys]) == 1.0
