"""Parse a small ACL, expand a wildcard mask, and classify a few packets.

    python demos/rules_and_wildcards.py
"""

from aclbal.rules import (FiveTupleKey, LinearClassifier, int_to_ip, ip_to_int, parse_rules,
                          serialize_rules, wildcard_to_prefixes)

ACL = """\
# web servers in 10.1.1.0/24 take HTTP and HTTPS
permit tcp * 10.1.1.0/24 * 80
permit tcp * 10.1.1.0/24 * 443
# every host whose third octet is 0 or 2 inside 10.0.x.x gets DNS
permit udp * 10.0.0.0 wildcard 0.0.2.255 * 53
deny * * * * *
"""

rules = parse_rules(ACL)
print(f"{len(rules)} rules, in priority order:")
print(serialize_rules(rules))

mask = ip_to_int("0.0.2.255")
print("wildcard 10.0.0.0 / 0.0.2.255 covers the prefixes:")
for p in wildcard_to_prefixes(ip_to_int("10.0.0.0"), mask):
    print(f"  {p}  ({int_to_ip(p.first)} .. {int_to_ip(p.last)})")

packets = [
    ("tcp to a web server", FiveTupleKey(6, ip_to_int("8.8.8.8"), ip_to_int("10.1.1.20"), 5555, 443)),
    ("udp DNS to 10.0.2.9", FiveTupleKey(17, ip_to_int("8.8.8.8"), ip_to_int("10.0.2.9"), 5555, 53)),
    ("udp DNS to 10.0.1.9", FiveTupleKey(17, ip_to_int("8.8.8.8"), ip_to_int("10.0.1.9"), 5555, 53)),
]
clf = LinearClassifier(rules)
print("\nfirst match wins:")
for label, key in packets:
    ident, scanned = clf.classify_counted(key)
    print(f"  {label:22s} -> rule {ident} ({rules[ident].action.value}) after {scanned} rules")
