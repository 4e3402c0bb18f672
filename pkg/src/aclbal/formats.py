"""Readers and writers for topology, key and address files."""

from __future__ import annotations

import csv
import io
import json

from .balancer import AssignmentPlan, Controller, ControllerSet, SensorGraph
from .rules import FiveTupleKey, int_to_ip, ip_to_int


def load_topology(text: str) -> tuple[SensorGraph, ControllerSet, dict[int, int] | None]:
    """Parse a JSON topology file.

    ::

        {"sensors": [{"id": 1, "load": 3}, ...],
         "edges": [{"u": 1, "v": 2, "load": 4}, ...],
         "controllers": [{"id": 1, "capacity": 19, "label": "RDC"}, ...],
         "assignment": {"1": 1, ...}}          # optional, sensor -> controller
    """
    doc = json.loads(text)
    graph = SensorGraph({int(s["id"]): s["load"] for s in doc["sensors"]},
                        {(int(e["u"]), int(e["v"])): e["load"] for e in doc.get("edges", [])})
    controllers = ControllerSet(Controller(int(c["id"]), c["capacity"], c.get("label", ""))
                                for c in doc["controllers"])
    assignment = doc.get("assignment")
    if assignment is not None:
        assignment = {int(s): int(c) for s, c in assignment.items()}
    return graph, controllers, assignment


def dump_topology(graph: SensorGraph, controllers: ControllerSet,
                  assignment: dict[int, int] | AssignmentPlan | None = None) -> str:
    doc = {
        "sensors": [{"id": s, "load": l} for s, l in graph.loads.items()],
        "edges": [{"u": u, "v": v, "load": l} for (u, v), l in graph.edges.items()],
        "controllers": [{"id": c.id, "capacity": c.capacity, "label": c.label}
                        for c in controllers],
    }
    if isinstance(assignment, AssignmentPlan):
        assignment = assignment.assignment
    if assignment is not None:
        doc["assignment"] = {str(s): c for s, c in sorted(assignment.items())}
    return json.dumps(doc, indent=2) + "\n"


def parse_keys(text: str) -> list[FiveTupleKey]:
    """Read ``proto,src,dst,sport,dport`` rows; a header row is skipped."""
    keys = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or row[0].startswith("#"):
            continue
        if lineno == 1 and row[0].strip() == "proto":
            continue
        if len(row) != 5:
            raise ValueError(f"line {lineno}: expected 5 fields, got {len(row)}")
        try:
            proto, src, dst, sport, dport = (f.strip() for f in row)
            key = FiveTupleKey(int(proto), ip_to_int(src), ip_to_int(dst),
                               int(sport), int(dport))
            if not (0 <= key.proto <= 255 and 0 <= key.sport <= 0xFFFF
                    and 0 <= key.dport <= 0xFFFF):
                raise ValueError("protocol or port out of range")
            keys.append(key)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return keys


def dump_keys(keys) -> str:
    return "proto,src,dst,sport,dport\n" + "".join(f"{k}\n" for k in keys)


def parse_addresses(text: str) -> list[int]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            out.append(ip_to_int(line))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return out


def dump_addresses(addrs) -> str:
    return "".join(f"{int_to_ip(int(a))}\n" for a in addrs)


def format_classify_results(ids) -> str:
    return "".join(("-" if i is None or i < 0 else str(int(i))) + "\n" for i in ids)
