"""Find a six-sensor instance with a prescribed stage trace, then replay it.

The target trace: the lightest-link rule removes (4,5), (1,2), (3,5), (2,6)
in that order, restoration puts back (1,2) and (4,5), and assignment
against a prior plan reconnects exactly one group.  The search fixes those
four links, adds heavier links until the graph is connected, and draws small
integer loads until the trace matches.

    python demos/worked_example.py [--search]
"""

import itertools
import sys

import numpy as np

from aclbal.balancer import InfeasibleError, SensorGraph, balance, stage1_prune, stage2_merge
from aclbal.worked import CURRENT, REMOVED, RESTORED, worked_example


def search(limit=10, seed=0):
    rng = np.random.default_rng(seed)
    others = [e for e in itertools.combinations(range(1, 7), 2) if e not in REMOVED]
    found = []
    for k in (1, 2, 3, 4):
        for extra in itertools.combinations(others, k):
            if len(SensorGraph({i: 1 for i in range(1, 7)},
                               {e: 1 for e in REMOVED + list(extra)}).components()) != 1:
                continue
            for _ in range(200):
                light = sorted(int(x) for x in rng.integers(1, 9, size=4))
                edges = dict(zip(REMOVED, light))
                edges.update({e: int(rng.integers(light[-1], 12)) for e in extra})
                g = SensorGraph({i: int(rng.integers(1, 9)) for i in range(1, 7)}, edges)
                cap = int(rng.integers(5, 30))
                try:
                    p1 = stage1_prune(g, cap)
                except InfeasibleError:
                    continue
                if list(p1.removed) != REMOVED:
                    continue
                p2 = stage2_merge(p1, cap)
                if set(p2.restored) == RESTORED and len(p2.groups) == 3:
                    found.append((g, cap, p2))
                    break
            if len(found) >= limit:
                return found
    return found


if "--search" in sys.argv:
    hits = search()
    print(f"{len(hits)} matching instances, for example:")
    for g, cap, p2 in hits[:3]:
        print(f"  capacity {cap}: loads {g.loads}, groups {p2.groups} at {p2.loads}")
    print()

graph, controllers, current = worked_example()
print("sensor loads:", graph.loads)
print("link loads:  ", graph.edges)
print("controllers: ", controllers.capacities, " prior plan:", CURRENT, "\n")

plan = balance(graph, controllers, current)
print("stage 1 (remove the lightest link inside an overloaded component):")
for step in plan.stage1.trace:
    how = "splits its component" if step.split else "halves go to the buffers"
    print(f"  remove {step.edge}: {how}; adjusted {step.adjusted2 / 2}, "
          f"buffered {step.buffered2 / 2}")
print("stage 2 (restore the lightest removed link that still fits):")
for step in plan.stage2.trace[len(plan.stage1.trace):]:
    print(f"  restore {step.edge}")
print("stage 3 (one group per controller, fewest sensor moves):")
for grp, c, load in zip(plan.groups, plan.controllers, plan.group_loads):
    print(f"  sensors {grp} load {load} -> controller {c}")
for m in plan.migrations:
    roles = ", then ".join(f"controller {c} becomes {r.value}" for c, r in m.roles)
    print(f"  sensor {m.sensor} moves {m.source} -> {m.target}: {roles}")
