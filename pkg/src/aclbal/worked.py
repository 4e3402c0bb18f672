"""A six-sensor, three-controller instance with a short, readable trace.

The loads were found by random search over small integers, keeping an
instance where the lightest-link rule removes (4,5), (1,2), (3,5), (2,6) in
that order, restoration puts back (1,2) and (4,5), and assignment against
the given prior plan moves exactly one group.  ``demos/worked_example.py``
reruns the search.
"""

from .balancer import ControllerSet, SensorGraph

LOADS = {1: 6, 2: 2, 3: 1, 4: 7, 5: 7, 6: 8}
EDGES = {(4, 5): 2, (1, 2): 3, (3, 5): 5, (2, 6): 8, (1, 3): 11, (2, 3): 11}
CAPACITIES = {1: 19, 2: 19, 3: 19}
# Before rebalancing, controller 3 holds 4, 5, 6 (22 > 19) and controller 2 is idle.
CURRENT = {1: 1, 2: 1, 3: 1, 4: 3, 5: 3, 6: 3}

REMOVED = [(4, 5), (1, 2), (3, 5), (2, 6)]
RESTORED = {(1, 2), (4, 5)}


def worked_example() -> tuple[SensorGraph, ControllerSet, dict[int, int]]:
    return SensorGraph(LOADS, EDGES), ControllerSet.from_capacities(CAPACITIES), dict(CURRENT)
