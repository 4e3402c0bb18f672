"""Three-stage assignment of sensors (SDN switches) to controllers.

The sensors form an undirected graph.  Each sensor carries a Packet-In load
and each link carries a flow load.  Balancing runs in three stages:

1. **Prune.**  While some connected component's load exceeds the capacity
   threshold, drop the lightest link inside an overloaded component.  Half of
   the dropped link's load is credited to each endpoint.  If the drop splits
   the component the credit lands on the endpoints' loads straight away and
   every node in the two new components has its buffer released; otherwise
   the credit waits in the endpoints' buffers.
2. **Merge.**  Put dropped links back, lightest first, whenever the merged
   component still fits.  Restoring a link withdraws the halves it credited.
3. **Assign.**  Match components to controllers one-to-one.  Without a prior
   assignment, the heaviest component goes to the largest controller and so
   on down.  With one, the matching that moves the fewest sensors wins, and
   the descending order only breaks ties.

Loads are integers and all bookkeeping is done in doubled units, so half a
link load is always an integer and conservation can be checked exactly.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from scipy.optimize import linear_sum_assignment

Edge = tuple[int, int]


class InfeasibleError(Exception):
    """No partition or assignment satisfies the controller capacities."""


def _edge(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class SensorGraph:
    loads: Mapping[int, int]
    edges: Mapping[Edge, int] = field(default_factory=dict)

    def __post_init__(self):
        loads = {int(s): _as_load(l, f"sensor {s}") for s, l in self.loads.items()}
        edges = {}
        for (u, v), l in self.edges.items():
            if u == v:
                raise ValueError(f"self-loop on sensor {u}")
            if u not in loads or v not in loads:
                raise ValueError(f"edge ({u}, {v}) references an unknown sensor")
            e = _edge(int(u), int(v))
            if e in edges:
                raise ValueError(f"duplicate edge {e}")
            edges[e] = _as_load(l, f"edge {e}")
        object.__setattr__(self, "loads", dict(sorted(loads.items())))
        object.__setattr__(self, "edges", dict(sorted(edges.items())))

    @property
    def sensors(self) -> list[int]:
        return list(self.loads)

    @property
    def total_load(self) -> int:
        return sum(self.loads.values())

    def adjacency(self, edges: Iterable[Edge] | None = None) -> dict[int, list[int]]:
        adj = {s: [] for s in self.loads}
        for u, v in (self.edges if edges is None else edges):
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def components(self, edges: Iterable[Edge] | None = None) -> list[tuple[int, ...]]:
        """Connected components, each sorted, ordered by smallest member."""
        return _components(self.adjacency(edges))

    def with_loads(self, loads: Mapping[int, int], edges: Mapping[Edge, int]) -> "SensorGraph":
        return SensorGraph(loads, edges)


def _as_load(value, what: str) -> int:
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise ValueError(f"{what}: load must be an integer, got {value!r}")
    if value < 0:
        raise ValueError(f"{what}: load must be non-negative")
    return int(value)


def _components(adj: Mapping[int, list[int]]) -> list[tuple[int, ...]]:
    seen, out = set(), []
    for start in sorted(adj):
        if start in seen:
            continue
        comp = _reach(adj, start)
        seen |= comp
        out.append(tuple(sorted(comp)))
    return out


def _reach(adj: Mapping[int, list[int]], start: int) -> set[int]:
    comp = {start}
    todo = deque([start])
    while todo:
        for nxt in adj[todo.popleft()]:
            if nxt not in comp:
                comp.add(nxt)
                todo.append(nxt)
    return comp


@dataclass(frozen=True)
class Controller:
    id: int
    capacity: float
    label: str = ""

    def __post_init__(self):
        if not self.capacity > 0:
            raise ValueError(f"controller {self.id}: capacity must be positive")


class ControllerSet(tuple):
    """Immutable, non-empty tuple of controllers with unique ids."""

    def __new__(cls, controllers: Iterable[Controller]):
        items = tuple(sorted(controllers, key=lambda c: c.id))
        if not items:
            raise ValueError("at least one controller is required")
        if len({c.id for c in items}) != len(items):
            raise ValueError("controller ids must be unique")
        return super().__new__(cls, items)

    @classmethod
    def from_capacities(cls, capacities: Mapping[int, float]) -> "ControllerSet":
        return cls(Controller(i, p) for i, p in capacities.items())

    @property
    def capacities(self) -> dict[int, float]:
        return {c.id: c.capacity for c in self}

    @property
    def total_capacity(self) -> float:
        return sum(c.capacity for c in self)


class LoadLedger:
    """Per-sensor adjusted load and buffer, in doubled units.

    Each removed link contributes its full load (two halves, doubled) split
    between its endpoints, either released into the adjusted load or parked
    in the buffer.  ``released`` and ``buffered`` remember which link every
    contribution came from so restoring a link can withdraw exactly its part.
    """

    def __init__(self, graph: SensorGraph):
        self.graph = graph
        self.base2 = {s: 2 * l for s, l in graph.loads.items()}
        self.released: dict[int, dict[Edge, int]] = {s: {} for s in graph.loads}
        self.buffered: dict[int, dict[Edge, int]] = {s: {} for s in graph.loads}

    def copy(self) -> "LoadLedger":
        other = LoadLedger.__new__(LoadLedger)
        other.graph = self.graph
        other.base2 = dict(self.base2)
        other.released = {s: dict(d) for s, d in self.released.items()}
        other.buffered = {s: dict(d) for s, d in self.buffered.items()}
        return other

    def adjusted2(self, sensor: int) -> int:
        return self.base2[sensor] + sum(self.released[sensor].values())

    def buffer2(self, sensor: int) -> int:
        return sum(self.buffered[sensor].values())

    def load2(self, group: Iterable[int]) -> int:
        return sum(self.adjusted2(s) for s in group)

    def adjusted(self, sensor: int) -> float:
        return self.adjusted2(sensor) / 2

    def credit(self, edge: Edge, *, release: bool) -> None:
        """Give each endpoint half of ``edge``'s load."""
        amount2 = self.graph.edges[edge]
        target = self.released if release else self.buffered
        for s in edge:
            target[s][edge] = amount2

    def release_buffers(self, sensors: Iterable[int]) -> None:
        for s in sensors:
            self.released[s].update(self.buffered[s])
            self.buffered[s].clear()

    def released_part2(self, edge: Edge) -> int:
        """Doubled load ``edge`` currently adds to its endpoints' adjusted loads."""
        return sum(self.released[s].get(edge, 0) for s in edge)

    def withdraw(self, edge: Edge) -> None:
        for s in edge:
            self.released[s].pop(edge, None)
            self.buffered[s].pop(edge, None)

    def totals2(self) -> tuple[int, int]:
        adjusted = sum(self.adjusted2(s) for s in self.base2)
        buffered = sum(self.buffer2(s) for s in self.base2)
        return adjusted, buffered

    def conserved(self, removed: Iterable[Edge]) -> bool:
        adjusted, buffered = self.totals2()
        expected = sum(self.base2.values()) + 2 * sum(self.graph.edges[e] for e in removed)
        return adjusted + buffered == expected


@dataclass(frozen=True)
class TraceStep:
    stage: int
    action: str  # "remove" or "restore"
    edge: Edge
    split: bool
    adjusted2: int
    buffered2: int
    outstanding2: int  # doubled load of links removed and not restored
    base2: int  # doubled sum of sensor loads

    @property
    def conserved(self) -> bool:
        return self.adjusted2 + self.buffered2 == self.base2 + self.outstanding2


@dataclass(frozen=True)
class Partition:
    graph: SensorGraph
    groups: tuple[tuple[int, ...], ...]
    retained: frozenset
    removed: tuple[Edge, ...]  # still removed, in removal order
    ledger: LoadLedger
    trace: tuple[TraceStep, ...] = ()
    restored: tuple[Edge, ...] = ()

    def group_load2(self, group: Iterable[int]) -> int:
        return self.ledger.load2(group)

    def group_load(self, group: Iterable[int]) -> float:
        return self.ledger.load2(group) / 2

    @property
    def loads(self) -> list[float]:
        return [self.group_load(g) for g in self.groups]


def _step(stage: int, action: str, edge: Edge, split: bool, ledger: LoadLedger,
          outstanding: Iterable[Edge]) -> TraceStep:
    adjusted, buffered = ledger.totals2()
    return TraceStep(stage, action, edge, split, adjusted, buffered,
                     2 * sum(ledger.graph.edges[e] for e in outstanding),
                     sum(ledger.base2.values()))


STRATEGIES = ("min", "max")


def stage1_prune(graph: SensorGraph, capacity: float, strategy: str = "min") -> Partition:
    """Drop links until every component's adjusted load is within ``capacity``.

    ``strategy="min"`` drops the lightest link first; ``"max"`` drops the
    heaviest.  Only links inside overloaded components are candidates.  Ties
    break on the smaller endpoint id, then the larger.
    """
    if not capacity > 0:
        raise ValueError("capacity must be positive")
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}")
    cap2 = 2 * capacity
    ledger = LoadLedger(graph)
    retained = set(graph.edges)
    removed: list[Edge] = []
    trace: list[TraceStep] = []
    sign = 1 if strategy == "min" else -1
    while True:
        comps = graph.components(retained)
        over = [c for c in comps if ledger.load2(c) > cap2]
        if not over:
            break
        for c in over:
            if len(c) == 1:
                raise InfeasibleError(
                    f"sensor {c[0]} alone carries {ledger.adjusted(c[0])} > capacity {capacity}")
        hot = set().union(*over)
        edge = min((e for e in retained if e[0] in hot),
                   key=lambda e: (sign * graph.edges[e], e[0], e[1]))
        retained.discard(edge)
        removed.append(edge)
        adj = graph.adjacency(retained)
        side_u = _reach(adj, edge[0])
        split = edge[1] not in side_u
        ledger.credit(edge, release=split)
        if split:
            ledger.release_buffers(side_u | _reach(adj, edge[1]))
        trace.append(_step(1, "remove", edge, split, ledger, removed))
    return Partition(graph, tuple(graph.components(retained)), frozenset(retained),
                     tuple(removed), ledger, tuple(trace))


def stage2_merge(partition: Partition, capacity: float) -> Partition:
    """Restore removed links, lightest first, while the result still fits."""
    graph = partition.graph
    cap2 = 2 * capacity
    ledger = partition.ledger.copy()
    retained = set(partition.retained)
    pending = list(partition.removed)
    restored: list[Edge] = []
    trace = list(partition.trace)
    while pending:
        comps = graph.components(retained)
        where = {s: i for i, c in enumerate(comps) for s in c}
        load2 = [ledger.load2(c) for c in comps]
        chosen = None
        for e in sorted(pending, key=lambda e: (graph.edges[e], e[0], e[1])):
            cu, cv = where[e[0]], where[e[1]]
            merged = load2[cu] + (load2[cv] if cu != cv else 0) - ledger.released_part2(e)
            if merged <= cap2:
                chosen = e
                break
        if chosen is None:
            break
        ledger.withdraw(chosen)
        retained.add(chosen)
        pending.remove(chosen)
        restored.append(chosen)
        trace.append(_step(2, "restore", chosen, False, ledger, pending))
    return Partition(graph, tuple(graph.components(retained)), frozenset(retained),
                     tuple(pending), ledger, tuple(trace), tuple(restored))


class Role(enum.Enum):
    MASTER = "master"
    SLAVE = "slave"
    EQUAL = "equal"


@dataclass(frozen=True)
class MigrationEvent:
    sensor: int
    source: int
    target: int

    @property
    def roles(self) -> tuple[tuple[int, Role], ...]:
        """Role changes in issue order: promote the target, then demote the source."""
        return ((self.target, Role.MASTER), (self.source, Role.SLAVE))


@dataclass(frozen=True)
class AssignmentPlan:
    groups: tuple[tuple[int, ...], ...]
    controllers: tuple[int, ...]  # controller of each group
    group_loads: tuple[float, ...]
    migrations: tuple[MigrationEvent, ...] = ()
    threshold: float | None = None
    stage1: Partition | None = field(default=None, compare=False, repr=False)
    stage2: Partition | None = field(default=None, compare=False, repr=False)

    @property
    def migration_count(self) -> int:
        return len(self.migrations)

    @property
    def assignment(self) -> dict[int, int]:
        return {s: c for g, c in zip(self.groups, self.controllers) for s in g}

    @property
    def reconnected_groups(self) -> list[int]:
        """Indices of groups with at least one migrated sensor."""
        moved = {m.sensor for m in self.migrations}
        return [i for i, g in enumerate(self.groups) if moved.intersection(g)]

    @property
    def max_group_load(self) -> float:
        return max(self.group_loads, default=0.0)

    def utilization(self, controllers: ControllerSet) -> float:
        caps = controllers.capacities
        return max((l / caps[c] for l, c in zip(self.group_loads, self.controllers)),
                   default=0.0)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "groups": [{"sensors": list(g), "controller": c, "load": l}
                       for g, c, l in zip(self.groups, self.controllers, self.group_loads)],
            "migrations": [{"sensor": m.sensor, "from": m.source, "to": m.target,
                            "roles": [[c, r.value] for c, r in m.roles]}
                           for m in self.migrations],
            "migration_count": self.migration_count,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def summary_csv(self) -> str:
        return ("groups,migrations,max_group_load\n"
                f"{len(self.groups)},{self.migration_count},{self.max_group_load:g}\n")


def _previous(current) -> dict[int, int]:
    if current is None:
        return {}
    if isinstance(current, AssignmentPlan):
        return current.assignment
    return {int(s): int(c) for s, c in current.items()}


def count_migrations(group: Iterable[int], controller: int, previous: Mapping[int, int]) -> int:
    return sum(1 for s in group if s in previous and previous[s] != controller)


def stage3_assign(partition: Partition, controllers: ControllerSet,
                  current: AssignmentPlan | Mapping[int, int] | None = None) -> AssignmentPlan:
    """Match groups to controllers, one group per controller, moving as few sensors as possible."""
    groups = list(partition.groups)
    if len(groups) > len(controllers):
        raise InfeasibleError(
            f"{len(groups)} groups but only {len(controllers)} controllers")
    loads2 = [partition.group_load2(g) for g in groups]
    prev = _previous(current)
    g_rank = {gi: r for r, gi in enumerate(
        sorted(range(len(groups)), key=lambda i: (-loads2[i], groups[i][0])))}
    ctrl = sorted(controllers, key=lambda c: (-c.capacity, c.id))
    big = len(groups) + 1  # a single migration outweighs every ordering penalty
    infeasible = big * (len(partition.graph.loads) + 2)
    cost = np.zeros((len(groups), len(ctrl)), dtype=np.int64)
    for i, g in enumerate(groups):
        for j, c in enumerate(ctrl):
            if loads2[i] > 2 * c.capacity:
                cost[i, j] = infeasible
            else:
                cost[i, j] = big * count_migrations(g, c.id, prev) + (g_rank[i] != j)
    rows, cols = linear_sum_assignment(cost) if groups else ([], [])
    if any(cost[i, j] >= infeasible for i, j in zip(rows, cols)):
        raise InfeasibleError("no capacity-respecting matching of groups to controllers")
    chosen = dict(zip(rows, cols))
    assigned = tuple(ctrl[chosen[i]].id for i in range(len(groups)))
    events = []
    for g, c in zip(groups, assigned):
        for s in g:
            if s in prev and prev[s] != c:
                events.append(MigrationEvent(s, prev[s], c))
    events.sort(key=lambda m: m.sensor)
    return AssignmentPlan(tuple(groups), assigned, tuple(l / 2 for l in loads2),
                          tuple(events), stage2=partition)


def balance(graph: SensorGraph, controllers: ControllerSet,
            current: AssignmentPlan | Mapping[int, int] | None = None,
            strategy: str = "min") -> AssignmentPlan:
    """Run the three stages, tightening the threshold when assignment fails.

    Stages 1 and 2 use the largest controller capacity as their threshold.
    If no one-to-one matching respects every controller's own capacity, they
    are re-run with the next smaller distinct capacity.
    """
    if graph.total_load > controllers.total_capacity:
        raise InfeasibleError(
            f"total load {graph.total_load} exceeds total capacity "
            f"{controllers.total_capacity}")
    failure = None
    for threshold in sorted({c.capacity for c in controllers}, reverse=True):
        try:
            p1 = stage1_prune(graph, threshold, strategy)
            p2 = stage2_merge(p1, threshold)
            plan = stage3_assign(p2, controllers, current)
        except InfeasibleError as exc:
            failure = exc
            continue
        return AssignmentPlan(plan.groups, plan.controllers, plan.group_loads,
                              plan.migrations, threshold, p1, p2)
    raise InfeasibleError(str(failure)) from failure


def rebalance_from_scratch(graph: SensorGraph, controllers: ControllerSet,
                           current: AssignmentPlan | Mapping[int, int] | None = None,
                           strategy: str = "min") -> AssignmentPlan:
    """Baseline that ignores the current assignment when matching.

    Migrations are still counted against ``current`` so the two approaches
    can be compared.
    """
    fresh = balance(graph, controllers, None, strategy)
    prev = _previous(current)
    events = tuple(MigrationEvent(s, prev[s], c)
                   for s, c in sorted(fresh.assignment.items())
                   if s in prev and prev[s] != c)
    return AssignmentPlan(fresh.groups, fresh.controllers, fresh.group_loads, events,
                          fresh.threshold, fresh.stage1, fresh.stage2)
