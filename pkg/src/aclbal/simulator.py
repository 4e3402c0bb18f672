"""Seeded sensor topologies, load drift, and epoch-by-epoch rebalancing."""

from __future__ import annotations

import enum
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .balancer import (AssignmentPlan, ControllerSet, InfeasibleError, SensorGraph,
                       balance, rebalance_from_scratch)


def generate_topology(n: int, edge_density: float = 0.3, load_range: tuple[int, int] = (1, 10),
                      seed: int = 0, edge_load_range: tuple[int, int] | None = None
                      ) -> SensorGraph:
    """Random connected graph: a random spanning tree plus extra links.

    ``edge_density`` is the fraction of all possible links present; anything
    below what a spanning tree needs is raised to it.  Loads are uniform
    integers in the (inclusive) ranges.
    """
    if n < 1:
        raise ValueError("need at least one sensor")
    rng = np.random.default_rng(seed)
    lo, hi = load_range
    elo, ehi = edge_load_range or load_range
    loads = {i: int(v) for i, v in enumerate(rng.integers(lo, hi + 1, size=n))}
    edges = set()
    order = rng.permutation(n)
    for k in range(1, n):
        u, v = int(order[k]), int(order[int(rng.integers(k))])
        edges.add((min(u, v), max(u, v)))
    possible = n * (n - 1) // 2
    target = min(possible, max(n - 1, round(edge_density * possible)))
    if target > len(edges):
        rest = [(u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in edges]
        pick = rng.choice(len(rest), size=target - len(edges), replace=False)
        edges.update(rest[int(i)] for i in pick)
    edge_loads = rng.integers(elo, ehi + 1, size=len(edges))
    return SensorGraph(loads, {e: int(l) for e, l in zip(sorted(edges), edge_loads)})


def provision_controllers(graph: SensorGraph, count: int, headroom: float = 1.5) -> ControllerSet:
    """``count`` equal controllers sized so the whole offered load fits with ``headroom``.

    Offered load counts node loads plus edge loads, since a removed edge
    still lands half on each endpoint.
    """
    if count < 1:
        raise ValueError("need at least one controller")
    offered = graph.total_load + sum(graph.edges.values())
    per = max(math.ceil(offered * headroom / count), _heaviest_singleton(graph))
    return ControllerSet.from_capacities({c: per for c in range(1, count + 1)})


def _heaviest_singleton(graph: SensorGraph) -> int:
    """Largest load any sensor can carry alone, counting half of every incident edge."""
    doubled = {s: 2 * l for s, l in graph.loads.items()}
    for (u, v), l in graph.edges.items():
        doubled[u] += l
        doubled[v] += l
    return -(-max(doubled.values()) // 2)


class LoadKind(enum.Enum):
    CONSTANT = "constant"
    RANDOM_WALK = "random-walk"
    SPIKE = "spike"


@dataclass(frozen=True)
class LoadModel:
    kind: LoadKind = LoadKind.CONSTANT
    step: int = 1
    spike_magnitude: int = 10
    spike_probability: float = 0.1
    seed: int = 0


def evolve_loads(graph: SensorGraph, model: LoadModel, epoch: int) -> SensorGraph:
    """Perturb loads for ``epoch``; the result depends only on (seed, epoch)."""
    if model.kind is LoadKind.CONSTANT:
        return graph
    rng = np.random.default_rng([model.seed, epoch])
    loads = dict(graph.loads)
    edges = dict(graph.edges)
    if model.kind is LoadKind.RANDOM_WALK:
        if model.step == 0:
            return graph
        d = rng.integers(-model.step, model.step + 1, size=len(loads))
        loads = {s: max(0, l + int(x)) for (s, l), x in zip(loads.items(), d)}
        d = rng.integers(-model.step, model.step + 1, size=len(edges))
        edges = {e: max(0, l + int(x)) for (e, l), x in zip(edges.items(), d)}
    else:
        hit = rng.random(len(loads)) < model.spike_probability
        loads = {s: l + (model.spike_magnitude if h else 0)
                 for (s, l), h in zip(loads.items(), hit)}
    return SensorGraph(loads, edges)


def graph_digest(graph: SensorGraph) -> str:
    blob = json.dumps([sorted(graph.loads.items()),
                       [[u, v, l] for (u, v), l in graph.edges.items()]])
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    digest: str
    feasible: bool
    plan: AssignmentPlan | None
    migrations: int
    max_utilization: float
    baseline_migrations: int | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch, "digest": self.digest, "feasible": self.feasible,
            "migrations": self.migrations, "max_utilization": round(self.max_utilization, 6),
            "baseline_migrations": self.baseline_migrations, "error": self.error,
            "plan": self.plan.to_dict() if self.plan is not None else None,
        }


@dataclass
class EpisodeLog:
    records: list[EpochRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_jsonl(self) -> str:
        lines = [json.dumps({"meta": self.meta}, sort_keys=True)]
        lines += [json.dumps(r.to_dict(), sort_keys=True) for r in self.records]
        return "\n".join(lines) + "\n"

    def summary_csv(self) -> str:
        buf = io.StringIO()
        buf.write("epoch,migrations,max_utilization,feasible\n")
        for r in self.records:
            buf.write(f"{r.epoch},{r.migrations},{r.max_utilization:.6f},"
                      f"{str(r.feasible).lower()}\n")
        return buf.getvalue()


def run_episode(graph: SensorGraph, controllers: ControllerSet, model: LoadModel,
                epochs: int, current: AssignmentPlan | dict | None = None,
                strategy: str = "min", baseline: bool = False) -> EpisodeLog:
    """Evolve loads and rebalance once per epoch (epochs are numbered from 1).

    An infeasible epoch is logged and the previous plan stays in force.  With
    ``baseline`` set, each record also carries the migration count of a plan
    rebuilt from scratch, for comparison.
    """
    if epochs < 1:
        raise ValueError("epochs must be at least 1")
    log = EpisodeLog(meta={"epochs": epochs, "model": model.kind.value,
                           "model_seed": model.seed, "strategy": strategy})
    for epoch in range(1, epochs + 1):
        graph = evolve_loads(graph, model, epoch)
        digest = graph_digest(graph)
        try:
            plan = balance(graph, controllers, current, strategy)
        except InfeasibleError as exc:
            log.records.append(EpochRecord(epoch, digest, False, None, 0, 0.0, error=str(exc)))
            continue
        base = None
        if baseline:
            base = rebalance_from_scratch(graph, controllers, current, strategy).migration_count
        log.records.append(EpochRecord(epoch, digest, True, plan, plan.migration_count,
                                       plan.utilization(controllers), base))
        current = plan
    return log

