"""Drifting sensor loads, rebalanced once per epoch.

Compares migrations of the overlap-aware assignment against a plan rebuilt
from scratch every epoch.

    python demos/simulation.py
"""

from aclbal.simulator import (LoadKind, LoadModel, generate_topology, provision_controllers,
                              run_episode)

graph = generate_topology(40, edge_density=0.1, load_range=(1, 10), seed=7)
controllers = provision_controllers(graph, 5, headroom=1.3)
print(f"{len(graph.loads)} sensors, {len(graph.edges)} links, "
      f"5 controllers of capacity {controllers[0].capacity}\n")

for kind, model in (("constant", LoadModel(LoadKind.CONSTANT)),
                    ("random walk", LoadModel(LoadKind.RANDOM_WALK, step=2, seed=1)),
                    ("spikes", LoadModel(LoadKind.SPIKE, spike_magnitude=8,
                                         spike_probability=0.05, seed=1))):
    log = run_episode(graph, controllers, model, 12, baseline=True)
    moved = sum(r.migrations for r in log.records[1:])
    naive = sum(r.baseline_migrations or 0 for r in log.records[1:])
    failed = sum(not r.feasible for r in log.records)
    peak = max(r.max_utilization for r in log.records)
    print(f"{kind:12s} migrations after epoch 1: {moved:3d} (from scratch: {naive:3d}), "
          f"infeasible epochs: {failed}, peak utilization {peak:.2f}")

print("\nper-epoch summary for the random walk:")
print(run_episode(graph, controllers, LoadModel(LoadKind.RANDOM_WALK, 2, seed=1), 6)
      .summary_csv(), end="")
