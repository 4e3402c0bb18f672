import itertools
import json

import pytest
from hypothesis import given, settings, strategies as st

from aclbal.balancer import (AssignmentPlan, ControllerSet, InfeasibleError, LoadLedger,
                             Role, SensorGraph, balance, rebalance_from_scratch, stage1_prune,
                             stage2_merge, stage3_assign)
from aclbal.worked import CURRENT, REMOVED, RESTORED, worked_example


def caps(*ps):
    return ControllerSet.from_capacities({i + 1: p for i, p in enumerate(ps)})


# -- validation -------------------------------------------------------------

@pytest.mark.parametrize("loads, edges", [
    ({1: -1}, {}),
    ({1: 1.5}, {}),
    ({1: 1}, {(1, 1): 2}),
    ({1: 1}, {(1, 2): 2}),
    ({1: 1, 2: 1}, {(1, 2): 2, (2, 1): 3}),
])
def test_graph_validation(loads, edges):
    with pytest.raises(ValueError):
        SensorGraph(loads, edges)


def test_controller_validation():
    with pytest.raises(ValueError):
        caps()
    with pytest.raises(ValueError):
        caps(0)


# -- stage 1 ------------------------------------------------------------------

def test_feasible_graph_untouched():
    g = SensorGraph({1: 2, 2: 3}, {(1, 2): 4})
    p = stage1_prune(g, 10)
    assert p.removed == () and p.groups == ((1, 2),) and p.trace == ()


def test_singleton_over_capacity():
    with pytest.raises(InfeasibleError):
        stage1_prune(SensorGraph({0: 11}), 10)


def test_split_credits_half_each():
    g = SensorGraph({1: 4, 2: 4}, {(1, 2): 6})
    p = stage1_prune(g, 7)
    assert p.removed == ((1, 2),) and p.trace[0].split
    assert p.loads == [7.0, 7.0]


def test_non_split_removal_buffers():
    # triangle: the first removal keeps it connected, so its halves wait
    g = SensorGraph({1: 4, 2: 4, 3: 4}, {(1, 2): 1, (2, 3): 2, (1, 3): 9})
    p = stage1_prune(g, 10)
    first = p.trace[0]
    assert first.edge == (1, 2) and not first.split and first.buffered2 == 2
    assert p.trace[-1].buffered2 == 0 or any(s.split for s in p.trace)


def test_buffers_released_on_split():
    g = SensorGraph({1: 4, 2: 4, 3: 4}, {(1, 2): 1, (2, 3): 2, (1, 3): 9})
    p = stage1_prune(g, 10)
    assert p.removed == ((1, 2), (2, 3)) and p.trace[1].split
    # 2 was split off: its pending half of (1,2) is now in its adjusted load
    assert p.ledger.adjusted(2) == 4 + 0.5 + 1
    assert p.ledger.adjusted(1) == 4 + 0.5 and p.trace[1].buffered2 == 0


def test_max_strategy_cuts_heaviest():
    g = SensorGraph({1: 5, 2: 5, 3: 5}, {(1, 2): 1, (2, 3): 9})
    assert stage1_prune(g, 12, "max").removed[0] == (2, 3)
    assert stage1_prune(g, 12, "min").removed[0] == (1, 2)


def test_equal_loads_break_on_endpoints():
    g = SensorGraph({1: 5, 2: 5, 3: 5, 4: 5}, {(3, 4): 1, (1, 2): 1, (2, 3): 1})
    assert stage1_prune(g, 12).removed[0] == (1, 2)


def test_only_overloaded_components_cut():
    g = SensorGraph({1: 1, 2: 1, 3: 8, 4: 8}, {(1, 2): 1, (3, 4): 5})
    assert stage1_prune(g, 11).removed == ((3, 4),)


# -- stage 2 ------------------------------------------------------------------

def test_nothing_removed_nothing_restored():
    g = SensorGraph({1: 1, 2: 1}, {(1, 2): 1})
    p = stage2_merge(stage1_prune(g, 10), 10)
    assert p.restored == () and p.groups == ((1, 2),)


def test_restore_withdraws_halves():
    # stage 2 may only restore links whose merged group still fits
    g = SensorGraph({1: 3, 2: 3, 3: 3}, {(1, 2): 1, (2, 3): 2})
    p1 = stage1_prune(g, 6)
    p2 = stage2_merge(p1, 6)
    for grp in p2.groups:
        assert p2.group_load(grp) <= 6
    assert len(p2.groups) <= len(p1.groups)
    assert all(s.conserved for s in p2.trace)


def test_worked_example_stages():
    g, cs, cur = worked_example()
    p1 = stage1_prune(g, 19)
    assert list(p1.removed) == REMOVED
    p2 = stage2_merge(p1, 19)
    assert set(p2.restored) == RESTORED and set(p2.removed) == {(3, 5), (2, 6)}
    assert p2.groups == ((1, 2, 3), (4, 5), (6,))
    assert p2.loads == [15.5, 16.5, 12.0]


# -- stage 3 ------------------------------------------------------------------

def test_worked_example_assignment():
    g, cs, cur = worked_example()
    plan = balance(g, cs, cur)
    assert plan.assignment == {1: 1, 2: 1, 3: 1, 4: 3, 5: 3, 6: 2}
    assert plan.migration_count == 1 and plan.reconnected_groups == [2]
    m = plan.migrations[0]
    assert (m.sensor, m.source, m.target) == (6, 3, 2)
    assert m.roles == ((2, Role.MASTER), (3, Role.SLAVE))
    assert plan.summary_csv() == "groups,migrations,max_group_load\n3,1,16.5\n"


def test_no_prior_plan_sorts_descending():
    g, cs, _ = worked_example()
    plan = balance(g, caps(17, 19, 16))
    by_group = dict(zip(plan.groups, plan.controllers))
    assert by_group == {(4, 5): 2, (1, 2, 3): 1, (6,): 3}
    assert plan.migration_count == 0


def test_fixed_point_zero_migrations():
    g, cs, cur = worked_example()
    first = balance(g, cs, cur)
    again = balance(g, cs, first)
    assert again.migration_count == 0 and again.assignment == first.assignment


def test_identical_groups_tie_break():
    g = SensorGraph({3: 5, 1: 5})
    plan = balance(g, caps(5, 5))
    assert plan.groups == ((1,), (3,)) and plan.controllers == (1, 2)


def test_too_many_groups():
    g = SensorGraph({1: 5, 2: 5, 3: 5})
    with pytest.raises(InfeasibleError):
        stage3_assign(stage1_prune(g, 6), caps(6, 6))


def test_pigeonhole():
    with pytest.raises(InfeasibleError, match="total load"):
        balance(SensorGraph({1: 5, 2: 5}, {(1, 2): 1}), caps(4, 4))


def test_single_sensor_single_controller():
    plan = balance(SensorGraph({0: 3}), caps(3))
    assert plan.groups == ((0,),) and plan.migration_count == 0


def test_threshold_tightening():
    # at threshold 8 the chain splits into two 5.5 groups, and only one
    # controller can take more than 5, so the threshold drops to 5
    g = SensorGraph({1: 2, 2: 3, 3: 1, 4: 4}, {(1, 2): 1, (2, 3): 1, (3, 4): 1})
    assert stage2_merge(stage1_prune(g, 8), 8).loads == [5.5, 5.5]
    plan = balance(g, caps(8, 5, 5))
    assert plan.threshold == 5
    assert plan.groups == ((1,), (2, 3), (4,)) and plan.group_loads == (2.5, 5.0, 4.5)


def test_baseline_ignores_current():
    g, cs, cur = worked_example()
    base = rebalance_from_scratch(g, cs, cur)
    smart = balance(g, cs, cur)
    assert base.migration_count >= smart.migration_count
    assert base.groups == smart.groups


def test_json_output():
    g, cs, cur = worked_example()
    d = json.loads(balance(g, cs, cur).to_json())
    assert d["migration_count"] == 1
    assert d["migrations"] == [{"sensor": 6, "from": 3, "to": 2,
                                "roles": [[2, "master"], [3, "slave"]]}]


def test_dict_current_equals_plan_current():
    g, cs, cur = worked_example()
    p = balance(g, cs, cur)
    assert balance(g, cs, p) == balance(g, cs, p.assignment)
    assert isinstance(p, AssignmentPlan) and CURRENT == cur


# -- properties -----------------------------------------------------------

@st.composite
def graphs(draw, max_n=7):
    n = draw(st.integers(1, max_n))
    loads = {i: draw(st.integers(0, 10)) for i in range(n)}
    edges = {}
    for v in range(1, n):
        u = draw(st.integers(0, v - 1))
        edges[(u, v)] = draw(st.integers(0, 10))
    for u, v in itertools.combinations(range(n), 2):
        if (u, v) not in edges and draw(st.integers(0, 3)) == 0:
            edges[(u, v)] = draw(st.integers(0, 10))
    return SensorGraph(loads, edges)


@settings(max_examples=150)
@given(graphs(), st.integers(1, 30), st.sampled_from(["min", "max"]))
def test_trace_conservation(g, cap, strategy):
    try:
        p1 = stage1_prune(g, cap, strategy)
    except InfeasibleError:
        return
    p2 = stage2_merge(p1, cap)
    for step in p2.trace:
        assert step.conserved
    assert p2.ledger.conserved(p2.removed)
    assert len(p2.groups) <= len(p1.groups)
    assert all(p2.group_load(grp) <= cap for grp in p2.groups)


@settings(max_examples=150)
@given(graphs(), st.lists(st.integers(1, 40), min_size=1, max_size=4),
       st.dictionaries(st.integers(0, 6), st.integers(1, 4)))
def test_balance_output_invariants(g, cap_list, prior):
    cs = caps(*cap_list)
    prior = {s: c for s, c in prior.items() if s in g.loads and c in cs.capacities}
    try:
        plan = balance(g, cs, prior)
    except InfeasibleError:
        return
    seen = [s for grp in plan.groups for s in grp]
    assert sorted(seen) == g.sensors
    retained = plan.stage2.retained
    for grp in plan.groups:
        assert len(g.components([e for e in retained if e[0] in grp])[0]) >= 1
        sub = [e for e in retained if e[0] in grp and e[1] in grp]
        assert len(SensorGraph({s: 0 for s in grp}, {e: 0 for e in sub}).components()) == 1
    assert len(set(plan.controllers)) == len(plan.controllers)
    capacity = cs.capacities
    assert all(l <= capacity[c] for l, c in zip(plan.group_loads, plan.controllers))
    assert plan.migration_count == sum(1 for s, c in plan.assignment.items()
                                       if s in prior and prior[s] != c)


@settings(max_examples=60)
@given(graphs(), st.integers(5, 40))
def test_deterministic(g, cap):
    cs = caps(cap, cap, cap)
    try:
        a = balance(g, cs)
    except InfeasibleError:
        return
    assert balance(g, cs).to_json() == a.to_json()


def test_ledger_doubled_units():
    g = SensorGraph({1: 1, 2: 1}, {(1, 2): 3})
    led = LoadLedger(g)
    led.credit((1, 2), release=False)
    assert led.totals2() == (4, 6)
    led.release_buffers([1, 2])
    assert led.totals2() == (10, 0) and led.adjusted(1) == 2.5
    assert led.conserved([(1, 2)])
    led.withdraw((1, 2))
    assert led.conserved([])
