from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from impflow.engine import SimConfig, Simulator, run
from impflow.flowmodel import Flow, FlowState, ResponseUnit
from impflow.protocol import (FlowView, LinkView, Plan, RateRequest, admission_check, allocate_on_link,
                              allocate_rate_on_node, apportion, distribute_spare, final_rates, split_demand,
                              victim_order)
from impflow.topology import build_bcube
from impflow.workload import WorkloadSpec, gen_partition_aggregate

from scenarios import worked_example


def test_split_demand_and_final_rates():
    assert split_demand(120_000, [180_000, 220_000]) == [54_000, 66_000]
    assert final_rates(120_000, [60_000, 90_000]) == [48_000, 72_000]
    assert split_demand(10, [0, 0]) == [5, 5]
    assert final_rates(1, [1, 2]) == [Fraction(1, 3), Fraction(2, 3)]
    with pytest.raises(ValueError):
        final_rates(120_000, [40_000, 60_000])


def test_apportion():
    assert apportion(120_000, [180_000, 220_000]) == [54_000, 66_000]
    assert apportion(10, [1, 1, 1]) == [4, 3, 3]
    assert apportion(7, [0, 0]) == [4, 3]


@given(st.integers(0, 10**9), st.lists(st.integers(0, 10**9), min_size=1, max_size=4))
def test_apportion_sums_and_tracks_fractions(total, weights):
    parts = apportion(total, weights)
    assert sum(parts) == total
    if sum(weights):
        exact = split_demand(total, weights)
        assert all(abs(p - e) < 1 for p, e in zip(parts, exact))


def test_admission_check():
    assert admission_check(5, [2, 1])
    assert not admission_check(5, [9])
    assert admission_check(5, [])
    assert not admission_check(3, [2, 1])  # equal mass does not preempt


def test_victim_order():
    views = [FlowView("a", 1, 0, 2.0, 10), FlowView("b", 1, 0, 1.0, 10),
             FlowView("c", 1, 0, 2.0, 20), FlowView("d", 1, 0, 2.0, 20)]
    assert [v.flow_id for v in victim_order(views)] == ["b", "d", "c", "a"]


def test_distribute_spare():
    assert distribute_spare(90_000, [2, 1]) == [60_000, 30_000]
    assert distribute_spare(90_000, [3]) == [90_000]
    assert distribute_spare(90_000, [3], caps=[10_000]) == [10_000]
    assert distribute_spare(0, [2, 1]) == [0, 0]
    # what a capped flow cannot use goes to the rest
    assert distribute_spare(90_000, [1, 1], caps=[15_000, None or float("inf")]) == [15_000, 75_000]


@settings(max_examples=200)
@given(st.integers(0, 10**7), st.lists(st.floats(1e-6, 1e3), min_size=1, max_size=6), st.data())
def test_distribute_spare_properties(residual, fics, data):
    caps = data.draw(st.lists(st.integers(0, 10**7), min_size=len(fics), max_size=len(fics)))
    inc = distribute_spare(residual, fics, caps)
    assert all(0 <= i <= c for i, c in zip(inc, caps))
    assert sum(inc) <= residual
    # nothing is left on the table beyond rounding unless everyone is capped
    if sum(caps) >= residual:
        assert residual - sum(inc) <= len(fics) + 1


def test_node_grant_with_room():
    req = RateRequest("new", 54_000, 1.0)
    view = LinkView(0, 180_000, [])
    assert allocate_rate_on_node(req, [view]) >= 54_000


def test_node_preempts_low_fic():
    req = RateRequest("new", 100, 5.0)
    view = LinkView(0, 0, [FlowView("old", 100, 0, 2.0, 10)])
    plan = Plan(5.0)
    assert allocate_rate_on_node(req, [view], plan, node=7) == 100
    assert plan.victims == {"old": (2.0, 7)}
    assert plan.budget == 3.0


def test_node_refuses_high_fic():
    req = RateRequest("new", 100, 5.0)
    view = LinkView(0, 0, [FlowView("old", 100, 0, 9.0, 10)])
    plan = Plan(5.0)
    assert allocate_rate_on_node(req, [view], plan) == 0
    assert plan.victims == {}


def test_extras_reclaimed_before_preemption():
    view = LinkView(0, 0, [FlowView("old", 100, 60, 9.0, 10, path=1)])
    plan = Plan(5.0)
    assert allocate_on_link(view, 50, 5.0, plan) == 50
    assert plan.reclaimed == {("old", 1): 50} and plan.victims == {}


def test_budget_shared_across_stages():
    plan = Plan(5.0)
    a = LinkView(0, 0, [FlowView("x", 100, 0, 3.0, 10)])
    b = LinkView(1, 0, [FlowView("y", 100, 0, 3.0, 10)])
    assert allocate_on_link(a, 100, 5.0, plan) == 100
    # budget 2 left, not enough to also displace y
    assert allocate_on_link(b, 100, 5.0, plan) == 0


def test_grant_is_min_of_stages():
    req = RateRequest("new", 100, 1.0)
    assert allocate_rate_on_node(req, [LinkView(0, 1000, []), LinkView(1, 40, [])]) == 40


def test_request_validation():
    with pytest.raises(ValueError):
        RateRequest("x", -1, 1.0)
    with pytest.raises(ValueError):
        RateRequest("x", 1, float("nan"))
    RateRequest("x", 1, 0.0)


def test_worked_example_trace():
    sim, f = worked_example()
    trace = sim.run([f])
    got = {(kind, detail) for _, kind, fid, detail in trace.records if fid == "F"}
    assert ("RATE_REQUEST", "rate=120000 p0=66000 p1=54000") in got
    assert ("RATE_RESPONSE", "p0=90000 p1=60000") in got
    assert ("ALLOCATION_NOTIFY", "p0=72000 p1=48000") in got
    assert met(trace) == {"F"}


def met(trace):
    return {fid for fid, ok in trace.met().items() if ok}


def one_link(cap=200_000):
    return SimConfig(n=2, k=0, capacity_bps=cap, rtt_min_us=0, rtt_max_us=0, processing_delay_us=0)


def unit_flow(fid, size, begin, deadline, imp=1.0, src=0):
    return Flow(fid, src, 1, begin, deadline, (ResponseUnit(imp, size),))


def kinds(trace, fid):
    return [kind for _, kind, f, _ in trace.records if f == fid]


def test_suspended_at_source_recovers_on_completion():
    # A takes the whole link; B can neither fit into A's surplus nor outrank A
    a = unit_flow("A", 1500, 0, 100_000_000, imp=10.0)
    b = unit_flow("B", 2500, 1_000_000, 250_000_000)
    trace = run(one_link(), [a, b])
    assert "SUSPEND" in kinds(trace, "B")
    assert [d for _, k, f, d in trace.records if f == "B" and k == "SUSPEND"] == ["at=source"]
    assert "START" in kinds(trace, "B")
    assert met(trace) == {"A", "B"}


def test_preemption_and_recovery():
    # B is far more important per byte-second and displaces A, which comes back after B
    a = unit_flow("A", 2000, 0, 300_000_000)
    b = unit_flow("B", 1800, 1_000_000, 81_000_000, imp=50.0)
    trace = run(one_link(), [a, b])
    ka = kinds(trace, "A")
    assert "SUSPEND" in ka and "RECOVER_HINT" in ka and "RESUME" in ka
    assert ("SUSPEND", "by=B") in {(k, d) for _, k, f, d in trace.records if f == "A"}
    assert met(trace) == {"A", "B"}


def test_suspended_past_deadline_is_dropped():
    a = unit_flow("A", 2500, 0, 100_000_000, imp=10.0)
    b = unit_flow("B", 2400, 1_000_000, 110_000_000)
    trace = run(one_link(), [a, b])
    kb = kinds(trace, "B")
    assert kb[-1] == "EXPIRE" and "START" not in kb


def test_release_without_suspended_only_raises_rates():
    a = unit_flow("A", 500, 0, 100_000_000)
    b = unit_flow("B", 1500, 0, 100_000_000)
    trace = run(one_link(), [a, b])
    assert "SUSPEND" not in {k for _, k, _, _ in trace.records}
    rates_b = [int(d.split("=")[1]) for _, k, f, d in trace.records if f == "B" and k == "RATE"]
    assert rates_b[-2:] == [200_000, 0]  # whole link once A is gone, then the stop at send-done


def test_zero_importance_flow_is_served():
    trace = run(one_link(), [unit_flow("Z", 500, 0, 100_000_000, imp=0.0)])
    assert met(trace) == {"Z"}


@pytest.mark.parametrize("seed", range(4))
def test_links_never_oversubscribed(seed):
    topo = build_bcube(5, 2)
    flows = gen_partition_aggregate(WorkloadSpec("heavy", 0.02, seed=seed), topo)
    sim = Simulator(SimConfig(seed=seed), topo)
    sim.run(flows)
    sim.audit_all()
    for fr in sim.flows.values():
        if fr.state == FlowState.COMPLETED:
            assert fr.completed_at <= fr.flow.deadline_ns
