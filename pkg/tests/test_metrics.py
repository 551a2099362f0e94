import pytest
from hypothesis import given, strategies as st

from impflow import metrics
from impflow.engine import SimConfig, SimulationTrace, run
from impflow.flowmodel import Flow, ResponseUnit, split_flow
from impflow.workload import GroundTruth

D = 10_000_000


def mk(fid, imps=(1.0,), size=1000, rank_prefix=None):
    units = tuple(ResponseUnit(float(m), size, f"{rank_prefix or fid}{j}") for j, m in enumerate(imps))
    return Flow(fid, 1, 0, 0, D, units)


def trace(flows, done):
    recs = [(t, "COMPLETE", fid, "") for fid, t in done.items()]
    return SimulationTrace(sorted(recs), flows, max(done.values(), default=0))


def test_goodput():
    flows = [mk(c) for c in "ABCD"]
    assert metrics.goodput(trace(flows, {c: D for c in "ABCD"})) == 4 * 1000
    assert metrics.goodput(trace(flows, {})) == 0
    assert metrics.goodput(trace(flows, {"A": 1, "B": 2, "C": 3})) == 3 * 1000
    # one nanosecond late counts for nothing
    assert metrics.goodput(trace(flows, {"A": D + 1})) == 0


def test_aggregated_importance():
    f = mk("f", (10, 10, 1, 1))
    assert metrics.aggregated_importance(trace([f], {"f": 5})) == 22
    assert metrics.aggregated_importance(trace([f], {})) == 0
    hi, lo = split_flow(f, 2)
    assert metrics.aggregated_importance(trace([hi, lo], {hi.id: 5})) == 20


def test_deadline_ratio():
    flows = [mk(c) for c in "ABCD"]
    assert metrics.deadline_ratio(trace(flows, {c: 1 for c in "ABCD"})) == 1.0
    assert metrics.deadline_ratio(trace(flows, {c: 1 for c in "ABC"})) == 0.75
    with pytest.raises(ValueError):
        metrics.deadline_ratio(trace(flows, {}), cls="important")
    hi, lo = split_flow(mk("f", (10, 10, 1, 1)), 2)
    t = trace([hi, lo], {hi.id: 1})
    assert metrics.deadline_ratio(t, cls="important") == 1.0
    assert metrics.deadline_ratio(t, cls="regular") == 0.0
    with pytest.raises(ValueError):
        metrics.deadline_ratio(t, cls="vip")


TRUTH = GroundTruth({"q": [f"r{i}" for i in range(1, 21)]})


def test_precision_examples():
    top = [f"r{i}" for i in range(1, 11)]
    assert metrics.precision_at_k(top, TRUTH, 10) == 1.0
    assert metrics.precision_at_k(["r1", "r2", "x1", "x2"], TRUTH, 10) == 0.5
    assert metrics.precision_at_k([], TRUTH, 10) == 0.0
    assert metrics.precision_at_k(["r1", "r2", "x1", "x2"], TRUTH, 10, mode="k") == 0.2
    with pytest.raises(ValueError):
        metrics.precision_at_k(top, TRUTH, 21)
    with pytest.raises(ValueError):
        metrics.precision_at_k(top, TRUTH, 10, mode="other")


def test_precision_per_query_macro_average():
    truth = GroundTruth({"a": ["a:1", "a:2"], "b": ["b:1", "b:2"]})
    # query a sees one hit out of two received, query b receives nothing
    assert metrics.precision_at_k(["a:1", "a:9"], truth, 1) == pytest.approx(0.25)


@given(st.lists(st.sampled_from([f"r{i}" for i in range(1, 41)]), max_size=40), st.integers(1, 20),
       st.sampled_from(["received", "k"]))
def test_precision_bounded(received, k, mode):
    assert 0.0 <= metrics.precision_at_k(received, TRUTH, k, mode) <= 1.0


def test_report_from_simulation():
    f = mk("f", (10, 10, 1, 1), size=250)
    tr = run(SimConfig(n=2, k=0), [f])
    rep = metrics.report(tr, GroundTruth({"q": ["f0", "f1", "f2"]}), ks=(2,))
    assert rep.goodput_bytes == 1000 and rep.aggregated_importance == 22
    assert rep.deadline_ratio_important == rep.deadline_ratio_regular == 1.0
    assert rep.precision_at_k == {2: 0.5}
    row = rep.row()
    assert row["precision_at_2"] == "0.500000" and row["deadline_ratio"] == "1.000000"
    csv_lines = rep.outcome_csv().splitlines()
    assert csv_lines[0].startswith("flow_id,label") and len(csv_lines) == 3


def test_report_unsplit_has_no_classes():
    tr = run(SimConfig(n=2, k=0, flow_splitting=False), [mk("f", (10, 1))])
    rep = metrics.report(tr)
    assert rep.deadline_ratio_important is None and rep.deadline_ratio_regular is None
    assert rep.row()["deadline_ratio_important"] == ""
