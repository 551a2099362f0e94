import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from impflow.flowmodel import Flow, ResponseUnit
from impflow.topology import build_bcube
from impflow.workload import (SIZE_RANGES_KB, GroundTruth, TraceError, WorkloadSpec, dump_trace, gen_partition_aggregate,
                              gen_ranked_trace, gen_synthetic, load_trace, offered_load_bps, parse_trace)

T52 = build_bcube(5, 2)


def test_light_mean_size():
    flows = gen_synthetic(WorkloadSpec("light", 0.03, pattern="random_pairs", n_flows=1000, seed=0), T52)
    mean = np.mean([f.size for f in flows])
    assert abs(mean - 26_000) <= 0.05 * 26_000


@pytest.mark.parametrize("regime", sorted(SIZE_RANGES_KB))
def test_size_ranges(regime):
    lo, hi = SIZE_RANGES_KB[regime]
    flows = gen_synthetic(WorkloadSpec(regime, 0.02, pattern="random_pairs", n_flows=300, seed=1), T52)
    assert all(lo * 1000 <= f.size <= hi * 1000 for f in flows)
    assert all(u.size == 1000 for f in flows for u in f.units)


def test_deadline_floor_and_bimodal_units():
    flows = gen_partition_aggregate(WorkloadSpec("medium", 0.004, seed=3), T52)
    assert all(f.deadline_ns - f.begin_ns >= 5_000_000 for f in flows)
    for f in flows:
        imps = [u.importance for u in f.units]
        assert set(imps) <= {1.0, 10.0}
        assert imps.count(10.0) == -(-len(imps) // 2)


def test_seed_determinism():
    spec = WorkloadSpec("heavy", 0.02, seed=11)
    assert gen_partition_aggregate(spec, T52) == gen_partition_aggregate(spec, T52)
    assert gen_partition_aggregate(spec, T52) != gen_partition_aggregate(WorkloadSpec("heavy", 0.02, seed=12), T52)


def test_partition_aggregate_shape():
    flows = gen_partition_aggregate(WorkloadSpec("light", 0.03, seed=0), T52)
    assert len(flows) == 124
    assert len({f.dst for f in flows}) == 1
    assert len(gen_partition_aggregate(WorkloadSpec("light", 0.03), build_bcube(2, 0))) == 1


def test_offered_load_light():
    loads = [offered_load_bps(gen_partition_aggregate(WorkloadSpec("light", 0.03, seed=s), T52), 0.03)
             for s in range(20)]
    assert abs(np.mean(loads) - 0.86e9) <= 0.1 * 0.86e9


def test_random_pairs_arrivals():
    flows = gen_synthetic(WorkloadSpec("light", 0.03, pattern="random_pairs", n_flows=50, seed=2), T52)
    begins = [f.begin_ns for f in flows]
    assert begins == sorted(begins) and begins[-1] > 0
    assert all(f.src != f.dst for f in flows)


def test_spec_validation():
    with pytest.raises(ValueError, match="deadline_mean"):
        WorkloadSpec("heavy", -1)
    with pytest.raises(ValueError):
        WorkloadSpec("extreme", 0.02)
    with pytest.raises(ValueError):
        WorkloadSpec("heavy", 0.02, high_fraction=2)


def test_ranked_trace():
    flows, truth = gen_ranked_trace(T52, seed=4, truth_len=50)
    ranks = [u.rank_id for f in flows for u in f.units]
    assert len(set(ranks)) == len(ranks)
    assert len(truth.lists["q1"]) == 50 and set(truth.lists["q1"]) <= set(ranks)
    score = {u.rank_id: u.importance for f in flows for u in f.units}
    top = [score[r] for r in truth.lists["q1"]]
    assert top == sorted(top, reverse=True)
    assert min(top) >= max(s for r, s in score.items() if r not in set(truth.lists["q1"]))
    assert truth.query_of(ranks[0]) == "q1"


FIXTURE = """\
# two answers to one query
FLOW a 1 0 0 20000
UNIT a q:x1 1000 9.5
UNIT a q:x2 1000 1
FLOW b 2 0 10 30000
UNIT b q:y1 500 4
TRUTH q q:x1 q:y1 q:x2
"""


def test_fixture_roundtrip(tmp_path):
    path = tmp_path / "t.trace"
    path.write_text(FIXTURE)
    flows, truth = load_trace(path)
    assert [f.id for f in flows] == ["a", "b"]
    assert flows[1].begin_ns == 10_000 and flows[1].deadline_ns == 30_000_000
    assert truth.lists == {"q": ["q:x1", "q:y1", "q:x2"]} and truth.warnings == []
    body = "".join(l + "\n" for l in FIXTURE.splitlines() if not l.startswith("#"))
    assert dump_trace(flows, truth) == body


def test_empty_trace():
    flows, truth = parse_trace("")
    assert flows == [] and truth.lists == {}


@pytest.mark.parametrize("text,lineno", [
    ("FLOW a 1 0 0 10\nUNIT a r 1 1\nTRUTH q r s r\n", 3),
    ("UNIT a r 1 1\n", 1),
    ("FLOW a 1 0 0 10\nFLOW a 1 0 0 10\n", 2),
    ("FLOW a 1 0 0 10\nUNIT a r 1 x\n", 2),
    ("FLOW a 1 0 10 5\n", 1),
    ("NOPE\n", 1),
    ("FLOW a 1 0 0 10\n", 1),
])
def test_parse_errors_name_the_line(text, lineno):
    with pytest.raises(TraceError, match=f"line {lineno}:"):
        parse_trace(text)


def test_missing_truth_ids_warn():
    _, truth = parse_trace("FLOW a 1 0 0 10\nUNIT a q:r 1 1\nTRUTH q q:r q:gone\n")
    assert len(truth.warnings) == 1 and "q:gone" in truth.warnings[0]


@settings(max_examples=60)
@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9), st.integers(0, 10**6), st.integers(1, 10**6),
                          st.lists(st.tuples(st.integers(1, 5000), st.floats(0, 100, allow_nan=False)),
                                   min_size=1, max_size=4)), max_size=5))
def test_dump_parse_roundtrip(raw):
    flows = []
    for i, (src, dst, begin_us, span_us, units) in enumerate(raw):
        flows.append(Flow(f"f{i}", src, dst, begin_us * 1000, (begin_us + span_us) * 1000,
                          tuple(ResponseUnit(m, size, f"f{i}u{j}") for j, (size, m) in enumerate(units))))
    truth = GroundTruth({"q": [u.rank_id for f in flows for u in f.units][:3]})
    text = dump_trace(flows, truth)
    again, t2 = parse_trace(text)
    assert again == flows and t2.lists == truth.lists
    assert dump_trace(again, t2) == text
