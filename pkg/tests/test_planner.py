import random

import numpy as np
import pytest

from bene import errors
from bene.model import MEDIUM, ResourceVector, SMALL, TimeWindow
from bene.planner import (
    CapacityReport,
    RecordOutcome,
    RequestRecord,
    RequestStore,
    build_report,
    peak_analysis,
    recommend,
    report_to_lines,
    report_to_text,
    trigger_check,
)
from bene.timeline import MachineSpec
from conftest import make_request


def _rec(req, outcome=RecordOutcome.ADMITTED, reason=None, quoted=0, charged=0, at=0):
    return RequestRecord(req, outcome, reason, quoted, charged, at)


def _demand_rec(enterprise, start, end, count=1, ctype=SMALL, rid=None,
                outcome=RecordOutcome.ADMITTED):
    req = make_request(enterprise=enterprise, count=count, ctype=ctype,
                       start=start, end=end, rid=rid)
    return _rec(req, outcome)


def test_store_append_load_round_trip(tmp_path):
    store = RequestStore(tmp_path / "records.log")
    rec = _rec(make_request(start=5, end=9), RecordOutcome.ADMITTED, quoted=42)
    store.append(rec)
    loaded = store.load(TimeWindow(0, 20))
    assert loaded == [rec]


def test_store_load_empty(tmp_path):
    assert RequestStore(tmp_path / "none.log").load() == []


def test_store_preserves_append_order(tmp_path):
    store = RequestStore(tmp_path / "records.log")
    first = _rec(make_request(start=3, end=5), RecordOutcome.ADMITTED)
    second = _rec(first.request, RecordOutcome.COMPLETED, at=5)
    store.append(first)
    store.append(second)
    assert store.load() == [first, second]


def test_store_filters_by_window_intersection(tmp_path):
    store = RequestStore(tmp_path / "records.log")
    early = _rec(make_request(start=2, end=6), RecordOutcome.ADMITTED)
    late = _rec(make_request(start=50, end=60), RecordOutcome.ADMITTED)
    store.append(early)
    store.append(late)
    assert store.load(TimeWindow(0, 10)) == [early]
    assert store.load(TimeWindow(55, 58)) == [late]


def test_disjoint_peaks_do_not_stack():
    records = [_demand_rec("A", 36, 68, count=10), _demand_rec("B", 80, 92, count=10)]
    analysis = peak_analysis(records, 96)
    assert analysis.peaks_cpu == {"A": 10_000, "B": 10_000}
    assert analysis.cumulative_peak_cpu == 10_000


def test_coincident_peaks_sum():
    records = [_demand_rec("A", 10, 20, count=10), _demand_rec("B", 10, 20, count=10)]
    analysis = peak_analysis(records, 32)
    assert analysis.cumulative_peak_cpu == 20_000


def test_mixed_overlap_matches_unitwise_oracle():
    # brute-force: sum demand unit by unit and take the max
    specs = [("A", 0, 10, 3), ("A", 5, 15, 2), ("B", 8, 20, 4), ("C", 14, 30, 1)]
    records = [_demand_rec(ent, s, e, count=c) for ent, s, e, c in specs]
    expected = [0] * 32
    for _, s, e, c in specs:
        for t in range(s, e):
            expected[t] += c * 1000
    analysis = peak_analysis(records, 32)
    assert analysis.cumulative_peak_cpu == max(expected)
    assert list(analysis.cumulative_cpu) == expected


def test_demand_counts_rejected_requests():
    records = [
        _demand_rec("A", 0, 10, count=2, outcome=RecordOutcome.REJECTED),
        _demand_rec("A", 0, 10, count=1),
    ]
    assert peak_analysis(records, 16).peaks_cpu["A"] == 3000


def test_demand_dedupes_lifecycle_records():
    req = make_request(enterprise="A", count=2, start=0, end=8)
    records = [_rec(req, RecordOutcome.ADMITTED),
               _rec(req, RecordOutcome.COMPLETED, at=8)]
    assert peak_analysis(records, 16).peaks_cpu["A"] == 2000


def test_trigger_quiet_without_rejections():
    records = [_demand_rec("A", 2, 6, rid=f"q{i}") for i in range(10)]
    assert trigger_check(records, TimeWindow(0, 10), 0.05).triggered is False


def test_trigger_fires_above_theta():
    records = [_demand_rec("A", 2, 6, rid=f"ok{i}") for i in range(90)]
    records += [_demand_rec("A", 2, 6, rid=f"no{i}", outcome=RecordOutcome.REJECTED)
                for i in range(10)]
    result = trigger_check(records, TimeWindow(0, 10), 0.05)
    assert result.triggered is True
    assert (result.bad_requests, result.total_requests) == (10, 100)


def test_trigger_quiet_at_exact_theta():
    records = [_demand_rec("A", 2, 6, rid=f"ok{i}") for i in range(75)]
    records += [_demand_rec("A", 2, 6, rid=f"no{i}", outcome=RecordOutcome.CREDITED)
                for i in range(25)]
    assert trigger_check(records, TimeWindow(0, 10), 0.25).triggered is False


def test_recommend_examples():
    machine = MachineSpec("m", ResourceVector(4000, 8192))
    # 10 small slots: ceil(10000 / 4000) = 3, and memory gives the same bound
    assert recommend(10_000, 20_480, machine, 1.0) == 3
    assert recommend(10_000, 20_480, machine, 1.1) == 3
    assert recommend(0, 0, machine, 1.0) == 0


def test_recommend_monotone():
    machine = MachineSpec("m", ResourceVector(4000, 8192))
    rng = random.Random(5)
    for _ in range(100):
        peak = rng.randrange(0, 60_000)
        h = 1.0 + rng.random()
        assert recommend(peak + 4000, 0, machine, h) >= recommend(peak, 0, machine, h)
        assert recommend(peak, 0, machine, h + 0.5) >= recommend(peak, 0, machine, h)


def test_recommend_rejects_headroom_below_one():
    with pytest.raises(errors.InvalidConfig):
        recommend(1, 1, MachineSpec("m", ResourceVector(1000, 1000)), 0.9)


def test_cumulative_peak_bounded_by_sum_of_peaks():
    rng = random.Random(17)
    for trial in range(50):
        records = []
        for ent in "ABC":
            for i in range(rng.randrange(1, 8)):
                start = rng.randrange(0, 40)
                records.append(_demand_rec(ent, start, start + rng.randrange(1, 12),
                                           count=rng.randrange(1, 4),
                                           rid=f"t{trial}-{ent}{i}"))
        analysis = peak_analysis(records, 64)
        assert analysis.cumulative_peak_cpu <= analysis.sum_of_peaks_cpu
        # equality iff some unit carries every enterprise's peak simultaneously
        curves = analysis.per_enterprise_cpu
        coincide = any(
            all(curves[e][t] == analysis.peaks_cpu[e] for e in curves)
            for t in range(64))
        assert (analysis.cumulative_peak_cpu == analysis.sum_of_peaks_cpu) == coincide


def test_build_report_and_renderings():
    records = [
        _demand_rec("A", 4, 12, count=4, rid="a1"),
        _demand_rec("B", 8, 16, count=2, ctype=MEDIUM, rid="b1"),
        _demand_rec("B", 4, 6, rid="b2", outcome=RecordOutcome.REJECTED),
    ]
    report = build_report(records, TimeWindow(0, 24),
                          MachineSpec("m", ResourceVector(4000, 8192)), 1.0)
    assert isinstance(report, CapacityReport)
    # peak lands on units [8, 12): A's 4 smalls plus B's 2 mediums
    assert report.cumulative_peak_cpu == 4 * 1000 + 2 * 2000
    assert report.rejection_rate == pytest.approx(1 / 3)
    assert report.recommended_machines == 2
    text = report_to_text(report)
    assert "recommendation: 2 machines" in text
    lines = report_to_lines(report)
    assert lines[0].startswith("type=capacity_report")
    assert sum(1 for l in lines if l.startswith("type=enterprise_peak")) == 2
