"""Request database and capacity planning.

Every request and its outcome lands in an append-only log; the planner reads
it back to estimate per-enterprise peaks, the simultaneous cumulative peak,
and a machine-count recommendation. Demand deliberately includes rejected
requests: unmet load is exactly what the planner exists to see.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _kernels, errors
from .encoding import decode_line, encode_line, request_from_fields, request_pairs
from .model import Money, Request, TimeUnit, TimeWindow
from .timeline import MachineSpec


class RecordOutcome(Enum):
    ADMITTED = "admitted"
    REJECTED = "rejected"
    COMPLETED = "completed"
    CREDITED = "credited"
    PREEMPTED = "preempted"


@dataclass(frozen=True)
class RequestRecord:
    """One append-only log entry: a request plus one outcome event.

    A request's history is never rewritten; later lifecycle outcomes append
    new records for the same request id.
    """

    request: Request
    outcome: RecordOutcome
    reason: str | None
    quoted: Money
    charged: Money
    recorded_at: TimeUnit

    def to_line(self) -> str:
        pairs = [("type", "record")] + request_pairs(self.request) + [
            ("outcome", self.outcome.value),
            ("reason", self.reason or ""),
            ("quoted", str(self.quoted)),
            ("charged", str(self.charged)),
            ("recorded_at", str(self.recorded_at)),
        ]
        return encode_line(pairs)

    @classmethod
    def from_line(cls, line: str) -> RequestRecord:
        fields = decode_line(line)
        if fields.get("type") != "record":
            raise errors.EncodingError(
                f"expected a record line, got {fields.get('type')!r}")
        return cls(
            request=request_from_fields(fields),
            outcome=RecordOutcome(fields["outcome"]),
            reason=fields.get("reason") or None,
            quoted=int(fields.get("quoted", "0")),
            charged=int(fields.get("charged", "0")),
            recorded_at=int(fields.get("recorded_at", "0")),
        )


class RequestStore:
    """Flat append-only file of RequestRecords in the canonical encoding."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def append(self, record: RequestRecord) -> None:
        try:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(record.to_line() + "\n")
        except OSError as exc:
            raise errors.StorageFailure(str(exc)) from exc

    def load(self, window: TimeWindow | None = None) -> list[RequestRecord]:
        """Records whose request window intersects `window`, in append order."""
        if not self.path.exists():
            return []
        try:
            lines = self.path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise errors.StorageFailure(str(exc)) from exc
        records = [RequestRecord.from_line(line) for line in lines if line.strip()]
        if window is None:
            return records
        return [r for r in records if r.request.window.overlaps(window)]


@dataclass(frozen=True)
class PeakAnalysis:
    per_enterprise_cpu: dict[str, np.ndarray]
    peaks_cpu: dict[str, int]
    peaks_mem: dict[str, int]
    cumulative_cpu: np.ndarray
    cumulative_peak_cpu: int
    cumulative_peak_mem: int

    @property
    def sum_of_peaks_cpu(self) -> int:
        return sum(self.peaks_cpu.values())


@dataclass(frozen=True)
class TriggerResult:
    triggered: bool
    bad_requests: int
    total_requests: int


@dataclass(frozen=True)
class CapacityReport:
    window: TimeWindow
    per_enterprise_peak_cpu: dict[str, int]
    per_enterprise_peak_mem: dict[str, int]
    cumulative_peak_cpu: int
    cumulative_peak_mem: int
    rejection_rate: float
    slo_miss_rate: float
    recommended_machines: int
    headroom: float


def dedupe_requests(records: Iterable[RequestRecord]) -> list[Request]:
    """First record per request id wins; demand must not double count the
    admission and completion records of one request."""
    seen: set[str] = set()
    out = []
    for rec in records:
        if rec.request.id not in seen:
            seen.add(rec.request.id)
            out.append(rec.request)
    return out


def peak_analysis(records: Sequence[RequestRecord], n_units: int) -> PeakAnalysis:
    """Unit-wise demand curves per enterprise and their simultaneous peak.

    Demand at a unit is the summed cpu (and mem) every request wanted there,
    admitted or not.
    """
    requests = dedupe_requests(records)
    by_ent: dict[str, list[Request]] = {}
    for r in requests:
        by_ent.setdefault(r.enterprise, []).append(r)
    per_cpu: dict[str, np.ndarray] = {}
    peaks_cpu: dict[str, int] = {}
    peaks_mem: dict[str, int] = {}
    total_cpu = np.zeros(n_units, np.int64)
    total_mem = np.zeros(n_units, np.int64)
    for ent in sorted(by_ent):
        reqs = by_ent[ent]
        starts = np.array([r.window.start for r in reqs], np.int64)
        ends = np.array([r.window.end for r in reqs], np.int64)
        cpu_w = np.array([r.demand.cpu_millicores for r in reqs], np.int64)
        mem_w = np.array([r.demand.mem_mb for r in reqs], np.int64)
        curve_cpu = _kernels.accumulate_intervals(starts, ends, cpu_w, n_units)
        curve_mem = _kernels.accumulate_intervals(starts, ends, mem_w, n_units)
        per_cpu[ent] = curve_cpu
        peaks_cpu[ent] = int(curve_cpu.max(initial=0))
        peaks_mem[ent] = int(curve_mem.max(initial=0))
        total_cpu += curve_cpu
        total_mem += curve_mem
    return PeakAnalysis(
        per_enterprise_cpu=per_cpu,
        peaks_cpu=peaks_cpu,
        peaks_mem=peaks_mem,
        cumulative_cpu=total_cpu,
        cumulative_peak_cpu=int(total_cpu.max(initial=0)),
        cumulative_peak_mem=int(total_mem.max(initial=0)),
    )


def trigger_check(records: Sequence[RequestRecord], window: TimeWindow,
                  theta: float) -> TriggerResult:
    """Triggered iff the fraction of requests that were rejected or lost
    guaranteed service exceeds theta (strictly)."""
    if not 0 < theta < 1:
        raise errors.InvalidConfig(f"theta must be in (0, 1), got {theta}")
    in_window = [r for r in records if r.request.window.overlaps(window)]
    status: dict[str, bool] = {}
    for rec in in_window:
        bad = rec.outcome in (RecordOutcome.REJECTED, RecordOutcome.CREDITED)
        status[rec.request.id] = status.get(rec.request.id, False) or bad
    total = len(status)
    bad_count = sum(status.values())
    triggered = total > 0 and Fraction(bad_count, total) > Fraction(theta)
    return TriggerResult(triggered, bad_count, total)


def recommend(cumulative_peak_cpu: int, cumulative_peak_mem: int,
              machine: MachineSpec, headroom: float) -> int:
    """Machines needed to cover the cumulative peak with the given headroom.

    ceil(peak * headroom / capacity), evaluated for cpu and mem, max taken.
    """
    if headroom < 1.0:
        raise errors.InvalidConfig(f"headroom must be >= 1.0, got {headroom}")
    h = Fraction(headroom)
    by_cpu = math.ceil(cumulative_peak_cpu * h / machine.capacity.cpu_millicores)
    by_mem = math.ceil(cumulative_peak_mem * h / machine.capacity.mem_mb)
    return max(by_cpu, by_mem)


def build_report(records: Sequence[RequestRecord], window: TimeWindow,
                 machine: MachineSpec, headroom: float = 1.0) -> CapacityReport:
    """Full planner pass over the analysis window."""
    in_window = [r for r in records if r.request.window.overlaps(window)]
    analysis = peak_analysis(in_window, window.end)
    outcomes: dict[str, set[RecordOutcome]] = {}
    for rec in in_window:
        outcomes.setdefault(rec.request.id, set()).add(rec.outcome)
    total = len(outcomes)
    rejected = sum(1 for o in outcomes.values() if RecordOutcome.REJECTED in o)
    missed = sum(1 for o in outcomes.values() if RecordOutcome.CREDITED in o)
    return CapacityReport(
        window=window,
        per_enterprise_peak_cpu=analysis.peaks_cpu,
        per_enterprise_peak_mem=analysis.peaks_mem,
        cumulative_peak_cpu=analysis.cumulative_peak_cpu,
        cumulative_peak_mem=analysis.cumulative_peak_mem,
        rejection_rate=rejected / total if total else 0.0,
        slo_miss_rate=missed / total if total else 0.0,
        recommended_machines=recommend(analysis.cumulative_peak_cpu,
                                       analysis.cumulative_peak_mem,
                                       machine, headroom),
        headroom=headroom,
    )


def report_to_lines(report: CapacityReport) -> list[str]:
    """Machine-readable rendering: one record line per report section."""
    lines = [encode_line([
        ("type", "capacity_report"),
        ("from", str(report.window.start)),
        ("to", str(report.window.end)),
        ("cumulative_peak_cpu", str(report.cumulative_peak_cpu)),
        ("cumulative_peak_mem", str(report.cumulative_peak_mem)),
        ("rejection_rate", f"{report.rejection_rate:.6f}"),
        ("slo_miss_rate", f"{report.slo_miss_rate:.6f}"),
        ("recommended_machines", str(report.recommended_machines)),
        ("headroom", f"{report.headroom:.6f}"),
    ])]
    for ent in sorted(report.per_enterprise_peak_cpu):
        lines.append(encode_line([
            ("type", "enterprise_peak"),
            ("enterprise", ent),
            ("peak_cpu", str(report.per_enterprise_peak_cpu[ent])),
            ("peak_mem", str(report.per_enterprise_peak_mem[ent])),
        ]))
    return lines


def report_to_text(report: CapacityReport) -> str:
    """Human-readable rendering of a capacity report."""
    out = [
        f"capacity report for units [{report.window.start}, {report.window.end})",
        f"  cumulative peak: {report.cumulative_peak_cpu} millicores / "
        f"{report.cumulative_peak_mem} MB",
        f"  rejection rate: {report.rejection_rate:.4f}",
        f"  slo miss rate:  {report.slo_miss_rate:.4f}",
        f"  recommendation: {report.recommended_machines} machines "
        f"(headroom {report.headroom:.2f})",
        "  per-enterprise peaks:",
    ]
    for ent in sorted(report.per_enterprise_peak_cpu):
        out.append(f"    {ent}: {report.per_enterprise_peak_cpu[ent]} millicores / "
                   f"{report.per_enterprise_peak_mem[ent]} MB")
    return "\n".join(out) + "\n"
