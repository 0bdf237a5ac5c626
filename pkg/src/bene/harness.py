"""Deterministic simulation loop tying the modules together.

One tick = one time unit: deliver arrivals -> admit -> scheduler.tick ->
deployer.apply_plan -> ping_sweep -> handle_failure, with settlements and
request records appended along the way. Identical (scenario, trace, fault
plan) inputs produce byte-identical logs, invoices and reports; the live
service reuses exactly this admission/scheduling path with a wall clock.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import errors, pricing, scheduler as sched_mod
from .deployer import DeployerSim, FaultPlan
from .model import (
    Allocation,
    AllocationState,
    Money,
    Recurrence,
    Request,
    RequestKind,
    TimeUnit,
    UNITS_PER_DAY,
    UNITS_PER_WEEK,
    expand_recurrence,
    validate_request,
)
from .planner import RecordOutcome, RequestRecord, peak_analysis
from .pricing import Invoice, PriceBook, invoice_to_pairs
from .scheduler import Admission, RejectionReason, Scheduler, plan_lines
from .timeline import FreeList
from .workload import ScenarioConfig
from .encoding import encode_line

COVERAGE_SLACK = 2 * UNITS_PER_DAY  # room past the trace for trailing windows


@dataclass
class Hooks:
    """Optional probes for verification; all no-ops by default."""

    mutation: Callable[[FreeList, str], None] | None = None
    recovery: Callable[[dict], None] | None = None
    realtime_quote: Callable[[Request, object, Money], None] | None = None


@dataclass
class SimulationMetrics:
    utilization: np.ndarray
    admitted_reserved: int = 0
    admitted_realtime: int = 0
    rejected_reserved: int = 0
    rejected_realtime: int = 0
    revenue_reserved: Money = 0
    revenue_realtime: Money = 0
    credits_issued: Money = 0
    preemption_count: int = 0
    multiplexing_gain: float = 1.0

    @property
    def revenue_total(self) -> Money:
        return self.revenue_reserved + self.revenue_realtime


@dataclass
class SimulationResult:
    metrics: SimulationMetrics
    records: list[RequestRecord]
    invoices: list[tuple[Allocation, Invoice, RecordOutcome]]
    event_lines: list[str]
    plan_lines: list[str]
    report_text: str
    report_lines: list[str]
    scheduler: Scheduler
    freelist: FreeList
    ticks: int

    @property
    def record_lines(self) -> list[str]:
        return [r.to_line() for r in self.records]

    @property
    def invoice_lines(self) -> list[str]:
        return [encode_line(invoice_to_pairs(inv)) for _, inv, _ in self.invoices]


def run_simulation(scenario: ScenarioConfig, trace: Sequence[Request],
                   fault_plan: FaultPlan | None = None,
                   out_dir: str | Path | None = None,
                   hooks: Hooks | None = None,
                   horizon_units: int = UNITS_PER_WEEK) -> SimulationResult:
    hooks = hooks or Hooks()
    duration = scenario.duration_units
    coverage = duration + COVERAGE_SLACK
    freelist = FreeList(list(scenario.mdc), coverage, mutation_hook=hooks.mutation)
    book = PriceBook(scenario.base_rate, scenario.realtime_floor)

    records: list[RequestRecord] = []
    invoices: list[tuple[Allocation, Invoice, RecordOutcome]] = []
    requests_by_id: dict[str, Request] = {}
    clock = {"now": 0}

    def invoice_sink(alloc: Allocation, inv: Invoice, outcome: RecordOutcome) -> None:
        invoices.append((alloc, inv, outcome))
        req = requests_by_id[alloc.request_id]
        records.append(RequestRecord(req, outcome, None, alloc.quote,
                                     inv.charged, clock["now"]))

    scheduler = Scheduler(freelist, book, horizon_units,
                          record_sink=records.append,
                          quote_hook=hooks.realtime_quote,
                          recovery_hook=hooks.recovery)
    deployer = DeployerSim(scheduler, fault_plan or FaultPlan.empty(), invoice_sink)

    pending = sorted(trace, key=lambda r: (r.submitted_at, r.id))
    cursor = 0
    all_plan_lines: list[str] = []
    now = 0
    while now <= coverage:
        clock["now"] = now
        while cursor < len(pending) and pending[cursor].submitted_at == now:
            admit_submission(pending[cursor], now, scheduler, records,
                             requests_by_id, coverage)
            cursor += 1
        plan = scheduler.tick(now)
        all_plan_lines.extend(plan_lines(plan))
        deployer.apply_plan(plan, now)
        for fault in deployer.ping_sweep(now):
            deployer.handle_failure(fault, now)
        now += 1
        live = any(a.state in (AllocationState.PLANNED, AllocationState.PROVISIONING,
                               AllocationState.RUNNING)
                   for a in scheduler.allocations.values())
        if now >= duration and not live and cursor >= len(pending):
            break

    metrics = _metrics(freelist, scheduler, records, invoices, duration)
    report_text, report_lines = render_report(metrics, duration)
    result = SimulationResult(metrics, records, invoices, deployer.event_lines,
                              all_plan_lines, report_text, report_lines,
                              scheduler, freelist, ticks=now)
    if out_dir is not None:
        _write_outputs(result, Path(out_dir))
    return result


def admit_submission(req: Request, now: TimeUnit, scheduler: Scheduler,
                     records: list[RequestRecord], requests_by_id: dict[str, Request],
                     coverage: int) -> list[Admission | RejectionReason]:
    """Validate, expand recurrence, and admit one submitted request.

    Shared verbatim between trace replay and the live service; a lead-time
    failure becomes a recorded rejection rather than an exception.
    """
    outcomes: list[Admission | RejectionReason] = []
    if req.recurrence is Recurrence.DAILY:
        children = expand_recurrence(req, min(now + scheduler.horizon_units, coverage))
    else:
        children = [req]
    for child in children:
        try:
            validate_request(child, now)
        except errors.LeadTimeTooShort as exc:
            requests_by_id[child.id] = child
            records.append(RequestRecord(child, RecordOutcome.REJECTED,
                                         sched_mod.REJECT_LEAD_TIME, 0, 0, now))
            outcomes.append(RejectionReason(sched_mod.REJECT_LEAD_TIME, str(exc)))
            continue
        requests_by_id[child.id] = child
        if child.kind is RequestKind.RESERVED:
            outcomes.append(scheduler.admit_reserved(child, now))
        else:
            outcomes.append(scheduler.admit_realtime(child, now))
    return outcomes


def _metrics(freelist: FreeList, scheduler: Scheduler,
             records: list[RequestRecord],
             invoices: list[tuple[Allocation, Invoice, RecordOutcome]],
             duration: int) -> SimulationMetrics:
    m = SimulationMetrics(utilization=freelist.utilization_series(duration))
    for rec in records:
        reserved = rec.request.kind is RequestKind.RESERVED
        if rec.outcome is RecordOutcome.ADMITTED:
            if reserved:
                m.admitted_reserved += 1
            else:
                m.admitted_realtime += 1
        elif rec.outcome is RecordOutcome.REJECTED:
            if reserved:
                m.rejected_reserved += 1
            else:
                m.rejected_realtime += 1
    for alloc, inv, _ in invoices:
        if alloc.preemptible:
            m.revenue_realtime += inv.charged
        else:
            m.revenue_reserved += inv.charged
            m.credits_issued += inv.credits
    m.preemption_count = sum(1 for a in scheduler.allocations.values()
                             if a.state is AllocationState.PREEMPTED)
    analysis = peak_analysis(records, duration)
    if analysis.cumulative_peak_cpu > 0:
        m.multiplexing_gain = analysis.sum_of_peaks_cpu / analysis.cumulative_peak_cpu
    return m


def render_report(metrics: SimulationMetrics, duration: int) -> tuple[str, list[str]]:
    """Human-readable summary plus machine-readable canonical lines."""
    u = metrics.utilization
    mean_u = float(u.mean()) if len(u) else 0.0
    peak_u = float(u.max()) if len(u) else 0.0
    text = "\n".join([
        "simulation report",
        f"  units simulated: {duration}",
        f"  admitted: {metrics.admitted_reserved} reserved, "
        f"{metrics.admitted_realtime} real-time",
        f"  rejected: {metrics.rejected_reserved} reserved, "
        f"{metrics.rejected_realtime} real-time",
        f"  revenue: {metrics.revenue_total} micros "
        f"(reserved {metrics.revenue_reserved}, real-time {metrics.revenue_realtime})",
        f"  credits issued: {metrics.credits_issued} micros",
        f"  preemptions: {metrics.preemption_count}",
        f"  multiplexing gain: {metrics.multiplexing_gain:.4f}",
        f"  utilization: mean {mean_u:.4f}, peak {peak_u:.4f}",
    ]) + "\n"
    lines = [encode_line([
        ("type", "metrics"),
        ("units", str(duration)),
        ("admitted_reserved", str(metrics.admitted_reserved)),
        ("admitted_realtime", str(metrics.admitted_realtime)),
        ("rejected_reserved", str(metrics.rejected_reserved)),
        ("rejected_realtime", str(metrics.rejected_realtime)),
        ("revenue_reserved", str(metrics.revenue_reserved)),
        ("revenue_realtime", str(metrics.revenue_realtime)),
        ("credits_issued", str(metrics.credits_issued)),
        ("preemptions", str(metrics.preemption_count)),
        ("multiplexing_gain", f"{metrics.multiplexing_gain:.6f}"),
    ])]
    for t, value in enumerate(u):
        lines.append(encode_line([
            ("type", "utilization"), ("unit", str(t)), ("value", f"{value:.6f}"),
        ]))
    return text, lines


def _write_outputs(result: SimulationResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    def _dump(name: str, lines: list[str]) -> None:
        (out_dir / name).write_text(
            ("\n".join(lines) + "\n") if lines else "", encoding="utf-8")
    _dump("records.log", result.record_lines)
    _dump("events.log", result.event_lines)
    _dump("plans.log", result.plan_lines)
    _dump("invoices.log", result.invoice_lines)
    _dump("report.kv", result.report_lines)
    (out_dir / "report.txt").write_text(result.report_text, encoding="utf-8")
