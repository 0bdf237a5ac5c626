"""Admission control, fragmentation-minimizing placement, the periodic tick,
and failure replanning with real-time preemption.

The scheduler is the single writer of the free list: admissions, ticks and
recoveries are serialized through it. Placement policy is greedy best-fit
with a fewest-machines primary objective: among feasible splits prefer
(1) the fewest machines, (2) machines with the least remaining cpu over the
window, (3) the lowest machine_id. Reserved allocations are never preempted;
after a machine failure they are migrated, displacing real-time victims if
needed, and credited only when no capacity source remains.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from . import errors, pricing
from .model import (
    Allocation,
    AllocationState,
    CONTAINER_TYPES,
    ContainerType,
    Money,
    Placement,
    Request,
    RequestKind,
    TimeUnit,
    TimeWindow,
    UNITS_PER_WEEK,
)
from .planner import RecordOutcome, RequestRecord
from .timeline import FreeList

REJECT_INFEASIBLE = "infeasible"
REJECT_LEAD_TIME = "lead_time_too_short"
REJECT_HORIZON = "horizon_exceeded"


@dataclass(frozen=True)
class RejectionReason:
    code: str
    detail: str


@dataclass(frozen=True)
class Admission:
    allocation: Allocation
    quote: Money
    # Real-time admissions always carry the warning that the resources might
    # be taken away for reserved work.
    preemption_warning: bool = False


@dataclass(frozen=True)
class PreemptionNote:
    allocation_id: str
    at: TimeUnit
    reason: str


@dataclass
class SchedulePlan:
    tick: TimeUnit
    to_start: list[Allocation] = field(default_factory=list)
    to_stop: list[str] = field(default_factory=list)
    preemptions: list[PreemptionNote] = field(default_factory=list)


@dataclass(frozen=True)
class CreditEvent:
    allocation_id: str
    request_id: str
    at: TimeUnit
    lost_units: int
    credit: Money


@dataclass
class RecoveryPlan:
    machine_id: str | None
    at: TimeUnit
    failed_realtime: list[str] = field(default_factory=list)
    migrated: list[tuple[str, list[Placement]]] = field(default_factory=list)
    preempted: list[str] = field(default_factory=list)
    credited: list[CreditEvent] = field(default_factory=list)


RecordSink = Callable[[RequestRecord], None]
QuoteHook = Callable[[Request, object, Money], None]
RecoveryHook = Callable[[dict], None]

_LIVE = (AllocationState.PLANNED, AllocationState.PROVISIONING, AllocationState.RUNNING)


class Scheduler:
    def __init__(self, freelist: FreeList, book: pricing.PriceBook,
                 horizon_units: int = UNITS_PER_WEEK,
                 record_sink: RecordSink | None = None,
                 quote_hook: QuoteHook | None = None,
                 recovery_hook: RecoveryHook | None = None):
        self.freelist = freelist
        self.book = book
        self.horizon_units = horizon_units
        self.allocations: dict[str, Allocation] = {}
        self._record_sink = record_sink
        self._quote_hook = quote_hook
        self._recovery_hook = recovery_hook
        self._started: set[str] = set()
        self._last_tick: TimeUnit | None = None
        self._pending_preemptions: list[PreemptionNote] = []
        self._dead_machines: set[str] = set()
        self._seq = 0

    # --- admission -----------------------------------------------------------

    def admit_reserved(self, req: Request, now: TimeUnit) -> Admission | RejectionReason:
        """Immediate free-list check and commit for a validated reservation."""
        assert req.kind is RequestKind.RESERVED
        reason = self._horizon_reject(req, now)
        if reason is None and req.window.start < now + 1:
            reason = RejectionReason(REJECT_LEAD_TIME,
                                     "reserved requests need one unit of lead time")
        if reason is not None:
            self._record(req, now, RecordOutcome.REJECTED, reason=reason.code)
            return reason
        options = self.freelist.feasible_placements(req.ctype, req.count, req.window)
        if options is None:
            reason = RejectionReason(
                REJECT_INFEASIBLE,
                f"no split of {req.count} x {req.ctype.name} fits every unit of "
                f"[{req.window.start}, {req.window.end})")
            self._record(req, now, RecordOutcome.REJECTED, reason=reason.code)
            return reason
        placements = self.pack_placement(req.ctype, req.count, req.window, options)
        quote = pricing.quote_reserved(self.book, req.count, req.ctype, req.window)
        alloc = Allocation(self._next_id(), req.id, placements, req.window,
                           preemptible=False, quote=quote)
        self.freelist.commit(alloc, req.ctype)
        self.allocations[alloc.id] = alloc
        self._record(req, now, RecordOutcome.ADMITTED, quoted=quote)
        return Admission(alloc, quote)

    def admit_realtime(self, req: Request, now: TimeUnit) -> Admission | RejectionReason:
        """Best-effort immediate placement at the utilization-discounted rate."""
        assert req.kind is RequestKind.REAL_TIME
        if req.window.start != now:
            raise errors.LeadTimeTooShort(
                f"request {req.id}: real-time admission requires start == now")
        reason = self._horizon_reject(req, now)
        if reason is None:
            options = self.freelist.feasible_placements(req.ctype, req.count, req.window)
            if options is None:
                reason = RejectionReason(REJECT_INFEASIBLE,
                                         "no resources available right now")
        if reason is not None:
            self._record(req, now, RecordOutcome.REJECTED, reason=reason.code)
            return reason
        utilization = self.freelist.utilization_fraction(now)
        placements = self.pack_placement(req.ctype, req.count, req.window, options)
        quote = pricing.quote_realtime(self.book, req.count, req.ctype, req.window,
                                       utilization)
        alloc = Allocation(self._next_id(), req.id, placements, req.window,
                           preemptible=True, quote=quote)
        self.freelist.commit(alloc, req.ctype)
        self.allocations[alloc.id] = alloc
        if self._quote_hook is not None:
            self._quote_hook(req, utilization, quote)
        self._record(req, now, RecordOutcome.ADMITTED, quoted=quote)
        return Admission(alloc, quote, preemption_warning=True)

    # --- placement ------------------------------------------------------------

    def pack_placement(self, ctype: ContainerType, count: int, window: TimeWindow,
                       options: Sequence[tuple[str, int]]) -> list[Placement]:
        """Deterministic split of `count` over the feasible machines.

        `options` comes from feasible_placements and must cover `count`.
        """
        caps = dict(options)
        slack = self.freelist.window_cpu_slack(window)
        pref = sorted(caps, key=lambda m: (int(slack[self.freelist.machine_index(m)]), m))
        # fewest machines needed: the n largest capacities must cover count
        caps_desc = sorted(caps.values(), reverse=True)
        need, n_star = 0, 0
        for c in caps_desc:
            n_star += 1
            need += c
            if need >= count:
                break
        assert need >= count, "pack_placement called with insufficient options"
        # pick the preference-first subset of size n_star that still covers count
        chosen: list[str] = []
        chosen_sum = 0
        for i, m in enumerate(pref):
            if len(chosen) == n_star:
                break
            slots_left = n_star - len(chosen) - 1
            rest = sorted((caps[x] for x in pref[i + 1:]), reverse=True)[:slots_left]
            if chosen_sum + caps[m] + sum(rest) >= count:
                chosen.append(m)
                chosen_sum += caps[m]
        # fill fuller machines first (preference order == least slack first)
        placements = []
        left = count
        for m in chosen:
            take = min(caps[m], left)
            placements.append(Placement(m, ctype.name, take))
            left -= take
        assert left == 0
        return placements

    # --- periodic tick -----------------------------------------------------------

    def tick(self, now: TimeUnit) -> SchedulePlan:
        """Per-unit plan: stop jobs ending now, hand out pre-start provisioning."""
        if self._last_tick is not None and now <= self._last_tick:
            raise errors.NonMonotonicTick(
                f"tick {now} not after previous tick {self._last_tick}")
        self._last_tick = now
        plan = SchedulePlan(tick=now)
        for aid, alloc in self.allocations.items():
            if alloc.window.end == now and aid in self._started and alloc.state in _LIVE:
                plan.to_stop.append(aid)
            elif (aid not in self._started and alloc.state is AllocationState.PLANNED
                  and alloc.window.start <= now + 1):
                alloc.state = AllocationState.PROVISIONING
                self._started.add(aid)
                plan.to_start.append(alloc)
        plan.preemptions = self._pending_preemptions
        self._pending_preemptions = []
        return plan

    # --- failure replanning ---------------------------------------------------------

    def replan_on_failure(self, machine_id: str, now: TimeUnit,
                          outage_until: TimeUnit | None = None) -> RecoveryPlan:
        """Recover from a machine crash: fail real-time work, migrate reserved.

        The machine's capacity is withheld for [now, outage_until) by a
        synthetic outage booking. Reserved allocations are retried on the
        survivors, preempting real-time victims if the free capacity alone is
        not enough; only when both sources fail is a credit issued.
        """
        self.freelist.machine_index(machine_id)  # raises UnknownMachine
        plan = RecoveryPlan(machine_id, now)
        if machine_id in self._dead_machines:
            return plan
        affected_ids = self.freelist.entries_on(machine_id, now)
        affected = [self.allocations[aid] for aid in affected_ids
                    if aid in self.allocations
                    and self.allocations[aid].state in _LIVE]
        realtime = sorted((a for a in affected if a.preemptible),
                          key=lambda a: (a.window.start, a.id))
        reserved = sorted((a for a in affected if not a.preemptible),
                          key=lambda a: (a.window.start, a.id))
        for alloc in realtime + reserved:
            self.freelist.release(alloc.id, now)
        self._dead_machines.add(machine_id)
        self.freelist.book_outage(machine_id, now,
                                  outage_until if outage_until is not None
                                  else self.freelist.n_units)
        for alloc in realtime:
            alloc.state = AllocationState.FAILED
            plan.failed_realtime.append(alloc.id)
        for alloc in reserved:
            self._recover_reserved(alloc, now, plan)
        return plan

    def replan_allocation(self, allocation_id: str, now: TimeUnit,
                          exclude_machine: str) -> RecoveryPlan:
        """Re-provision one allocation whose slot died on an otherwise healthy
        machine; the hung machine is avoided for the replacement."""
        if allocation_id not in self.allocations:
            raise errors.UnknownAllocation(allocation_id)
        alloc = self.allocations[allocation_id]
        plan = RecoveryPlan(None, now)
        if alloc.state not in _LIVE or alloc.window.end <= now:
            return plan
        self.freelist.release(alloc.id, now)
        if alloc.preemptible:
            alloc.state = AllocationState.FAILED
            plan.failed_realtime.append(alloc.id)
            return plan
        self._recover_reserved(alloc, now, plan, exclude=frozenset([exclude_machine]))
        return plan

    def select_victims(self, ctype: ContainerType, count: int, window: TimeWindow,
                       now: TimeUnit,
                       exclude: frozenset[str] = frozenset()) -> list[Allocation]:
        """Minimal prefix of preemptible allocations whose release fits the demand.

        Policy order: youngest first (latest window start), then smallest
        accrued charge, then allocation id.
        """
        probe = self.freelist.clone()
        if probe.feasible_placements(ctype, count, window, exclude) is not None:
            return []
        candidates = [a for a in self.allocations.values()
                      if a.preemptible and a.state in _LIVE
                      and self.freelist.holds_after(a.id, now)]
        candidates.sort(key=lambda a: (-a.window.start,
                                       pricing.accrued_charge(a, now), a.id))
        chosen: list[Allocation] = []
        for victim in candidates:
            probe.release(victim.id, now)
            chosen.append(victim)
            if probe.feasible_placements(ctype, count, window, exclude) is not None:
                return chosen
        raise errors.InsufficientVictims(
            f"releasing all {len(candidates)} real-time allocations still cannot "
            f"fit {count} x {ctype.name}")

    # --- internals -------------------------------------------------------------

    def _recover_reserved(self, alloc: Allocation, now: TimeUnit, plan: RecoveryPlan,
                          exclude: frozenset[str] = frozenset()) -> None:
        rest = TimeWindow(max(now, alloc.window.start), alloc.window.end)
        before = self.freelist.clone() if self._recovery_hook else None
        ctype = CONTAINER_TYPES[alloc.placements[0].ctype]
        count = alloc.count
        outcome = "migrated"
        victims: list[Allocation] = []
        options = self.freelist.feasible_placements(ctype, count, rest, exclude)
        if options is None:
            try:
                victims = self.select_victims(ctype, count, rest, now, exclude)
            except errors.InsufficientVictims:
                alloc.state = AllocationState.FAILED
                credit = alloc.quote - pricing.accrued_charge(alloc, now)
                plan.credited.append(CreditEvent(
                    alloc.id, alloc.request_id, now,
                    lost_units=rest.duration_units, credit=credit))
                outcome = "credited"
                self._fire_recovery(alloc, now, before, outcome, victims)
                return
            for victim in victims:
                self.freelist.release(victim.id, now)
                victim.state = AllocationState.PREEMPTED
                note = PreemptionNote(victim.id, now,
                                      f"capacity recovered for {alloc.id}")
                self._pending_preemptions.append(note)
                plan.preempted.append(victim.id)
            outcome = "preempted_migration"
            options = self.freelist.feasible_placements(ctype, count, rest, exclude)
            assert options is not None
        placements = self.pack_placement(ctype, count, rest, options)
        self.freelist.recommit(alloc.id, placements, rest, ctype)
        alloc.placements = placements
        plan.migrated.append((alloc.id, placements))
        self._fire_recovery(alloc, now, before, outcome, victims)

    def _fire_recovery(self, alloc: Allocation, now: TimeUnit, before: FreeList | None,
                       outcome: str, victims: list[Allocation]) -> None:
        if self._recovery_hook is not None:
            self._recovery_hook({
                "allocation": alloc,
                "now": now,
                "before": before,
                "outcome": outcome,
                "victims": [v.id for v in victims],
            })

    def _horizon_reject(self, req: Request, now: TimeUnit) -> RejectionReason | None:
        if req.window.end > self.freelist.n_units:
            return RejectionReason(
                REJECT_HORIZON,
                f"window ends at {req.window.end}, beyond free-list coverage "
                f"{self.freelist.n_units}")
        if req.window.start >= now + self.horizon_units:
            return RejectionReason(
                REJECT_HORIZON,
                f"window starts {req.window.start - now} units ahead, horizon is "
                f"{self.horizon_units}")
        return None

    def _record(self, req: Request, now: TimeUnit, outcome: RecordOutcome,
                reason: str | None = None, quoted: Money = 0) -> None:
        if self._record_sink is not None:
            self._record_sink(RequestRecord(req, outcome, reason, quoted, 0, now))

    def _next_id(self) -> str:
        self._seq += 1
        return f"a{self._seq:06d}"


def plan_lines(plan: SchedulePlan) -> list[str]:
    """Canonical plan-log lines, one per plan event."""
    from .encoding import encode_line
    lines = []
    for alloc in plan.to_start:
        lines.append(encode_line([
            ("type", "plan"), ("tick", str(plan.tick)), ("event", "start"),
            ("allocation", alloc.id),
            ("machines", ";".join(alloc.machine_ids)),
        ]))
    for aid in plan.to_stop:
        lines.append(encode_line([
            ("type", "plan"), ("tick", str(plan.tick)), ("event", "stop"),
            ("allocation", aid),
        ]))
    for note in plan.preemptions:
        lines.append(encode_line([
            ("type", "plan"), ("tick", str(plan.tick)), ("event", "preempt"),
            ("allocation", note.allocation_id), ("at", str(note.at)),
            ("reason", note.reason),
        ]))
    return lines
