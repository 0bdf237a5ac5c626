"""Simulated execution substrate: container lifecycle, ping-based failure
detection, restart-then-replan recovery, and seeded fault injection.

The deployer is stepped synchronously with the scheduler once per tick:
apply_plan -> ping_sweep -> handle_failure. Every lifecycle transition,
failure and recovery emits one canonical event-log line, which is what the
golden-file tests diff.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import errors, pricing
from .encoding import decode_line, encode_line
from .model import Allocation, AllocationState, TimeUnit
from .planner import RecordOutcome
from .scheduler import RecoveryPlan, SchedulePlan, Scheduler


class ContainerState(Enum):
    PROVISIONING = "provisioning"
    RUNNING = "running"
    STOPPING = "stopping"
    STOPPED = "stopped"
    FAILED = "failed"


# Provisioning->Failed is allowed in addition to the core set: a machine can
# crash while binaries are still being shipped.
_LEGAL = {
    ContainerState.PROVISIONING: {ContainerState.RUNNING, ContainerState.FAILED},
    ContainerState.RUNNING: {ContainerState.STOPPING, ContainerState.FAILED},
    ContainerState.STOPPING: {ContainerState.STOPPED},
    ContainerState.STOPPED: set(),
    ContainerState.FAILED: {ContainerState.RUNNING, ContainerState.FAILED},
}

_LIVE = (ContainerState.PROVISIONING, ContainerState.RUNNING)


@dataclass
class ContainerInstance:
    allocation_id: str
    machine_id: str
    state: ContainerState
    since: TimeUnit

    def transition(self, new_state: ContainerState, now: TimeUnit) -> None:
        if new_state not in _LEGAL[self.state]:
            raise AssertionError(
                f"illegal container transition {self.state.value} -> "
                f"{new_state.value} for {self.allocation_id}@{self.machine_id}")
        self.state = new_state
        self.since = now


class FaultKind(Enum):
    MACHINE_CRASH = "machine_crash"
    SLOT_HANG = "slot_hang"


@dataclass(frozen=True, order=True)
class FaultEvent:
    time: TimeUnit
    machine_id: str
    kind: FaultKind
    restartable: bool


@dataclass(frozen=True)
class FaultPlan:
    seed: int
    events: tuple[FaultEvent, ...]

    def __post_init__(self) -> None:
        if list(self.events) != sorted(self.events, key=lambda e: (e.time, e.machine_id)):
            raise errors.InvalidConfig("fault events must be sorted by (time, machine)")

    @classmethod
    def empty(cls) -> FaultPlan:
        return cls(0, ())

    @classmethod
    def synthesize(cls, seed: int, machine_ids: Sequence[str], n_units: int,
                   n_events: int, restartable_fraction: float = 0.5) -> FaultPlan:
        """Deterministic fault plan drawn from the seed."""
        rng = np.random.Generator(np.random.PCG64(seed))
        events = []
        for _ in range(n_events):
            t = int(rng.integers(0, n_units))
            m = machine_ids[int(rng.integers(0, len(machine_ids)))]
            kind = FaultKind.MACHINE_CRASH if rng.random() < 0.5 else FaultKind.SLOT_HANG
            restartable = bool(rng.random() < restartable_fraction)
            events.append(FaultEvent(t, m, kind, restartable))
        events.sort(key=lambda e: (e.time, e.machine_id))
        return cls(seed, tuple(events))

    def to_lines(self) -> list[str]:
        lines = [encode_line([("type", "fault_plan"), ("seed", str(self.seed))])]
        for e in self.events:
            lines.append(encode_line([
                ("type", "fault"), ("time", str(e.time)),
                ("machine_id", e.machine_id), ("kind", e.kind.value),
                ("restartable", "1" if e.restartable else "0"),
            ]))
        return lines

    @classmethod
    def from_lines(cls, lines: Sequence[str]) -> FaultPlan:
        seed = 0
        events = []
        for line in lines:
            fields = decode_line(line)
            if not fields:
                continue
            if fields.get("type") == "fault_plan":
                seed = int(fields.get("seed", "0"))
            elif fields.get("type") == "fault":
                events.append(FaultEvent(
                    int(fields["time"]), fields["machine_id"],
                    FaultKind(fields["kind"]), fields["restartable"] == "1"))
        events.sort(key=lambda e: (e.time, e.machine_id))
        return cls(seed, tuple(events))

    @classmethod
    def load(cls, path: str | Path) -> FaultPlan:
        return cls.from_lines(Path(path).read_text(encoding="utf-8").splitlines())


InvoiceSink = Callable[[Allocation, pricing.Invoice, RecordOutcome], None]


class DeployerSim:
    def __init__(self, scheduler: Scheduler, fault_plan: FaultPlan | None = None,
                 invoice_sink: InvoiceSink | None = None):
        self.scheduler = scheduler
        self.fault_plan = fault_plan or FaultPlan.empty()
        self.containers: dict[str, dict[str, ContainerInstance]] = {}
        self.event_lines: list[str] = []
        self._invoice_sink = invoice_sink
        self._detected: set[int] = set()

    # --- per-tick pipeline ------------------------------------------------------

    def apply_plan(self, plan: SchedulePlan, now: TimeUnit) -> None:
        """Stop ending jobs, ship new ones, promote provisioned containers."""
        for aid in plan.to_stop:
            if aid not in self.scheduler.allocations:
                raise errors.UnknownAllocation(aid)
            alloc = self.scheduler.allocations[aid]
            for inst in self._live_instances(aid):
                inst.transition(ContainerState.STOPPING, now)
                self._event(now, "container_stopping", aid, inst.machine_id)
                inst.transition(ContainerState.STOPPED, now)
                self._event(now, "container_stopped", aid, inst.machine_id)
            alloc.state = AllocationState.STOPPED
            self._settle(alloc, RecordOutcome.COMPLETED)
        for alloc in plan.to_start:
            if alloc.id not in self.scheduler.allocations:
                raise errors.UnknownAllocation(alloc.id)
            slot_map = self.containers.setdefault(alloc.id, {})
            for p in alloc.placements:
                slot_map[p.machine_id] = ContainerInstance(
                    alloc.id, p.machine_id, ContainerState.PROVISIONING, now)
                self._event(now, "container_provisioning", alloc.id, p.machine_id)
        self._promote(now)

    def ping_sweep(self, now: TimeUnit) -> list[FaultEvent]:
        """Surface every not-yet-detected fault with time <= now, exactly once."""
        due = [(i, e) for i, e in enumerate(self.fault_plan.events)
               if e.time <= now and i not in self._detected]
        due.sort(key=lambda ie: (ie[1].time, ie[1].machine_id))
        out = []
        for i, event in due:
            self._detected.add(i)
            self._event(now, "fault_detected", None, event.machine_id,
                        kind=event.kind.value,
                        restartable="1" if event.restartable else "0")
            out.append(event)
        return out

    def handle_failure(self, event: FaultEvent, now: TimeUnit) -> RecoveryPlan | None:
        """Restart in place when possible, otherwise escalate to the scheduler."""
        if event.kind is FaultKind.MACHINE_CRASH:
            if event.restartable:
                for inst in self._instances_on(event.machine_id):
                    inst.transition(ContainerState.FAILED, now)
                    inst.transition(ContainerState.RUNNING, now)
                self._event(now, "restarted_in_place", None, event.machine_id)
                return None
            plan = self.scheduler.replan_on_failure(event.machine_id, now)
            self._apply_recovery(plan, now)
            return plan
        # slot hang: one container on the machine, lowest allocation id first
        victims = sorted(self._instances_on(event.machine_id),
                         key=lambda i: i.allocation_id)
        if not victims:
            self._event(now, "slot_hang_idle", None, event.machine_id)
            return None
        inst = victims[0]
        if event.restartable:
            inst.transition(ContainerState.FAILED, now)
            inst.transition(ContainerState.RUNNING, now)
            self._event(now, "restarted_in_place", inst.allocation_id, event.machine_id)
            return None
        inst.transition(ContainerState.FAILED, now)
        self._event(now, "restart_failed", inst.allocation_id, event.machine_id)
        plan = self.scheduler.replan_allocation(inst.allocation_id, now,
                                                exclude_machine=event.machine_id)
        self._apply_recovery(plan, now)
        return plan

    # --- internals --------------------------------------------------------------

    def _apply_recovery(self, plan: RecoveryPlan, now: TimeUnit) -> None:
        if plan.machine_id is not None:
            self._event(now, "machine_outage", None, plan.machine_id)
        for aid in plan.failed_realtime:
            alloc = self.scheduler.allocations[aid]
            for inst in self._live_instances(aid):
                inst.transition(ContainerState.FAILED, now)
            self._event(now, "realtime_failed", aid, plan.machine_id)
            self._settle(alloc, RecordOutcome.PREEMPTED, interrupted_at=now)
        for aid in plan.preempted:
            alloc = self.scheduler.allocations[aid]
            for inst in self._live_instances(aid):
                inst.transition(ContainerState.STOPPING, now)
                inst.transition(ContainerState.STOPPED, now)
            self._event(now, "realtime_preempted", aid, None)
            self._settle(alloc, RecordOutcome.PREEMPTED, interrupted_at=now)
        for aid, placements in plan.migrated:
            alloc = self.scheduler.allocations[aid]
            self._reconcile_containers(alloc, now, crashed=plan.machine_id)
            self._event(now, "reserved_migrated", aid,
                        ";".join(sorted(p.machine_id for p in placements)))
        for credit in plan.credited:
            alloc = self.scheduler.allocations[credit.allocation_id]
            for inst in self._live_instances(credit.allocation_id):
                inst.transition(ContainerState.FAILED, now)
            self._event(now, "credit_issued", credit.allocation_id, plan.machine_id,
                        credit=str(credit.credit))
            self._settle(alloc, RecordOutcome.CREDITED, interrupted_at=now)

    def _reconcile_containers(self, alloc: Allocation, now: TimeUnit,
                              crashed: str | None) -> None:
        """Make the container set match the allocation's new placements."""
        slot_map = self.containers.setdefault(alloc.id, {})
        wanted = {p.machine_id for p in alloc.placements}
        for machine_id, inst in list(slot_map.items()):
            if machine_id in wanted or inst.state not in _LIVE:
                continue
            if machine_id == crashed:
                inst.transition(ContainerState.FAILED, now)
            elif inst.state is ContainerState.RUNNING:
                inst.transition(ContainerState.STOPPING, now)
                inst.transition(ContainerState.STOPPED, now)
            else:
                # superseded before the binaries ever landed
                del slot_map[machine_id]
        handed = alloc.state in (AllocationState.PROVISIONING, AllocationState.RUNNING)
        if not handed:
            return  # still planned; the future to_start will ship containers
        for machine_id in sorted(wanted):
            existing = slot_map.get(machine_id)
            if existing is not None and existing.state in _LIVE:
                continue
            inst = ContainerInstance(alloc.id, machine_id,
                                     ContainerState.PROVISIONING, now)
            slot_map[machine_id] = inst
            self._event(now, "container_provisioning", alloc.id, machine_id)
            if alloc.window.start <= now:
                inst.transition(ContainerState.RUNNING, now)
                self._event(now, "container_running", alloc.id, machine_id)

    def _promote(self, now: TimeUnit) -> None:
        for aid, slot_map in self.containers.items():
            alloc = self.scheduler.allocations.get(aid)
            if alloc is None or alloc.window.start > now:
                continue
            promoted = False
            for inst in slot_map.values():
                if inst.state is ContainerState.PROVISIONING:
                    inst.transition(ContainerState.RUNNING, now)
                    self._event(now, "container_running", aid, inst.machine_id)
                    promoted = True
            if promoted and alloc.state is AllocationState.PROVISIONING:
                alloc.state = AllocationState.RUNNING

    def _live_instances(self, aid: str) -> list[ContainerInstance]:
        return [inst for inst in self.containers.get(aid, {}).values()
                if inst.state in _LIVE]

    def _instances_on(self, machine_id: str) -> list[ContainerInstance]:
        out = []
        for slot_map in self.containers.values():
            inst = slot_map.get(machine_id)
            if inst is not None and inst.state in _LIVE:
                out.append(inst)
        return sorted(out, key=lambda i: i.allocation_id)

    def _settle(self, alloc: Allocation, outcome: RecordOutcome,
                interrupted_at: TimeUnit | None = None) -> None:
        if self._invoice_sink is not None:
            invoice = pricing.settle(alloc, interrupted_at)
            self._invoice_sink(alloc, invoice, outcome)

    def _event(self, now: TimeUnit, event: str, allocation: str | None,
               machine: str | None, **extra: str) -> None:
        pairs = [("type", "event"), ("tick", str(now)), ("event", event)]
        if allocation is not None:
            pairs.append(("allocation", allocation))
        if machine is not None:
            pairs.append(("machine", machine))
        pairs.extend(sorted(extra.items()))
        self.event_lines.append(encode_line(pairs))
