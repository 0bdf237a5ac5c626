import pytest

from bene import errors
from bene.deployer import (
    ContainerState,
    DeployerSim,
    FaultEvent,
    FaultKind,
    FaultPlan,
)
from bene.model import AllocationState, TimeWindow
from bene.planner import RecordOutcome
from bene.scheduler import SchedulePlan
from conftest import Rig, make_request


def _container(rig, alloc, machine=None):
    slot_map = rig.dep.containers[alloc.id]
    if machine is None:
        machine = next(iter(slot_map))
    return slot_map[machine]


def test_prestart_provisioning_then_running():
    rig = Rig()
    alloc = rig.admit_reserved(start=10, end=12, submitted_at=0)
    rig.run_until(9)
    inst = _container(rig, alloc)
    assert inst.state is ContainerState.PROVISIONING  # shipped one unit early
    rig.step()  # unit 10
    assert inst.state is ContainerState.RUNNING
    assert alloc.state is AllocationState.RUNNING


def test_normal_completion_settles_full_quote():
    rig = Rig()
    alloc = rig.admit_reserved(start=4, end=8, submitted_at=0)
    rig.run_until(8)
    assert alloc.state is AllocationState.STOPPED
    assert _container(rig, alloc).state is ContainerState.STOPPED
    (got_alloc, invoice, outcome), = rig.invoices
    assert got_alloc is alloc
    assert outcome is RecordOutcome.COMPLETED
    assert invoice.charged == alloc.quote and invoice.credits == 0


def test_apply_plan_unknown_allocation():
    rig = Rig()
    rig.step()
    with pytest.raises(errors.UnknownAllocation):
        rig.dep.apply_plan(SchedulePlan(tick=1, to_stop=["ghost"]), 1)


def test_ping_sweep_detects_once_in_machine_order():
    faults = FaultPlan(0, (
        FaultEvent(7, "m00", FaultKind.SLOT_HANG, True),
        FaultEvent(7, "m01", FaultKind.SLOT_HANG, True),
    ))
    rig = Rig(faults=faults)
    rig.run_until(6)
    detected = rig.dep.ping_sweep(7)
    assert [f.machine_id for f in detected] == ["m00", "m01"]
    assert rig.dep.ping_sweep(7) == []
    assert rig.dep.ping_sweep(8) == []


def test_ping_sweep_empty_without_faults():
    rig = Rig()
    rig.run_until(3)
    assert rig.dep.ping_sweep(4) == []


def test_restartable_hang_leaves_freelist_untouched():
    rig = Rig()
    alloc = rig.admit_reserved(start=2, end=10, submitted_at=0)
    rig.run_until(4)
    before = rig.fl.dump()
    machine = alloc.machine_ids[0]
    plan = rig.dep.handle_failure(
        FaultEvent(4, machine, FaultKind.SLOT_HANG, restartable=True), 4)
    assert plan is None
    assert rig.fl.dump() == before
    assert _container(rig, alloc, machine).state is ContainerState.RUNNING
    assert alloc.state is AllocationState.RUNNING


def test_crash_with_survivor_capacity_migrates():
    rig = Rig()
    alloc = rig.admit_reserved(start=2, end=10, count=2, submitted_at=0)
    (old_machine,) = alloc.machine_ids
    survivor = [m for m in rig.fl.machine_ids if m != old_machine][0]
    rig.run_until(5)
    plan = rig.dep.handle_failure(
        FaultEvent(5, old_machine, FaultKind.MACHINE_CRASH, restartable=False), 5)
    assert [aid for aid, _ in plan.migrated] == [alloc.id]
    assert alloc.machine_ids == [survivor]
    assert _container(rig, alloc, old_machine).state is ContainerState.FAILED
    assert _container(rig, alloc, survivor).state is ContainerState.RUNNING
    assert rig.invoices == []  # migration is seamless, billing untouched
    rig.run_until(10)
    (_, invoice, outcome), = rig.invoices
    assert outcome is RecordOutcome.COMPLETED
    assert invoice.charged == alloc.quote


def test_crash_without_capacity_credits_prorated():
    rig = Rig(machines=1)
    alloc = rig.admit_reserved(start=2, end=10, count=2, submitted_at=0)
    rig.run_until(6)
    plan = rig.dep.handle_failure(
        FaultEvent(6, "m00", FaultKind.MACHINE_CRASH, restartable=False), 6)
    (credit,) = plan.credited
    (_, invoice, outcome), = rig.invoices
    assert outcome is RecordOutcome.CREDITED
    # pricing oracle: 4 of 8 units served
    assert invoice.charged == alloc.quote * 4 // 8
    assert invoice.credits == alloc.quote - invoice.charged == credit.credit
    assert alloc.state is AllocationState.FAILED


def test_crash_fails_realtime_with_prorated_settlement():
    rig = Rig()
    rig.run_until(3)
    alloc = rig.admit_realtime(start=3, end=11)
    machine = alloc.machine_ids[0]
    rig.run_until(6)
    rig.dep.handle_failure(
        FaultEvent(7, machine, FaultKind.MACHINE_CRASH, restartable=False), 7)
    (_, invoice, outcome), = rig.invoices
    assert outcome is RecordOutcome.PREEMPTED
    assert alloc.state is AllocationState.FAILED
    assert invoice.charged == alloc.quote * 4 // 8  # ran [3, 7) of [3, 11)


def test_nonrestartable_hang_replans_single_allocation():
    rig = Rig()
    alloc = rig.admit_reserved(start=2, end=10, submitted_at=0)
    (old_machine,) = alloc.machine_ids
    other = rig.admit_reserved(start=2, end=10, submitted_at=0)
    rig.run_until(4)
    plan = rig.dep.handle_failure(
        FaultEvent(4, old_machine, FaultKind.SLOT_HANG, restartable=False), 4)
    assert plan.machine_id is None  # machine itself stays in service
    assert [aid for aid, _ in plan.migrated] == [alloc.id]
    assert alloc.machine_ids != [old_machine]
    assert other.state is AllocationState.RUNNING
    rig.fl.verify()


def test_hang_on_idle_machine_is_noop():
    rig = Rig()
    rig.run_until(2)
    plan = rig.dep.handle_failure(
        FaultEvent(2, "m01", FaultKind.SLOT_HANG, restartable=False), 2)
    assert plan is None
    assert any("slot_hang_idle" in line for line in rig.dep.event_lines)


def test_restartable_crash_restarts_all_containers():
    rig = Rig()
    a1 = rig.admit_reserved(start=2, end=10, submitted_at=0)
    machine = a1.machine_ids[0]
    a2 = rig.admit_reserved(start=3, end=9, submitted_at=0)
    rig.run_until(4)
    before = rig.fl.dump()
    plan = rig.dep.handle_failure(
        FaultEvent(4, machine, FaultKind.MACHINE_CRASH, restartable=True), 4)
    assert plan is None
    assert rig.fl.dump() == before
    for alloc in (a1, a2):
        for inst in rig.dep.containers[alloc.id].values():
            assert inst.state is ContainerState.RUNNING


def test_every_allocation_stops_cleanly_without_faults():
    rig = Rig()
    allocs = [rig.admit_reserved(start=2 + i, end=6 + 2 * i, submitted_at=0)
              for i in range(4)]
    rig.run_until(20)
    assert all(a.state is AllocationState.STOPPED for a in allocs)
    assert len(rig.invoices) == 4
    assert all(inv.charged == a.quote for a, inv, _ in rig.invoices)


def test_illegal_container_transition_asserts():
    rig = Rig()
    alloc = rig.admit_reserved(start=2, end=6, submitted_at=0)
    rig.run_until(6)
    inst = _container(rig, alloc)
    assert inst.state is ContainerState.STOPPED
    with pytest.raises(AssertionError):
        inst.transition(ContainerState.RUNNING, 7)


def test_fault_plan_round_trip(tmp_path):
    plan = FaultPlan.synthesize(13, ["m00", "m01"], 96, 5)
    path = tmp_path / "faults.kv"
    path.write_text("\n".join(plan.to_lines()) + "\n")
    assert FaultPlan.load(path) == plan
