import random

import pytest

from bene import errors
from bene.model import (
    Allocation,
    Placement,
    ResourceVector,
    SMALL,
    TimeWindow,
)
from bene.timeline import FreeList, MachineSpec
from conftest import make_machines


def _alloc(aid, placements, window, preemptible=False):
    return Allocation(aid, f"req-{aid}", placements, window, preemptible, 0)


def test_empty_mdc_hosts_two_smalls(fl2):
    options = fl2.feasible_placements(SMALL, 2, TimeWindow(0, 8))
    assert options is not None
    assert dict(options) == {"m00": 4, "m01": 4}


def test_saturated_unit_blocks_overlapping_window(fl2):
    fl2.commit(_alloc("a1", [Placement("m00", "large", 1),
                             Placement("m01", "large", 1)], TimeWindow(5, 6)))
    assert fl2.feasible_placements(SMALL, 1, TimeWindow(3, 7)) is None
    assert fl2.feasible_placements(SMALL, 1, TimeWindow(3, 5)) is not None


def test_pinned_placement_needs_every_unit():
    # brute-force residual oracle: with 2 smalls booked on [2,3), unit 2 can
    # host only 2 more smalls on a 4000-millicore machine, so 3 cannot fit
    fl = FreeList(make_machines(1), 16)
    fl.commit(_alloc("a1", [Placement("m00", "small", 2)], TimeWindow(2, 3)))
    residual_by_unit = {}
    for t in range(0, 4):
        booked = 2 * 1000 if 2 <= t < 3 else 0
        residual_by_unit[t] = 4000 - booked
    assert min(residual_by_unit.values()) // 1000 < 3
    assert fl.feasible_placements(SMALL, 3, TimeWindow(0, 4)) is None
    assert fl.feasible_placements(SMALL, 2, TimeWindow(0, 4)) is not None


def test_window_outside_horizon(fl2):
    with pytest.raises(errors.WindowOutsideHorizon):
        fl2.feasible_placements(SMALL, 1, TimeWindow(60, 70))


def test_commit_subtracts_footprint(fl2):
    fl2.commit(_alloc("a1", [Placement("m00", "small", 1)], TimeWindow(0, 2)))
    assert fl2.remaining_at(0, "m00") == ResourceVector(3000, 6144)
    assert fl2.remaining_at(1, "m00") == ResourceVector(3000, 6144)
    assert fl2.remaining_at(2, "m00") == ResourceVector(4000, 8192)
    assert fl2.remaining_at(0, "m01") == ResourceVector(4000, 8192)
    fl2.verify()


def test_overcommit_is_atomic(fl2):
    fl2.commit(_alloc("a1", [Placement("m00", "large", 1)], TimeWindow(3, 4)))
    before = fl2.dump()
    with pytest.raises(errors.OverCommit):
        # m01 leg fits, m00 leg collides at unit 3: nothing may change
        fl2.commit(_alloc("a2", [Placement("m01", "small", 1),
                                 Placement("m00", "small", 1)], TimeWindow(0, 8)))
    assert fl2.dump() == before
    assert not fl2.knows("a2")
    fl2.verify()


def test_commit_release_round_trip(fl2):
    before = fl2.dump()
    a = _alloc("a1", [Placement("m00", "small", 2), Placement("m01", "small", 1)],
               TimeWindow(4, 12))
    fl2.commit(a)
    fl2.release("a1", from_unit=0)
    assert fl2.dump() == before
    fl2.verify()


def test_release_at_window_end_changes_nothing(fl2):
    a = _alloc("a1", [Placement("m00", "small", 1)], TimeWindow(2, 6))
    fl2.commit(a)
    before = fl2.dump()
    fl2.release("a1", from_unit=6)
    assert fl2.dump() == before


def test_release_mid_window_matches_rebuilt_freelist(machines2):
    # oracle: a fresh free list committed only for the kept prefix
    fl = FreeList(machines2, 64)
    fl.commit(_alloc("a1", [Placement("m00", "small", 2)], TimeWindow(2, 10)))
    fl.release("a1", from_unit=5)
    rebuilt = FreeList(machines2, 64)
    rebuilt.commit(_alloc("a1", [Placement("m00", "small", 2)], TimeWindow(2, 5)))
    assert fl.dump() == rebuilt.dump()
    fl.verify()


def test_release_unknown_allocation(fl2):
    with pytest.raises(errors.UnknownAllocation):
        fl2.release("ghost", 0)


def test_utilization_boundaries(fl2):
    assert fl2.utilization(0) == 0.0
    fl2.commit(_alloc("a1", [Placement("m00", "large", 1),
                             Placement("m01", "large", 1)], TimeWindow(7, 8)))
    assert fl2.utilization(7) == 1.0
    fl2.release("a1", 0)
    fl2.commit(_alloc("a2", [Placement("m00", "large", 1)], TimeWindow(7, 8)))
    assert fl2.utilization(7) == 0.5


def test_outage_withholds_full_capacity(fl2):
    fl2.book_outage("m01", 4, 10)
    assert fl2.remaining_at(4, "m01") == ResourceVector(0, 0)
    assert fl2.remaining_at(10, "m01") == ResourceVector(4000, 8192)
    assert fl2.feasible_placements(SMALL, 5, TimeWindow(4, 6)) is None
    fl2.verify()


def test_machines_sorted_by_id():
    fl_a = FreeList(make_machines(3), 8)
    fl_b = FreeList(list(reversed(make_machines(3))), 8)
    assert fl_a.machine_ids == fl_b.machine_ids == ["m00", "m01", "m02"]


def test_clone_is_independent(fl2):
    fl2.commit(_alloc("a1", [Placement("m00", "small", 1)], TimeWindow(0, 4)))
    snap = fl2.clone()
    snap.release("a1", 0)
    assert fl2.remaining_at(0, "m00") == ResourceVector(3000, 6144)
    assert snap.remaining_at(0, "m00") == ResourceVector(4000, 8192)
    fl2.verify()
    snap.verify()


def test_feasible_placements_are_committable(machines2):
    # soundness: any option set, split greedily, commits without OverCommit
    rng = random.Random(23)
    fl = FreeList(machines2, 32)
    seq = 0
    for _ in range(300):
        count = rng.randrange(1, 6)
        start = rng.randrange(0, 31)
        end = rng.randrange(start + 1, 33)
        options = fl.feasible_placements(SMALL, count, TimeWindow(start, end))
        if options is None:
            continue
        seq += 1
        placements = []
        left = count
        for machine_id, cap in options:
            take = min(cap, left)
            if take:
                placements.append(Placement(machine_id, "small", take))
            left -= take
        fl.commit(_alloc(f"s{seq}", placements, TimeWindow(start, end)))
        fl.verify()


def test_conservation_under_random_interleaving(machines2):
    rng = random.Random(41)
    fl = FreeList(machines2, 48, mutation_hook=lambda f, op: f.verify())
    live = []
    seq = 0
    for _ in range(400):
        if live and rng.random() < 0.4:
            aid, window = live.pop(rng.randrange(len(live)))
            fl.release(aid, rng.randrange(0, 49))
            continue
        count = rng.randrange(1, 4)
        start = rng.randrange(0, 47)
        end = rng.randrange(start + 1, 49)
        window = TimeWindow(start, end)
        options = fl.feasible_placements(SMALL, count, window)
        if options is None:
            continue
        seq += 1
        aid = f"x{seq}"
        placements = []
        left = count
        for machine_id, cap in options:
            take = min(cap, left)
            if take:
                placements.append(Placement(machine_id, "small", take))
            left -= take
        fl.commit(_alloc(aid, placements, window))
        live.append((aid, window))
    fl.verify()


def test_dump_format():
    fl = FreeList(make_machines(1), 2)
    assert fl.dump() == (
        "unit machine cpu_millicores mem_mb\n"
        "0 m00 4000 8192\n"
        "1 m00 4000 8192\n")
