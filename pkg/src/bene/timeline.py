"""The free list: per-time-unit, per-machine remaining capacity.

Backed by a dense int64 array of shape (units, machines, 2) plus a ledger of
committed segments, so that remaining + committed == capacity holds exactly
at every (unit, machine) after any interleaving of commit/release. All
mutations are all-or-nothing; double booking is structurally impossible
because a commit that would drive any residual negative raises OverCommit
without touching the array.

Single-writer: mutations must flow through one scheduler/coordinator context.
``clone()`` produces an independent snapshot for what-if probing.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels, errors
from .model import (
    Allocation,
    CONTAINER_TYPES,
    ContainerType,
    Placement,
    ResourceVector,
    TimeUnit,
    TimeWindow,
)

MutationHook = Callable[["FreeList", str], None]


@dataclass(frozen=True)
class MachineSpec:
    machine_id: str
    capacity: ResourceVector

    def __post_init__(self) -> None:
        if self.capacity.cpu_millicores <= 0 or self.capacity.mem_mb <= 0:
            raise errors.InvalidConfig(
                f"machine {self.machine_id}: capacity must be strictly positive")


@dataclass
class _Segment:
    """Total (cpu, mem) booked per unit on one machine over [start, end)."""

    machine_idx: int
    cpu: int
    mem: int
    start: TimeUnit
    end: TimeUnit


class FreeList:
    def __init__(self, machines: Sequence[MachineSpec], n_units: int,
                 mutation_hook: MutationHook | None = None):
        if n_units < 1:
            raise errors.InvalidConfig("free list needs at least one time unit")
        if not machines:
            raise errors.InvalidConfig("free list needs at least one machine")
        # Machines are ordered by id so every downstream tie-break depends
        # only on machine_id, never on insertion order.
        self._machines = sorted(machines, key=lambda m: m.machine_id)
        ids = [m.machine_id for m in self._machines]
        if len(set(ids)) != len(ids):
            raise errors.InvalidConfig("duplicate machine ids")
        self._index = {mid: i for i, mid in enumerate(ids)}
        self._capacity = np.array([m.capacity.as_tuple() for m in self._machines],
                                  dtype=np.int64)
        self._remaining = np.broadcast_to(
            self._capacity[None, :, :], (n_units, len(ids), 2)).copy()
        self._ledger: dict[str, list[_Segment]] = {}
        self._hook = mutation_hook

    # --- introspection ------------------------------------------------------

    @property
    def n_units(self) -> int:
        return self._remaining.shape[0]

    @property
    def horizon(self) -> TimeWindow:
        return TimeWindow(0, self.n_units)

    @property
    def machines(self) -> list[MachineSpec]:
        return list(self._machines)

    @property
    def machine_ids(self) -> list[str]:
        return [m.machine_id for m in self._machines]

    def machine_index(self, machine_id: str) -> int:
        if machine_id not in self._index:
            raise errors.UnknownMachine(machine_id)
        return self._index[machine_id]

    def knows(self, allocation_id: str) -> bool:
        return allocation_id in self._ledger

    def entries_on(self, machine_id: str, from_unit: TimeUnit) -> list[str]:
        """Ledger entry ids holding capacity on the machine at or after from_unit."""
        idx = self.machine_index(machine_id)
        return [aid for aid, segs in self._ledger.items()
                if any(s.machine_idx == idx and s.end > from_unit for s in segs)]

    def holds_after(self, allocation_id: str, from_unit: TimeUnit) -> bool:
        """True iff the entry still holds capacity at or after from_unit."""
        segs = self._ledger.get(allocation_id, [])
        return any(s.end > from_unit for s in segs)

    def committed_by(self, entry_id: str) -> list[tuple[str, int, int, int, int]]:
        """Booked spans of one entry as (machine_id, cpu, mem, start, end)."""
        return [(self._machines[s.machine_idx].machine_id, s.cpu, s.mem,
                 s.start, s.end)
                for s in self._ledger.get(entry_id, [])]

    def remaining_at(self, t: TimeUnit, machine_id: str) -> ResourceVector:
        self._check_unit(t)
        row = self._remaining[t, self.machine_index(machine_id)]
        return ResourceVector(int(row[0]), int(row[1]))

    # --- feasibility ----------------------------------------------------------

    def feasible_placements(self, ctype: ContainerType, count: int, window: TimeWindow,
                            exclude: Iterable[str] = ()) -> list[tuple[str, int]] | None:
        """Per-machine max counts hostable for EVERY unit of the window.

        Returns [(machine_id, max_count)] with max_count > 0, or None when no
        split of `count` across machines fits (the placement is pinned to its
        machines for the whole window, so each machine must clear every unit).
        """
        self._check_window(window)
        fp = np.array(ctype.footprint.as_tuple(), dtype=np.int64)
        counts = _kernels.window_max_counts(
            self._remaining, window.start, window.end, fp)
        banned = {self.machine_index(m) for m in exclude}
        options = [(m.machine_id, int(counts[i]))
                   for i, m in enumerate(self._machines)
                   if counts[i] > 0 and i not in banned]
        if sum(c for _, c in options) < count:
            return None
        return options

    def window_cpu_slack(self, window: TimeWindow) -> np.ndarray:
        """Remaining cpu summed over the window, per machine (packing metric)."""
        self._check_window(window)
        return self._remaining[window.start:window.end, :, 0].sum(axis=0)

    # --- mutations -------------------------------------------------------------

    def commit(self, allocation: Allocation, ctype: ContainerType | None = None) -> None:
        """Book an allocation's placements; all-or-nothing."""
        if allocation.id in self._ledger:
            raise errors.OverCommit(f"allocation {allocation.id} already committed")
        segments = self._build_segments(allocation.placements, allocation.window, ctype)
        self._apply_segments(allocation.id, segments)
        self._fire("commit")

    def recommit(self, allocation_id: str, placements: Sequence[Placement],
                 window: TimeWindow, ctype: ContainerType | None = None) -> None:
        """Book replacement segments for a known allocation (failure replanning)."""
        if allocation_id not in self._ledger:
            raise errors.UnknownAllocation(allocation_id)
        segments = self._build_segments(placements, window, ctype)
        self._apply_segments(allocation_id, segments)
        self._fire("recommit")

    def book_outage(self, machine_id: str, start: TimeUnit, end: TimeUnit) -> str:
        """Withhold a machine's full capacity for [start, end).

        The caller must have released every allocation on the machine first;
        the outage books the entire capacity as a synthetic ledger entry so
        conservation keeps holding while the machine is down.
        """
        idx = self.machine_index(machine_id)
        end = min(end, self.n_units)
        window = TimeWindow(start, end)
        cap = self._capacity[idx]
        entry_id = f"outage:{machine_id}:{start}"
        if entry_id in self._ledger:
            raise errors.OverCommit(f"outage {entry_id} already booked")
        seg = _Segment(idx, int(cap[0]), int(cap[1]), window.start, window.end)
        self._apply_segments(entry_id, [seg])
        self._fire("outage")
        return entry_id

    def release(self, allocation_id: str, from_unit: TimeUnit) -> None:
        """Return capacity for all units >= from_unit; earlier units stay booked."""
        if allocation_id not in self._ledger:
            raise errors.UnknownAllocation(allocation_id)
        kept: list[_Segment] = []
        for seg in self._ledger[allocation_id]:
            cut = max(seg.start, from_unit)
            if cut < seg.end:
                self._remaining[cut:seg.end, seg.machine_idx, 0] += seg.cpu
                self._remaining[cut:seg.end, seg.machine_idx, 1] += seg.mem
                seg.end = cut
            if seg.start < seg.end:
                kept.append(seg)
        self._ledger[allocation_id] = kept
        self._fire("release")

    # --- utilization ---------------------------------------------------------

    def utilization(self, t: TimeUnit) -> float:
        return float(self.utilization_fraction(t))

    def utilization_fraction(self, t: TimeUnit) -> Fraction:
        """Committed cpu at t over total cpu capacity, exact."""
        self._check_unit(t)
        total = int(self._capacity[:, 0].sum())
        committed = total - int(self._remaining[t, :, 0].sum())
        return Fraction(committed, total)

    def utilization_series(self, upto: TimeUnit | None = None) -> np.ndarray:
        n = self.n_units if upto is None else min(upto, self.n_units)
        committed = _kernels.committed_cpu_series(self._remaining[:n], self._capacity)
        return committed / float(self._capacity[:, 0].sum())

    # --- invariants -------------------------------------------------------------

    def bounds_ok(self) -> bool:
        """0 <= remaining <= capacity at every (unit, machine)."""
        return _kernels.bounds_ok(self._remaining, self._capacity)

    def verify(self) -> None:
        """Assert bounds and exact conservation against the ledger."""
        if not self.bounds_ok():
            raise AssertionError("remaining out of [0, capacity] bounds")
        committed = np.zeros_like(self._remaining)
        for segments in self._ledger.values():
            for seg in segments:
                committed[seg.start:seg.end, seg.machine_idx, 0] += seg.cpu
                committed[seg.start:seg.end, seg.machine_idx, 1] += seg.mem
        expected = np.broadcast_to(self._capacity[None, :, :],
                                   self._remaining.shape) - committed
        if not np.array_equal(expected, self._remaining):
            raise AssertionError("conservation violated: remaining + committed != capacity")

    # --- snapshots / debug -------------------------------------------------------

    def clone(self, keep_hook: bool = False) -> FreeList:
        other = FreeList.__new__(FreeList)
        other._machines = self._machines
        other._index = self._index
        other._capacity = self._capacity
        other._remaining = self._remaining.copy()
        other._ledger = {
            aid: [_Segment(s.machine_idx, s.cpu, s.mem, s.start, s.end)
                  for s in segs]
            for aid, segs in self._ledger.items()
        }
        other._hook = self._hook if keep_hook else None
        return other

    def dump(self, window: TimeWindow | None = None) -> str:
        """Text table of remaining vectors, one row per (unit, machine)."""
        w = window or self.horizon
        self._check_window(w)
        lines = ["unit machine cpu_millicores mem_mb"]
        for t in range(w.start, w.end):
            for i, m in enumerate(self._machines):
                lines.append(f"{t} {m.machine_id} "
                             f"{int(self._remaining[t, i, 0])} "
                             f"{int(self._remaining[t, i, 1])}")
        return "\n".join(lines) + "\n"

    # --- internals --------------------------------------------------------------

    def _check_unit(self, t: TimeUnit) -> None:
        if not 0 <= t < self.n_units:
            raise errors.WindowOutsideHorizon(
                f"unit {t} outside horizon [0, {self.n_units})")

    def _check_window(self, w: TimeWindow) -> None:
        if w.start < 0 or w.end > self.n_units:
            raise errors.WindowOutsideHorizon(
                f"window [{w.start}, {w.end}) outside horizon [0, {self.n_units})")

    def _build_segments(self, placements: Sequence[Placement], window: TimeWindow,
                        ctype: ContainerType | None) -> list[_Segment]:
        self._check_window(window)
        segments = []
        for p in placements:
            fp = (ctype.footprint if ctype is not None
                  else CONTAINER_TYPES[p.ctype].footprint)
            total = fp.scaled(p.count)
            segments.append(_Segment(self.machine_index(p.machine_id),
                                     total.cpu_millicores, total.mem_mb,
                                     window.start, window.end))
        return segments

    def _apply_segments(self, entry_id: str, segments: list[_Segment]) -> None:
        applied: list[_Segment] = []
        for seg in segments:
            sl = self._remaining[seg.start:seg.end, seg.machine_idx]
            if (sl[:, 0] < seg.cpu).any() or (sl[:, 1] < seg.mem).any():
                # all-or-nothing: undo whatever this call already booked
                for done in applied:
                    self._remaining[done.start:done.end, done.machine_idx, 0] += done.cpu
                    self._remaining[done.start:done.end, done.machine_idx, 1] += done.mem
                raise errors.OverCommit(
                    f"{entry_id}: booking would exceed capacity on machine "
                    f"{self._machines[seg.machine_idx].machine_id}")
            sl[:, 0] -= seg.cpu
            sl[:, 1] -= seg.mem
            applied.append(seg)
        self._ledger.setdefault(entry_id, []).extend(segments)

    def _fire(self, op: str) -> None:
        if self._hook is not None:
            self._hook(self, op)
