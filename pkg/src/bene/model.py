"""Domain vocabulary: the 15-minute time lattice, resources, container types,
requests, allocations, and money.

Everything downstream (free list, scheduler, pricing, planner) is indexed on
``TimeUnit``: one unit is 15 minutes of wall time counted from a configured
epoch, so 96 units make a day and 672 a week. Money is an integer count of
micro currency units; there is deliberately no floating-point money anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from typing import NamedTuple

from . import errors

UNIT_MINUTES = 15
UNITS_PER_DAY = 96
UNITS_PER_WEEK = 7 * UNITS_PER_DAY

# Type aliases: a TimeUnit is a plain non-negative int index, Money a plain
# int count of 10^-6 currency units. Wrappers would only add friction.
TimeUnit = int
Money = int


@dataclass(frozen=True, order=True)
class TimeWindow:
    """Half-open interval [start, end) of time units."""

    start: TimeUnit
    end: TimeUnit

    def __post_init__(self) -> None:
        if self.start < 0:
            raise errors.EmptyWindow(f"window start must be >= 0, got {self.start}")
        if self.end <= self.start:
            raise errors.EmptyWindow(f"window [{self.start}, {self.end}) is empty")

    @property
    def duration_units(self) -> int:
        return self.end - self.start

    def contains(self, t: TimeUnit) -> bool:
        return self.start <= t < self.end

    def overlaps(self, other: TimeWindow) -> bool:
        return self.start < other.end and other.start < self.end

    def shifted(self, units: int) -> TimeWindow:
        return TimeWindow(self.start + units, self.end + units)


@dataclass(frozen=True)
class ResourceVector:
    """Componentwise (cpu millicores, memory MB) resource amount."""

    cpu_millicores: int
    mem_mb: int

    def __add__(self, other: ResourceVector) -> ResourceVector:
        return ResourceVector(self.cpu_millicores + other.cpu_millicores,
                              self.mem_mb + other.mem_mb)

    def __sub__(self, other: ResourceVector) -> ResourceVector:
        return ResourceVector(self.cpu_millicores - other.cpu_millicores,
                              self.mem_mb - other.mem_mb)

    def scaled(self, k: int) -> ResourceVector:
        return ResourceVector(self.cpu_millicores * k, self.mem_mb * k)

    def covers(self, other: ResourceVector) -> bool:
        """True iff every component of self is >= the matching one of other."""
        return (self.cpu_millicores >= other.cpu_millicores
                and self.mem_mb >= other.mem_mb)

    @property
    def is_nonnegative(self) -> bool:
        return self.cpu_millicores >= 0 and self.mem_mb >= 0

    def as_tuple(self) -> tuple[int, int]:
        return (self.cpu_millicores, self.mem_mb)


@dataclass(frozen=True)
class ContainerType:
    """Named container size with its footprint and pricing multiplier.

    The stock catalog scales footprint proportionally with the factor so
    pricing stays resource-fair: medium is exactly 2x small, large 4x.
    """

    name: str
    footprint: ResourceVector
    type_factor: Fraction


SMALL = ContainerType("small", ResourceVector(1000, 2048), Fraction(1))
MEDIUM = ContainerType("medium", ResourceVector(2000, 4096), Fraction(2))
LARGE = ContainerType("large", ResourceVector(4000, 8192), Fraction(4))

CONTAINER_TYPES: dict[str, ContainerType] = {
    c.name: c for c in (SMALL, MEDIUM, LARGE)
}


@dataclass(frozen=True)
class Slo:
    """Latency/throughput objective, recorded verbatim and never dropped."""

    max_latency_ms: int
    min_throughput_rps: int


class RequestKind(Enum):
    RESERVED = "reserved"
    REAL_TIME = "realtime"


class Recurrence(Enum):
    NONE = "none"
    DAILY = "daily"


@dataclass(frozen=True)
class Request:
    """One enterprise demand for `count` containers of one type over a window."""

    id: str
    enterprise: str
    kind: RequestKind
    count: int
    ctype: ContainerType
    window: TimeWindow
    slo: Slo
    recurrence: Recurrence = Recurrence.NONE
    submitted_at: TimeUnit = 0

    @property
    def demand(self) -> ResourceVector:
        """Total footprint of the request per time unit."""
        return self.ctype.footprint.scaled(self.count)


class AllocationState(Enum):
    PLANNED = "planned"
    PROVISIONING = "provisioning"
    RUNNING = "running"
    STOPPED = "stopped"
    PREEMPTED = "preempted"
    FAILED = "failed"

    @property
    def terminal(self) -> bool:
        return self in (AllocationState.STOPPED, AllocationState.PREEMPTED,
                        AllocationState.FAILED)


class Placement(NamedTuple):
    """`count` containers of one type pinned to one machine for a window."""

    machine_id: str
    ctype: str
    count: int


@dataclass
class Allocation:
    """A committed placement with its price quote and lifecycle state.

    Placements are fixed for the allocation's lifetime except for
    failure-driven replanning; there is no silent migration.
    """

    id: str
    request_id: str
    placements: list[Placement]
    window: TimeWindow
    preemptible: bool
    quote: Money
    state: AllocationState = AllocationState.PLANNED

    @property
    def count(self) -> int:
        return sum(p.count for p in self.placements)

    @property
    def machine_ids(self) -> list[str]:
        return sorted({p.machine_id for p in self.placements})


def validate_request(r: Request, now: TimeUnit) -> Request:
    """Gate every request before admission; returns the request unchanged.

    Reserved requests must lead by at least one unit (the 15-minute advance
    needed to plan and provision slots); real-time requests start exactly at
    `now`. Pure function: same inputs, same verdict.
    """
    if r.count < 1:
        raise errors.ZeroCount(f"request {r.id}: count must be >= 1, got {r.count}")
    if r.slo.max_latency_ms <= 0 or r.slo.min_throughput_rps <= 0:
        raise errors.MalformedSlo(
            f"request {r.id}: SLO fields must be positive, got "
            f"({r.slo.max_latency_ms} ms, {r.slo.min_throughput_rps} rps)")
    if r.window.end <= r.window.start:
        raise errors.EmptyWindow(f"request {r.id}: empty window")
    if r.kind is RequestKind.RESERVED:
        if r.window.start < now + 1:
            raise errors.LeadTimeTooShort(
                f"request {r.id}: reserved start {r.window.start} is less than "
                f"one unit ahead of now={now}")
    else:
        if r.recurrence is not Recurrence.NONE:
            raise errors.InvalidRecurrence(
                f"request {r.id}: real-time requests cannot recur")
        if r.window.start != now:
            raise errors.LeadTimeTooShort(
                f"request {r.id}: real-time requests start immediately "
                f"(start {r.window.start} != now {now})")
    return r


def expand_recurrence(r: Request, horizon_end: TimeUnit) -> list[Request]:
    """Expand a daily reservation into one child per day within the horizon.

    Child k's window is the parent's shifted by k*96 units; only children
    whose window lies fully inside [r.window.start, horizon_end) are kept.
    Children carry the parent id as lineage and do not recur themselves.
    """
    if r.kind is not RequestKind.RESERVED and r.recurrence is not Recurrence.NONE:
        raise errors.InvalidRecurrence(
            f"request {r.id}: only reserved requests may recur")
    if r.recurrence is Recurrence.NONE:
        return [r]
    if horizon_end <= r.window.start:
        raise errors.HorizonBeforeStart(
            f"request {r.id}: horizon {horizon_end} ends at or before window "
            f"start {r.window.start}")
    children = []
    k = 0
    while r.window.end + k * UNITS_PER_DAY <= horizon_end:
        children.append(replace(
            r,
            id=f"{r.id}#d{k}",
            window=r.window.shifted(k * UNITS_PER_DAY),
            recurrence=Recurrence.NONE,
        ))
        k += 1
    return children
