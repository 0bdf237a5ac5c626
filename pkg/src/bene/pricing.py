"""Charging: the reserved price product, utilization-discounted real-time
rates, and settlement with credits for lost service.

All arithmetic is exact: rates and quotes are integer micros, intermediate
factors are Fractions, and rounding happens in exactly two places (the
real-time rate and the served-units proration), both floor. Re-deriving any
invoice from its line items reproduces ``charged`` bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

from . import errors
from .model import Allocation, AllocationState, ContainerType, Money, TimeUnit, TimeWindow


@dataclass(frozen=True)
class PriceBook:
    """Defined price per (slot x time unit) plus the real-time discount floor.

    The real-time rate is base_rate * (floor + (1 - floor) * utilization):
    linear in utilization, never above base_rate, equal to it only when the
    MDC is saturated.
    """

    base_rate: Money = 1_000_000
    realtime_floor: Fraction = Fraction(1, 4)

    def __post_init__(self) -> None:
        if self.base_rate <= 0:
            raise errors.InvalidConfig("base_rate must be positive")
        if not 0 < self.realtime_floor <= 1:
            raise errors.InvalidConfig("realtime_floor must be in (0, 1]")


@dataclass(frozen=True)
class LineItem:
    kind: str  # "service" | "credit"
    start: TimeUnit
    end: TimeUnit
    amount: Money


@dataclass(frozen=True)
class Invoice:
    request_id: str
    quoted: Money
    charged: Money
    credits: Money
    items: tuple[LineItem, ...]

    def __post_init__(self) -> None:
        assert self.charged == self.quoted - self.credits >= 0


def quote_reserved(book: PriceBook, count: int, ctype: ContainerType,
                   window: TimeWindow) -> Money:
    """rate x containers x type factor x occupancy duration, in exact micros."""
    exact = Fraction(book.base_rate) * count * ctype.type_factor * window.duration_units
    return exact.numerator // exact.denominator


def realtime_rate(book: PriceBook, utilization: float | Rational) -> Money:
    """Per-(slot x unit) rate at the given utilization, floored to micros."""
    u = Fraction(utilization)
    if not 0 <= u <= 1:
        raise errors.UtilizationOutOfRange(f"utilization {utilization!r} not in [0, 1]")
    d = book.realtime_floor
    exact = Fraction(book.base_rate) * (d + (1 - d) * u)
    return exact.numerator // exact.denominator


def quote_realtime(book: PriceBook, count: int, ctype: ContainerType,
                   window: TimeWindow, utilization_at_start: float | Rational) -> Money:
    """Real-time quote with the rate locked at admission time."""
    rate = realtime_rate(book, utilization_at_start)
    exact = Fraction(rate) * count * ctype.type_factor * window.duration_units
    return exact.numerator // exact.denominator


def settle(allocation: Allocation, interrupted_at: TimeUnit | None = None) -> Invoice:
    """Produce the final invoice for a terminal allocation.

    Stopped means a full run: charged == quoted. Preempted/Failed at unit t
    charge only the served prefix [start, t) at the quoted per-unit rate;
    the unserved remainder becomes a credit line so charged + credits always
    reconstructs the quote exactly.
    """
    if not allocation.state.terminal:
        raise errors.NonTerminalState(
            f"allocation {allocation.id} is {allocation.state.value}, not terminal")
    w = allocation.window
    if allocation.state is AllocationState.STOPPED:
        cut = w.end
    else:
        if interrupted_at is None:
            raise errors.NonTerminalState(
                f"allocation {allocation.id}: {allocation.state.value} needs "
                "the interruption unit to settle")
        cut = min(max(interrupted_at, w.start), w.end)
    served = cut - w.start
    charged = (Fraction(allocation.quote) * served / w.duration_units).__floor__()
    credits = allocation.quote - charged
    items = [LineItem("service", w.start, cut, charged)]
    if credits:
        items.append(LineItem("credit", cut, w.end, credits))
    return Invoice(allocation.request_id, allocation.quote, charged, credits,
                   tuple(items))


def accrued_charge(allocation: Allocation, now: TimeUnit) -> Money:
    """Charge accumulated for the served units so far (victim-ordering key)."""
    w = allocation.window
    served = min(max(now, w.start), w.end) - w.start
    return (Fraction(allocation.quote) * served / w.duration_units).__floor__()


def invoice_to_pairs(inv: Invoice) -> list[tuple[str, str]]:
    items = ";".join(f"{i.kind}:{i.start}:{i.end}:{i.amount}" for i in inv.items)
    return [
        ("type", "invoice"),
        ("request_id", inv.request_id),
        ("quoted", str(inv.quoted)),
        ("charged", str(inv.charged)),
        ("credits", str(inv.credits)),
        ("items", items),
    ]


def invoice_from_fields(fields: dict[str, str]) -> Invoice:
    items = []
    for part in fields.get("items", "").split(";"):
        if not part:
            continue
        kind, start, end, amount = part.split(":")
        items.append(LineItem(kind, int(start), int(end), int(amount)))
    return Invoice(fields["request_id"], int(fields["quoted"]),
                   int(fields["charged"]), int(fields["credits"]), tuple(items))
