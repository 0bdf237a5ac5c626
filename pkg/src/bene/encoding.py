"""Canonical flat key-value text encoding.

One record per line, ``key=value`` pairs separated by single spaces, fields
in the order the domain types declare them. This one format is the contract
for trace files, the request store, event/plan/invoice logs, scenario
configs, and the wire payloads of the service. Values are percent-escaped so
records stay one-per-line and split cleanly on spaces.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable

from . import errors
from .model import (
    Allocation,
    AllocationState,
    CONTAINER_TYPES,
    ContainerType,
    Placement,
    Recurrence,
    Request,
    RequestKind,
    ResourceVector,
    Slo,
    TimeWindow,
)

_ESCAPE = {"%": "%25", " ": "%20", "=": "%3D", "\n": "%0A", "\t": "%09"}


def escape(value: str) -> str:
    out = value.replace("%", "%25")
    for ch, rep in _ESCAPE.items():
        if ch != "%":
            out = out.replace(ch, rep)
    return out


def unescape(value: str) -> str:
    out = value
    for ch, rep in _ESCAPE.items():
        if ch != "%":
            out = out.replace(rep, ch)
    return out.replace("%25", "%")


def encode_line(pairs: Iterable[tuple[str, str]]) -> str:
    return " ".join(f"{k}={escape(str(v))}" for k, v in pairs)


def decode_line(line: str) -> dict[str, str]:
    """Parse one record line into a field dict (insertion order preserved)."""
    out: dict[str, str] = {}
    line = line.strip()
    if not line:
        return out
    for token in line.split(" "):
        if "=" not in token:
            raise errors.EncodingError(f"malformed token {token!r} in line {line!r}")
        key, _, value = token.partition("=")
        out[key] = unescape(value)
    return out


def _require(fields: dict[str, str], key: str) -> str:
    if key not in fields:
        raise errors.EncodingError(f"missing field {key!r} in record {fields!r}")
    return fields[key]


def _ctype_by_name(name: str) -> ContainerType:
    if name not in CONTAINER_TYPES:
        raise errors.EncodingError(f"unknown container type {name!r}")
    return CONTAINER_TYPES[name]


# --- request --------------------------------------------------------------

def request_pairs(r: Request) -> list[tuple[str, str]]:
    return [
        ("id", r.id),
        ("enterprise", r.enterprise),
        ("kind", r.kind.value),
        ("count", str(r.count)),
        ("ctype", r.ctype.name),
        ("start", str(r.window.start)),
        ("end", str(r.window.end)),
        ("max_latency_ms", str(r.slo.max_latency_ms)),
        ("min_throughput_rps", str(r.slo.min_throughput_rps)),
        ("recurrence", r.recurrence.value),
        ("submitted_at", str(r.submitted_at)),
    ]


def request_to_line(r: Request) -> str:
    return encode_line([("type", "request")] + request_pairs(r))


def request_from_fields(fields: dict[str, str]) -> Request:
    return Request(
        id=_require(fields, "id"),
        enterprise=_require(fields, "enterprise"),
        kind=RequestKind(_require(fields, "kind")),
        count=int(_require(fields, "count")),
        ctype=_ctype_by_name(_require(fields, "ctype")),
        window=TimeWindow(int(_require(fields, "start")), int(_require(fields, "end"))),
        slo=Slo(int(_require(fields, "max_latency_ms")),
                int(_require(fields, "min_throughput_rps"))),
        recurrence=Recurrence(fields.get("recurrence", "none")),
        submitted_at=int(fields.get("submitted_at", "0")),
    )


def request_from_line(line: str) -> Request:
    fields = decode_line(line)
    if fields.get("type") != "request":
        raise errors.EncodingError(f"expected a request record, got {fields.get('type')!r}")
    return request_from_fields(fields)


# --- allocation -----------------------------------------------------------

def placements_to_str(placements: Iterable[Placement]) -> str:
    return ";".join(f"{p.machine_id}:{p.ctype}:{p.count}" for p in placements)


def placements_from_str(text: str) -> list[Placement]:
    out = []
    for part in text.split(";"):
        if not part:
            continue
        machine_id, ctype, count = part.split(":")
        out.append(Placement(machine_id, ctype, int(count)))
    return out


def allocation_to_line(a: Allocation) -> str:
    return encode_line([
        ("type", "allocation"),
        ("id", a.id),
        ("request_id", a.request_id),
        ("placements", placements_to_str(a.placements)),
        ("start", str(a.window.start)),
        ("end", str(a.window.end)),
        ("preemptible", "1" if a.preemptible else "0"),
        ("quote", str(a.quote)),
        ("state", a.state.value),
    ])


def allocation_from_line(line: str) -> Allocation:
    fields = decode_line(line)
    if fields.get("type") != "allocation":
        raise errors.EncodingError(f"expected an allocation record, got {fields.get('type')!r}")
    return Allocation(
        id=_require(fields, "id"),
        request_id=_require(fields, "request_id"),
        placements=placements_from_str(_require(fields, "placements")),
        window=TimeWindow(int(_require(fields, "start")), int(_require(fields, "end"))),
        preemptible=_require(fields, "preemptible") == "1",
        quote=int(_require(fields, "quote")),
        state=AllocationState(_require(fields, "state")),
    )


# --- scenario / machines --------------------------------------------------

def machine_pairs(machine_id: str, capacity: ResourceVector) -> list[tuple[str, str]]:
    return [
        ("machine_id", machine_id),
        ("cpu_millicores", str(capacity.cpu_millicores)),
        ("mem_mb", str(capacity.mem_mb)),
    ]


def fraction_to_str(f: Fraction) -> str:
    return f"{f.numerator}/{f.denominator}" if f.denominator != 1 else str(f.numerator)


def fraction_from_str(text: str) -> Fraction:
    if "/" in text:
        num, den = text.split("/")
        return Fraction(int(num), int(den))
    return Fraction(text)
