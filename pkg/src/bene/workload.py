"""Seeded synthetic multi-enterprise demand with diurnal/weekly shape.

Arrivals are Poisson per time unit around a Gaussian daily bump modulated by
a 7-day multiplier vector. An arrival at unit t is demand that wants to
START at t; reserved requests are submitted `lead` units earlier so the
demand curve keeps the diurnal shape the planner and the multiplexing
experiment measure. Trace bytes are a pure function of the scenario config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from . import errors
from ._kernels import bump_rates_numpy
from .encoding import (
    decode_line,
    encode_line,
    fraction_from_str,
    fraction_to_str,
    request_from_fields,
    request_to_line,
)
from .model import (
    CONTAINER_TYPES,
    Money,
    Recurrence,
    Request,
    RequestKind,
    ResourceVector,
    Slo,
    TimeWindow,
    UNITS_PER_DAY,
)
from .timeline import MachineSpec

# Trace generation always evaluates rates on the numpy path: the jitted twin
# exists for speed comparisons, but trace bytes must not depend on BENE_NUMBA.
_rates = bump_rates_numpy


@dataclass(frozen=True)
class EnterpriseProfile:
    """Shape of one enterprise's demand over a week."""

    enterprise: str
    peak_unit_of_day: int
    peak_width_units: int
    base_rate_per_unit: float
    peak_multiplier: float
    reserved_fraction: float
    container_mix: dict[str, float]
    weekly_modulation: tuple[float, ...] = (1.0,) * 7
    mean_window_units: float = 8.0
    max_count: int = 1

    def __post_init__(self) -> None:
        if not 0 <= self.peak_unit_of_day < UNITS_PER_DAY:
            raise errors.InvalidConfig(f"{self.enterprise}: peak_unit_of_day out of range")
        if self.peak_width_units < 1:
            raise errors.InvalidConfig(f"{self.enterprise}: peak width must be >= 1")
        if self.base_rate_per_unit < 0 or self.peak_multiplier < 1:
            raise errors.InvalidConfig(f"{self.enterprise}: bad rate parameters")
        if not 0 <= self.reserved_fraction <= 1:
            raise errors.InvalidConfig(f"{self.enterprise}: reserved_fraction not in [0,1]")
        if len(self.weekly_modulation) != 7 or min(self.weekly_modulation) < 0:
            raise errors.InvalidConfig(f"{self.enterprise}: weekly_modulation needs 7 "
                                       "non-negative entries")
        if not self.container_mix or min(self.container_mix.values()) < 0:
            raise errors.InvalidConfig(f"{self.enterprise}: bad container mix")
        for name in self.container_mix:
            if name not in CONTAINER_TYPES:
                raise errors.InvalidConfig(f"{self.enterprise}: unknown ctype {name}")
        if self.mean_window_units < 1 or self.max_count < 1:
            raise errors.InvalidConfig(f"{self.enterprise}: bad window/count parameters")


@dataclass(frozen=True)
class ScenarioConfig:
    profiles: tuple[EnterpriseProfile, ...]
    duration_days: int
    seed: int
    mdc: tuple[MachineSpec, ...]
    fault_plan_path: str | None = None
    base_rate: Money = 1_000_000
    realtime_floor: Fraction = Fraction(1, 4)

    def __post_init__(self) -> None:
        if not self.profiles:
            raise errors.InvalidConfig("scenario needs at least one profile")
        if self.duration_days < 1:
            raise errors.InvalidConfig("duration_days must be >= 1")
        if not self.mdc:
            raise errors.InvalidConfig("scenario needs at least one machine")

    @property
    def duration_units(self) -> int:
        return self.duration_days * UNITS_PER_DAY


def arrival_rate(profile: EnterpriseProfile, t: int) -> float:
    """Expected arrivals at unit t: base x weekly x Gaussian daily bump."""
    u = t % UNITS_PER_DAY
    d = abs(u - profile.peak_unit_of_day)
    d = min(d, UNITS_PER_DAY - d)
    width = float(profile.peak_width_units)
    bell = math.exp(-(d * d) / (2.0 * width * width))
    day = (t // UNITS_PER_DAY) % 7
    return (profile.base_rate_per_unit * profile.weekly_modulation[day]
            * (1.0 + (profile.peak_multiplier - 1.0) * bell))


def rate_series(profile: EnterpriseProfile, n_units: int) -> np.ndarray:
    weekly = np.asarray(profile.weekly_modulation, np.float64)
    return _rates(profile.base_rate_per_unit, profile.peak_multiplier,
                  profile.peak_unit_of_day, float(profile.peak_width_units),
                  weekly, n_units)


def _pick_ctype(rng: np.random.Generator, mix: dict[str, float]) -> str:
    names = sorted(mix)
    total = sum(mix[n] for n in names)
    u = rng.random() * total
    acc = 0.0
    for name in names:
        acc += mix[name]
        if u <= acc:
            return name
    return names[-1]


def generate(config: ScenarioConfig) -> list[Request]:
    """Materialize the scenario into a submission-ordered request stream.

    Per-enterprise substreams are seeded scenario_seed ^ profile_index, so
    enterprises can be generated independently without changing the trace.
    """
    n_units = config.duration_units
    requests: list[Request] = []
    for idx, profile in enumerate(config.profiles):
        rng = np.random.Generator(np.random.PCG64(config.seed ^ idx))
        per_unit = rng.poisson(rate_series(profile, n_units))
        seq = 0
        for t in range(n_units):
            for _ in range(int(per_unit[t])):
                reserved = rng.random() < profile.reserved_fraction
                ctype = _pick_ctype(rng, profile.container_mix)
                length = min(UNITS_PER_DAY, int(rng.geometric(
                    1.0 / profile.mean_window_units)))
                count = int(rng.integers(1, profile.max_count + 1))
                slo = Slo(int(rng.integers(10, 101)), int(rng.integers(10, 1001)))
                if reserved and t >= 1:
                    lead = min(int(rng.integers(1, 97)), t)
                    kind = RequestKind.RESERVED
                    submitted = t - lead
                else:
                    # demand at unit 0 cannot lead by a unit; it goes real-time
                    kind = RequestKind.REAL_TIME
                    submitted = t
                requests.append(Request(
                    id=f"{profile.enterprise}-{seq:06d}",
                    enterprise=profile.enterprise,
                    kind=kind,
                    count=count,
                    ctype=CONTAINER_TYPES[ctype],
                    window=TimeWindow(t, t + length),
                    slo=slo,
                    recurrence=Recurrence.NONE,
                    submitted_at=submitted,
                ))
                seq += 1
    requests.sort(key=lambda r: (r.submitted_at, r.id))
    return requests


# --- trace files ------------------------------------------------------------

def trace_to_lines(requests: Sequence[Request]) -> list[str]:
    return [request_to_line(r) for r in requests]

def write_trace(requests: Sequence[Request], path: str | Path) -> None:
    Path(path).write_text("\n".join(trace_to_lines(requests)) + "\n", encoding="utf-8")

def load_trace(path: str | Path) -> list[Request]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        fields = decode_line(line)
        if not fields:
            continue
        if fields.get("type") != "request":
            raise errors.InvalidConfig(f"unexpected line in trace: {line!r}")
        out.append(request_from_fields(fields))
    out.sort(key=lambda r: (r.submitted_at, r.id))
    return out


# --- scenario files -----------------------------------------------------------

def scenario_to_lines(config: ScenarioConfig) -> list[str]:
    head = [
        ("type", "scenario"),
        ("seed", str(config.seed)),
        ("duration_days", str(config.duration_days)),
        ("base_rate", str(config.base_rate)),
        ("realtime_floor", fraction_to_str(config.realtime_floor)),
    ]
    if config.fault_plan_path:
        head.append(("fault_plan", config.fault_plan_path))
    lines = [encode_line(head)]
    for m in config.mdc:
        lines.append(encode_line([
            ("type", "machine"),
            ("machine_id", m.machine_id),
            ("cpu_millicores", str(m.capacity.cpu_millicores)),
            ("mem_mb", str(m.capacity.mem_mb)),
        ]))
    for p in config.profiles:
        mix = ",".join(f"{n}:{p.container_mix[n]!r}" for n in sorted(p.container_mix))
        weekly = ",".join(repr(w) for w in p.weekly_modulation)
        lines.append(encode_line([
            ("type", "profile"),
            ("enterprise", p.enterprise),
            ("peak_unit_of_day", str(p.peak_unit_of_day)),
            ("peak_width_units", str(p.peak_width_units)),
            ("base_rate_per_unit", repr(p.base_rate_per_unit)),
            ("peak_multiplier", repr(p.peak_multiplier)),
            ("reserved_fraction", repr(p.reserved_fraction)),
            ("mix", mix),
            ("weekly", weekly),
            ("mean_window_units", repr(p.mean_window_units)),
            ("max_count", str(p.max_count)),
        ]))
    return lines


def scenario_from_lines(lines: Sequence[str]) -> ScenarioConfig:
    seed = None
    duration_days = None
    base_rate = 1_000_000
    realtime_floor = Fraction(1, 4)
    fault_plan_path = None
    machines: list[MachineSpec] = []
    profiles: list[EnterpriseProfile] = []
    for line in lines:
        fields = decode_line(line)
        if not fields:
            continue
        kind = fields.get("type")
        if kind == "scenario":
            seed = int(fields["seed"])
            duration_days = int(fields["duration_days"])
            base_rate = int(fields.get("base_rate", str(base_rate)))
            realtime_floor = fraction_from_str(fields.get("realtime_floor", "1/4"))
            fault_plan_path = fields.get("fault_plan") or None
        elif kind == "machine":
            machines.append(MachineSpec(
                fields["machine_id"],
                ResourceVector(int(fields["cpu_millicores"]), int(fields["mem_mb"]))))
        elif kind == "profile":
            mix = {}
            for part in fields["mix"].split(","):
                name, _, weight = part.partition(":")
                mix[name] = float(weight)
            weekly = tuple(float(w) for w in fields["weekly"].split(","))
            profiles.append(EnterpriseProfile(
                enterprise=fields["enterprise"],
                peak_unit_of_day=int(fields["peak_unit_of_day"]),
                peak_width_units=int(fields["peak_width_units"]),
                base_rate_per_unit=float(fields["base_rate_per_unit"]),
                peak_multiplier=float(fields["peak_multiplier"]),
                reserved_fraction=float(fields["reserved_fraction"]),
                container_mix=mix,
                weekly_modulation=weekly,
                mean_window_units=float(fields.get("mean_window_units", "8.0")),
                max_count=int(fields.get("max_count", "1")),
            ))
        else:
            raise errors.InvalidConfig(f"unexpected scenario line: {line!r}")
    if seed is None or duration_days is None:
        raise errors.InvalidConfig("scenario file is missing the scenario header")
    return ScenarioConfig(tuple(profiles), duration_days, seed, tuple(machines),
                          fault_plan_path, base_rate, realtime_floor)


def load_scenario(path: str | Path) -> ScenarioConfig:
    return scenario_from_lines(Path(path).read_text(encoding="utf-8").splitlines())


def write_scenario(config: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text("\n".join(scenario_to_lines(config)) + "\n",
                          encoding="utf-8")


# --- stock scenarios ------------------------------------------------------------

def _machines(n: int, cpu: int = 4000, mem: int = 8192) -> tuple[MachineSpec, ...]:
    return tuple(MachineSpec(f"m{i:02d}", ResourceVector(cpu, mem)) for i in range(n))


def university_scenario(seed: int = 7, days: int = 7) -> ScenarioConfig:
    """Campus demand: one broad 9am-5pm plateau, quieter weekends."""
    profile = EnterpriseProfile(
        enterprise="university", peak_unit_of_day=52, peak_width_units=12,
        base_rate_per_unit=0.25, peak_multiplier=6.0, reserved_fraction=0.7,
        container_mix={"small": 0.6, "medium": 0.3, "large": 0.1},
        weekly_modulation=(1.0, 1.0, 1.0, 1.0, 1.0, 0.4, 0.3),
        mean_window_units=8.0, max_count=2)
    return ScenarioConfig((profile,), days, seed, _machines(6))


def traffic_scenario(seed: int = 7, days: int = 7) -> ScenarioConfig:
    """Road monitoring: two rush-hour bumps modeled as two profiles."""
    morning = EnterpriseProfile(
        enterprise="traffic", peak_unit_of_day=32, peak_width_units=5,
        base_rate_per_unit=0.15, peak_multiplier=7.0, reserved_fraction=0.6,
        container_mix={"small": 0.7, "medium": 0.3},
        weekly_modulation=(1.0, 1.0, 1.0, 1.0, 1.0, 0.6, 0.6),
        mean_window_units=6.0, max_count=2)
    evening = EnterpriseProfile(
        enterprise="traffic", peak_unit_of_day=70, peak_width_units=5,
        base_rate_per_unit=0.15, peak_multiplier=7.0, reserved_fraction=0.6,
        container_mix={"small": 0.7, "medium": 0.3},
        weekly_modulation=(1.0, 1.0, 1.0, 1.0, 1.0, 0.6, 0.6),
        mean_window_units=6.0, max_count=2)
    return ScenarioConfig((morning, evening), days, seed, _machines(6))


def nightlife_scenario(seed: int = 7, days: int = 7) -> ScenarioConfig:
    """Evening venues: one late peak, strongest on weekends."""
    profile = EnterpriseProfile(
        enterprise="nightlife", peak_unit_of_day=88, peak_width_units=8,
        base_rate_per_unit=0.2, peak_multiplier=8.0, reserved_fraction=0.5,
        container_mix={"small": 0.5, "medium": 0.4, "large": 0.1},
        weekly_modulation=(0.6, 0.6, 0.7, 0.8, 1.2, 1.5, 1.3),
        mean_window_units=10.0, max_count=2)
    return ScenarioConfig((profile,), days, seed, _machines(6))


def offset_peaks_scenario(seed: int, n_enterprises: int = 4, days: int = 3,
                          machines: int = 10) -> ScenarioConfig:
    """Equal per-enterprise peaks offset by 24 units: the multiplexing setup."""
    profiles = tuple(
        EnterpriseProfile(
            enterprise=f"ent{i}", peak_unit_of_day=(8 + 24 * i) % UNITS_PER_DAY,
            peak_width_units=4, base_rate_per_unit=0.1, peak_multiplier=14.0,
            reserved_fraction=0.7,
            container_mix={"small": 0.7, "medium": 0.3},
            mean_window_units=6.0, max_count=2)
        for i in range(n_enterprises))
    return ScenarioConfig(profiles, days, seed, _machines(machines))
