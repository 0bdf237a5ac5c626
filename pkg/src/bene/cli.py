"""Command line front end: generate, simulate, serve, plan-capacity, quote.

Flags can be overridden by environment variables prefixed ``BENE_``
(BENE_SEED, BENE_OUT_DIR, BENE_TIME_SCALE, BENE_PORT, BENE_THETA,
BENE_HEADROOM); the kernel backend is selected by BENE_NUMBA.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from fractions import Fraction

from . import pricing
from .deployer import FaultPlan
from .harness import run_simulation
from .model import CONTAINER_TYPES, ResourceVector, TimeWindow
from .planner import RequestStore, build_report, report_to_lines, report_to_text
from .timeline import MachineSpec
from .workload import generate, load_scenario, load_trace, write_trace


def _env(name: str, default, cast):
    raw = os.environ.get(f"BENE_{name}")
    return cast(raw) if raw is not None else default


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bene", description="micro-data-center scaling engine")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="materialize a scenario into a trace file")
    g.add_argument("--scenario", required=True, help="scenario config file")
    g.add_argument("--out", required=True, help="trace output path")
    g.add_argument("--seed", type=int, default=_env("SEED", None, int),
                   help="override the scenario seed")

    s = sub.add_parser("simulate", help="replay a trace deterministically")
    s.add_argument("--scenario", required=True)
    s.add_argument("--trace", required=True)
    s.add_argument("--faults", default=None, help="fault plan file")
    s.add_argument("--out-dir", default=_env("OUT_DIR", None, str),
                   help="directory for logs and reports")

    v = sub.add_parser("serve", help="run the live request service")
    v.add_argument("--config", required=True, help="scenario config file (MDC + pricing)")
    v.add_argument("--time-scale", type=float,
                   default=_env("TIME_SCALE", 900.0, float),
                   help="seconds per 15-minute unit (default 900 = real time)")
    v.add_argument("--port", type=int, default=_env("PORT", 8080, int))

    p = sub.add_parser("plan-capacity", help="peak analysis and machine recommendation")
    p.add_argument("--store", required=True, help="request record log")
    p.add_argument("--from", dest="start", type=int, required=True)
    p.add_argument("--to", dest="end", type=int, required=True)
    p.add_argument("--theta", type=float, default=_env("THETA", 0.05, float))
    p.add_argument("--headroom", type=float, default=_env("HEADROOM", 1.0, float))
    p.add_argument("--machine-cpu", type=int, default=4000)
    p.add_argument("--machine-mem", type=int, default=8192)

    q = sub.add_parser("quote", help="offline price check")
    q.add_argument("--kind", choices=["reserved", "realtime"], required=True)
    q.add_argument("--count", type=int, required=True)
    q.add_argument("--ctype", choices=sorted(CONTAINER_TYPES), required=True)
    q.add_argument("--units", type=int, required=True, help="occupancy duration")
    q.add_argument("--utilization", type=float, default=0.0,
                   help="utilization at admission (realtime only)")
    q.add_argument("--base-rate", type=int, default=1_000_000)
    q.add_argument("--floor", default="1/4", help="real-time discount floor")
    return parser


def _cmd_generate(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    requests = generate(scenario)
    write_trace(requests, args.out)
    print(f"wrote {len(requests)} requests to {args.out}")
    return 0


def _cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    trace = load_trace(args.trace)
    fault_path = args.faults or scenario.fault_plan_path
    faults = FaultPlan.load(fault_path) if fault_path else FaultPlan.empty()
    result = run_simulation(scenario, trace, faults, out_dir=args.out_dir)
    sys.stdout.write(result.report_text)
    if args.out_dir:
        print(f"logs written to {args.out_dir}")
    return 0


def _cmd_serve(args) -> int:
    from .service import start_service
    scenario = load_scenario(args.config)
    handle = start_service(scenario, time_scale=args.time_scale, port=args.port)
    print(f"serving on port {handle.port} "
          f"(1 unit = {args.time_scale:g}s, {len(scenario.mdc)} machines)")
    try:
        while True:
            handle._ticker.join(timeout=3600)
    except KeyboardInterrupt:
        print("shutting down")
        handle.stop()
    return 0


def _cmd_plan_capacity(args) -> int:
    store = RequestStore(args.store)
    window = TimeWindow(args.start, args.end)
    records = store.load(window)
    machine = MachineSpec("planner", ResourceVector(args.machine_cpu, args.machine_mem))
    report = build_report(records, window, machine, args.headroom)
    sys.stdout.write(report_to_text(report))
    for line in report_to_lines(report):
        print(line)
    return 0


def _cmd_quote(args) -> int:
    book = pricing.PriceBook(args.base_rate, Fraction(args.floor))
    ctype = CONTAINER_TYPES[args.ctype]
    window = TimeWindow(0, args.units)
    if args.kind == "reserved":
        quote = pricing.quote_reserved(book, args.count, ctype, window)
    else:
        quote = pricing.quote_realtime(book, args.count, ctype, window,
                                       args.utilization)
    print(f"{quote} micros ({quote / 1e6:.6f} units)")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "simulate": _cmd_simulate,
    "serve": _cmd_serve,
    "plan-capacity": _cmd_plan_capacity,
    "quote": _cmd_quote,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
