"""Request/response wire service over HTTP with canonical text payloads.

Endpoints: POST /submit-request (body: one request record line), GET
/allocation-status?id=..., GET /invoice?request_id=..., GET
/capacity-report?from=&to=&theta=&headroom=, GET /health. The engine is the
same admission/scheduling/deployment stack the simulator runs; only the
clock source differs — a background ticker advances one unit every
``time_scale`` seconds (900 for real 15-minute units, small values for
tests). All state mutations are serialized through one lock, so concurrent
submissions are linearizable with respect to the free list.
"""

from __future__ import annotations

import threading
from dataclasses import replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from . import errors
from .deployer import DeployerSim, FaultPlan
from .encoding import allocation_to_line, decode_line, encode_line, request_from_fields
from .harness import COVERAGE_SLACK, admit_submission
from .model import RequestKind, TimeUnit, TimeWindow
from .planner import RequestRecord, build_report, report_to_lines
from .pricing import Invoice, PriceBook, invoice_to_pairs
from .scheduler import Admission, Scheduler
from .timeline import FreeList
from .workload import ScenarioConfig


class EngineService:
    """The live engine: one scheduler actor plus a deployer, behind a lock."""

    def __init__(self, scenario: ScenarioConfig, horizon_units: int = 672):
        self._lock = threading.RLock()
        self.scenario = scenario
        self.coverage = scenario.duration_units + COVERAGE_SLACK
        self.freelist = FreeList(list(scenario.mdc), self.coverage)
        self.records: list[RequestRecord] = []
        self.requests_by_id: dict[str, object] = {}
        self.invoices: dict[str, Invoice] = {}
        self.now: TimeUnit = 0

        def invoice_sink(alloc, invoice, outcome):
            self.invoices[alloc.request_id] = invoice
            req = self.requests_by_id[alloc.request_id]
            self.records.append(RequestRecord(req, outcome, None, alloc.quote,
                                              invoice.charged, self.now))

        book = PriceBook(scenario.base_rate, scenario.realtime_floor)
        self.scheduler = Scheduler(self.freelist, book, horizon_units,
                                   record_sink=self.records.append)
        fault_plan = (FaultPlan.load(scenario.fault_plan_path)
                      if scenario.fault_plan_path else FaultPlan.empty())
        self.deployer = DeployerSim(self.scheduler, fault_plan, invoice_sink)

    # --- clock ----------------------------------------------------------------

    def step(self) -> None:
        """Close the current unit: tick, deploy, sweep, recover, advance."""
        with self._lock:
            if self.now >= self.coverage:
                return
            plan = self.scheduler.tick(self.now)
            self.deployer.apply_plan(plan, self.now)
            for fault in self.deployer.ping_sweep(self.now):
                self.deployer.handle_failure(fault, self.now)
            self.now += 1

    # --- endpoints -------------------------------------------------------------

    def submit(self, body: str) -> list[str]:
        try:
            fields = decode_line(body.strip().splitlines()[0] if body.strip() else "")
            if fields.get("type") != "request":
                raise errors.EncodingError("body must be one request record line")
            req = request_from_fields(fields)
        except (errors.EncodingError, errors.EmptyWindow, ValueError) as exc:
            return [encode_line([("type", "error"), ("error", "malformed_payload"),
                                 ("detail", str(exc))])]
        with self._lock:
            now = self.now
            if req.kind is RequestKind.REAL_TIME:
                # real-time means "now, for this duration"; remote clients
                # cannot know the server unit, so the window is snapped
                req = replace(req, window=TimeWindow(
                    now, now + req.window.duration_units))
            req = replace(req, submitted_at=now)
            if req.id in self.requests_by_id:
                return [encode_line([("type", "error"), ("error", "duplicate_id"),
                                     ("detail", req.id)])]
            try:
                results = admit_submission(req, now, self.scheduler, self.records,
                                           self.requests_by_id, self.coverage)
            except errors.ValidationError as exc:
                return [encode_line([("type", "error"),
                                     ("error", type(exc).__name__),
                                     ("detail", str(exc))])]
            lines = []
            for res in results:
                if isinstance(res, Admission):
                    lines.append(encode_line([
                        ("type", "admitted"),
                        ("request_id", res.allocation.request_id),
                        ("allocation_id", res.allocation.id),
                        ("quote", str(res.quote)),
                        ("preemption_warning", "1" if res.preemption_warning else "0"),
                        ("start", str(res.allocation.window.start)),
                        ("end", str(res.allocation.window.end)),
                        ("now", str(now)),
                    ]))
                else:
                    lines.append(encode_line([
                        ("type", "rejected"),
                        ("request_id", req.id),
                        ("code", res.code),
                        ("detail", res.detail),
                        ("now", str(now)),
                    ]))
            return lines

    def allocation_status(self, allocation_id: str) -> str | None:
        with self._lock:
            alloc = self.scheduler.allocations.get(allocation_id)
            return None if alloc is None else allocation_to_line(alloc)

    def invoice_for(self, request_id: str) -> str | None:
        with self._lock:
            inv = self.invoices.get(request_id)
            return None if inv is None else encode_line(invoice_to_pairs(inv))

    def capacity_report(self, start: int, end: int, theta: float,
                        headroom: float) -> list[str]:
        with self._lock:
            report = build_report(list(self.records), TimeWindow(start, end),
                                  self.scenario.mdc[0], headroom)
            return report_to_lines(report)

    def health(self) -> str:
        with self._lock:
            return encode_line([
                ("type", "health"),
                ("now", str(self.now)),
                ("machines", str(len(self.freelist.machine_ids))),
            ])


class _Handler(BaseHTTPRequestHandler):
    service: EngineService  # set by start_service

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    def _send(self, status: int, lines: list[str]) -> None:
        payload = ("\n".join(lines) + "\n").encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "text/plain; charset=utf-8")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def do_GET(self):
        url = urlparse(self.path)
        qs = {k: v[0] for k, v in parse_qs(url.query).items()}
        try:
            if url.path == "/health":
                self._send(200, [self.service.health()])
            elif url.path == "/allocation-status":
                line = self.service.allocation_status(qs.get("id", ""))
                if line is None:
                    self._send(404, [encode_line([("type", "error"),
                                                  ("error", "not_found"),
                                                  ("detail", qs.get("id", ""))])])
                else:
                    self._send(200, [line])
            elif url.path == "/invoice":
                line = self.service.invoice_for(qs.get("request_id", ""))
                if line is None:
                    self._send(404, [encode_line([("type", "error"),
                                                  ("error", "not_found"),
                                                  ("detail", qs.get("request_id", ""))])])
                else:
                    self._send(200, [line])
            elif url.path == "/capacity-report":
                lines = self.service.capacity_report(
                    int(qs.get("from", "0")),
                    int(qs.get("to", str(self.service.coverage))),
                    float(qs.get("theta", "0.05")),
                    float(qs.get("headroom", "1.0")))
                self._send(200, lines)
            else:
                self._send(404, [encode_line([("type", "error"),
                                              ("error", "unknown_endpoint"),
                                              ("detail", url.path)])])
        except (errors.BeneError, ValueError) as exc:
            self._send(400, [encode_line([("type", "error"),
                                          ("error", type(exc).__name__),
                                          ("detail", str(exc))])])

    def do_POST(self):
        url = urlparse(self.path)
        if url.path != "/submit-request":
            self._send(404, [encode_line([("type", "error"),
                                          ("error", "unknown_endpoint"),
                                          ("detail", url.path)])])
            return
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length).decode("utf-8")
        lines = self.service.submit(body)
        status = 200 if not any(l.startswith("type=error") for l in lines) else 400
        self._send(status, lines)


class ServiceHandle:
    def __init__(self, service: EngineService, server: ThreadingHTTPServer,
                 ticker: threading.Thread, stop_event: threading.Event):
        self.service = service
        self.server = server
        self._ticker = ticker
        self._stop = stop_event

    @property
    def port(self) -> int:
        return self.server.server_address[1]

    def stop(self) -> None:
        self._stop.set()
        self.server.shutdown()
        self.server.server_close()
        self._ticker.join(timeout=5)


def start_service(scenario: ScenarioConfig, time_scale: float = 900.0,
                  port: int = 0, host: str = "127.0.0.1") -> ServiceHandle:
    """Spin up the HTTP front end plus the unit ticker; returns a handle."""
    service = EngineService(scenario)
    handler = type("BoundHandler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer((host, port), handler)
    stop_event = threading.Event()

    def _tick_loop():
        while not stop_event.wait(time_scale):
            service.step()

    ticker = threading.Thread(target=_tick_loop, name="bene-ticker", daemon=True)
    ticker.start()
    server_thread = threading.Thread(target=server.serve_forever,
                                     name="bene-http", daemon=True)
    server_thread.start()
    return ServiceHandle(service, server, ticker, stop_event)
