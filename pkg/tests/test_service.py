import urllib.error
import urllib.request

import pytest

from bene.encoding import decode_line, request_to_line
from bene.model import RequestKind, SMALL, TimeWindow
from bene.pricing import PriceBook, quote_realtime, quote_reserved
from bene.service import EngineService, start_service
from bene.workload import ScenarioConfig, offset_peaks_scenario, _machines
from conftest import make_request


def _scenario(machines=2):
    profile = offset_peaks_scenario(seed=1).profiles[0]
    return ScenarioConfig((profile,), 2, 1, _machines(machines))


@pytest.fixture
def service():
    return EngineService(_scenario())


def _submit(service, req):
    lines = service.submit(request_to_line(req))
    return [decode_line(l) for l in lines]


def test_submit_reserved_returns_exact_quote(service):
    (resp,) = _submit(service, make_request(count=2, start=8, end=16, rid="q1"))
    assert resp["type"] == "admitted"
    expected = quote_reserved(PriceBook(), 2, SMALL, TimeWindow(8, 16))
    assert int(resp["quote"]) == expected
    assert resp["preemption_warning"] == "0"


def test_submit_reserved_starting_now_is_rejected(service):
    (resp,) = _submit(service, make_request(start=0, end=4, rid="late"))
    assert resp["type"] == "rejected"
    assert resp["code"] == "lead_time_too_short"


def test_submit_realtime_snaps_to_now_with_warning(service):
    req = make_request(kind=RequestKind.REAL_TIME, start=77, end=81, rid="rt1")
    (resp,) = _submit(service, req)
    assert resp["type"] == "admitted"
    assert resp["preemption_warning"] == "1"
    assert (int(resp["start"]), int(resp["end"])) == (0, 4)  # snapped, length kept
    assert int(resp["quote"]) == quote_realtime(PriceBook(), 1, SMALL,
                                                TimeWindow(0, 4), 0)


def test_duplicate_request_id_rejected(service):
    _submit(service, make_request(start=8, end=12, rid="dup"))
    (resp,) = _submit(service, make_request(start=9, end=13, rid="dup"))
    assert resp["type"] == "error" and resp["error"] == "duplicate_id"


def test_allocation_status_and_invoice_lifecycle(service):
    (resp,) = _submit(service, make_request(start=2, end=4, rid="life"))
    aid = resp["allocation_id"]
    status = decode_line(service.allocation_status(aid))
    assert status["state"] == "planned"
    assert service.invoice_for("life") is None
    for _ in range(6):
        service.step()
    status = decode_line(service.allocation_status(aid))
    assert status["state"] == "stopped"
    invoice = decode_line(service.invoice_for("life"))
    assert int(invoice["charged"]) == int(resp["quote"])


def test_capacity_report_sees_submissions(service):
    _submit(service, make_request(count=3, start=4, end=10, rid="cap"))
    lines = service.capacity_report(0, 16, 0.05, 1.0)
    head = decode_line(lines[0])
    assert head["type"] == "capacity_report"
    assert int(head["cumulative_peak_cpu"]) == 3000


def test_malformed_payload(service):
    (resp,) = [decode_line(l) for l in service.submit("type=banana id=1")]
    assert resp["type"] == "error" and resp["error"] == "malformed_payload"


def _http(method, url, body=None):
    req = urllib.request.Request(url, data=body, method=method)
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            return resp.status, resp.read().decode()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read().decode()


def test_http_round_trip():
    handle = start_service(_scenario(), time_scale=3600, port=0)
    try:
        base = f"http://127.0.0.1:{handle.port}"
        status, body = _http("GET", f"{base}/health")
        assert status == 200
        assert decode_line(body)["now"] == "0"

        line = request_to_line(make_request(start=6, end=10, rid="wire"))
        status, body = _http("POST", f"{base}/submit-request", line.encode())
        assert status == 200
        resp = decode_line(body.splitlines()[0])
        assert resp["type"] == "admitted"

        status, body = _http("GET", f"{base}/allocation-status?id={resp['allocation_id']}")
        assert status == 200 and decode_line(body)["type"] == "allocation"

        status, body = _http("GET", f"{base}/invoice?request_id=missing")
        assert status == 404 and decode_line(body)["error"] == "not_found"

        status, body = _http("GET", f"{base}/capacity-report?from=0&to=16")
        assert status == 200 and "capacity_report" in body

        status, body = _http("POST", f"{base}/submit-request", b"nonsense")
        assert status == 400
    finally:
        handle.stop()
