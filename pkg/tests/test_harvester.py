import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
import pytest
import requests
from unittest.mock import patch, MagicMock
from crossref_harvest import CrossrefHarvester, DoiCache
from crossref_harvest.harvester import RateLimiter, normalizeDoi, parsePageCount, parseYear, readDoiFile
from errors import EndpointUnreachableError

def mockResponse(jsonData=None, statusCode=200, headers=None):
    mock = MagicMock()
    mock.status_code = statusCode
    mock.text = json.dumps(jsonData) if jsonData is not None else ""
    mock.headers = headers or {}
    return mock

def work(referenceCount=12, page="100-109", year=2005):
    message = {"published-print": {"date-parts": [[year, 3]]}}
    if referenceCount is not None:
        message["reference-count"] = referenceCount
    if page is not None:
        message["page"] = page
    return {"status": "ok", "message": message}

def makeHarvester(tmp_path, **overrides):
    settings = dict(endpoint="http://api.test/works", rate=1000, cacheDir=str(tmp_path / "cache"), concurrency=2,
                    maxRetries=2, backoffSeconds=0.01, sleep=lambda seconds: None)
    settings.update(overrides)
    return CrossrefHarvester(**settings)

def testInitLogs(tmp_path):
    with patch('logging.info') as log:
        makeHarvester(tmp_path)
        log.assert_called()

def testNormalizeDoi():
    assert normalizeDoi(" https://doi.org/10.1000/ABC ") == "10.1000/abc"
    assert normalizeDoi("doi:10.1000/x") == "10.1000/x"

def testParsePageCount():
    assert parsePageCount("100-109") == 10
    assert parsePageCount("e1234") is None
    assert parsePageCount(None) is None
    assert parsePageCount("20-10") is None

def testParseYearFallsBack():
    assert parseYear({"issued": {"date-parts": [[1999]]}}) == 1999
    assert parseYear({"published-print": {"date-parts": [[None]]}, "published-online": {"date-parts": [[2001]]}}) == 2001
    assert parseYear({}) is None

def testReadDoiFile(tmp_path):
    path = tmp_path / "dois.txt"
    path.write_text("# header\n10.1/a,econ\n\n10.1/b\n")
    assert readDoiFile(str(path)) == [("10.1/a", "econ"), ("10.1/b", "all")]

def testEmptyDoiList(tmp_path):
    records, report = makeHarvester(tmp_path).harvest([])
    assert records == []
    assert report.requested == 0

def testHarvestRecord(monkeypatch, tmp_path):
    monkeypatch.setattr('requests.get', lambda *a, **k: mockResponse(work(), 200))
    records, report = makeHarvester(tmp_path).harvest([("10.1/A", "econ")])
    assert records[0].id == "10.1/a"
    assert records[0].year == 2005
    assert records[0].n_references == 12
    assert records[0].n_pages == 10
    assert records[0].field_label == "econ"
    assert report.harvested == 1

def testMissingPagesKeepsReferences(monkeypatch, tmp_path):
    monkeypatch.setattr('requests.get', lambda *a, **k: mockResponse(work(page=None), 200))
    records, _ = makeHarvester(tmp_path).harvest(["10.1/a"])
    assert records[0].n_pages is None
    assert records[0].n_references == 12

def testFailureReasons(monkeypatch, tmp_path):
    responses = {
        "10.1%2Fmissing": mockResponse({"status": "error"}, 404),
        "10.1%2Fnocount": mockResponse(work(referenceCount=None), 200),
        "10.1%2Fgarbled": mockResponse(None, 200),
    }
    monkeypatch.setattr('requests.get', lambda url, *a, **k: responses[url.rsplit("/", 1)[1]])
    records, report = makeHarvester(tmp_path).harvest(["10.1/missing", "10.1/nocount", "10.1/garbled"])
    assert records == []
    assert {f.doi: f.reason for f in report.failures} == {
        "10.1/missing": "not-found", "10.1/nocount": "missing-reference-count", "10.1/garbled": "malformed-response"}

def testDuplicatesFetchedOnce(monkeypatch, tmp_path):
    calls = []
    def fakeGet(url, *a, **k):
        calls.append(url)
        return mockResponse(work(), 200)
    monkeypatch.setattr('requests.get', fakeGet)
    records, report = makeHarvester(tmp_path, cacheDir=None).harvest(["10.1/a", "https://doi.org/10.1/A"])
    assert len(records) == 1
    assert report.requested == 1
    assert len(calls) == 1

def testCacheReplayOffline(monkeypatch, tmp_path):
    monkeypatch.setattr('requests.get', lambda *a, **k: mockResponse(work(referenceCount=31), 200))
    makeHarvester(tmp_path).harvest(["10.1/a"])
    def noNetwork(*a, **k):
        raise AssertionError("network used in offline mode")
    monkeypatch.setattr('requests.get', noNetwork)
    records, report = makeHarvester(tmp_path, offline=True).harvest(["10.1/a", "10.1/b"])
    assert records[0].n_references == 31
    assert report.from_cache == 1
    assert [(f.doi, f.reason) for f in report.failures] == [("10.1/b", "not-cached")]

def testRetriesServerErrors(monkeypatch, tmp_path):
    replies = [mockResponse(None, 503), mockResponse(None, 429, {"Retry-After": "1"}), mockResponse(work(), 200)]
    monkeypatch.setattr('requests.get', lambda *a, **k: replies.pop(0))
    sleeps = []
    harvester = makeHarvester(tmp_path, sleep=sleeps.append, maxBackoffSeconds=0.5)
    records, _ = harvester.harvest(["10.1/a"])
    assert records[0].n_references == 12
    assert len([s for s in sleeps if s >= 0.01]) == 2

def testPersistentServerErrorIsPerDoiFailure(monkeypatch, tmp_path):
    monkeypatch.setattr('requests.get', lambda *a, **k: mockResponse(None, 500))
    records, report = makeHarvester(tmp_path).harvest(["10.1/a"])
    assert records == []
    assert report.failures[0].reason == "server-error"

def testUnreachableEndpoint(monkeypatch, tmp_path):
    def refuse(*a, **k):
        raise requests.exceptions.ConnectionError("connection refused")
    monkeypatch.setattr('requests.get', refuse)
    with pytest.raises(EndpointUnreachableError):
        makeHarvester(tmp_path).harvest(["10.1/a", "10.1/b"])

def testDoiCacheRejectsForeignEntry(tmp_path):
    cache = DoiCache(str(tmp_path))
    cache.put("10.1/a", 200, "{}")
    assert cache.get("10.1/a")["status_code"] == 200
    with open(cache.pathFor("10.1/b"), "w") as entryFile:
        json.dump({"doi": "10.1/a", "status_code": 200, "text": "{}"}, entryFile)
    assert cache.get("10.1/b") is None

class StubHandler(BaseHTTPRequestHandler):
    def do_GET(self):
        body = json.dumps(work(referenceCount=42)).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass

def testLocalStubServer(tmp_path):
    server = HTTPServer(("127.0.0.1", 0), StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        endpoint = f"http://127.0.0.1:{server.server_address[1]}/works"
        records, _ = makeHarvester(tmp_path, endpoint=endpoint).harvest(["10.5555/stub"])
    finally:
        server.shutdown()
        server.server_close()
    assert records[0].n_references == 42

def testWriteFailures(monkeypatch, tmp_path):
    monkeypatch.setattr('requests.get', lambda *a, **k: mockResponse({"status": "error"}, 404))
    harvester = makeHarvester(tmp_path)
    _, report = harvester.harvest(["10.1/a"])
    path = tmp_path / "failures.json"
    harvester.writeFailures(report, str(path))
    assert json.loads(path.read_text())["failures"][0]["reason"] == "not-found"

def testTransportErrorIsPerDoiFailure(monkeypatch, tmp_path):
    def fakeGet(url, *a, **k):
        if url.endswith("10.1%2Fbad"):
            raise requests.exceptions.ChunkedEncodingError("connection broken mid-body")
        return mockResponse(work(), 200)
    monkeypatch.setattr('requests.get', fakeGet)
    records, report = makeHarvester(tmp_path).harvest(["10.1/good", "10.1/bad"])
    assert [r.id for r in records] == ["10.1/good"]
    assert [(f.doi, f.reason) for f in report.failures] == [("10.1/bad", "transport-error")]

def testOfflineReplayRepeatsRecordedFailures(monkeypatch, tmp_path):
    monkeypatch.setattr('requests.get', lambda *a, **k: mockResponse(None, 503))
    _, online = makeHarvester(tmp_path).harvest(["10.1/a"])
    monkeypatch.setattr('requests.get', lambda *a, **k: pytest.fail("network used in offline mode"))
    _, offline = makeHarvester(tmp_path, offline=True).harvest(["10.1/a"])
    assert offline.failures == online.failures
    assert offline.failures[0].reason == "server-error"

def testRecordedFailureDoesNotBlockOnlineRetry(monkeypatch, tmp_path):
    monkeypatch.setattr('requests.get', lambda *a, **k: mockResponse(None, 500))
    makeHarvester(tmp_path).harvest(["10.1/a"])
    monkeypatch.setattr('requests.get', lambda *a, **k: mockResponse(work(), 200))
    records, _ = makeHarvester(tmp_path).harvest(["10.1/a"])
    assert records[0].n_references == 12
    assert not os.path.exists(DoiCache(str(tmp_path / "cache")).failurePathFor("10.1/a"))

def testFailuresFileOmitsCacheCounter(monkeypatch, tmp_path):
    monkeypatch.setattr('requests.get', lambda *a, **k: mockResponse(work(), 200))
    harvester = makeHarvester(tmp_path)
    _, report = harvester.harvest(["10.1/a"])
    path = tmp_path / "failures.json"
    harvester.writeFailures(report, str(path))
    assert "from_cache" not in json.loads(path.read_text())

def testRateLimiterSpacesRequests():
    sleeps = []
    limiter = RateLimiter(rate=2, sleep=sleeps.append, clock=lambda: 100.0)
    threads = [threading.Thread(target=limiter.wait) for _ in range(6)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    assert sorted(sleeps) == pytest.approx([0.5, 1.0, 1.5, 2.0, 2.5])

def testRateLimiterWithAdvancingClock():
    now = [0.0]
    granted = []
    def sleep(seconds):
        now[0] += seconds
    limiter = RateLimiter(rate=2, sleep=sleep, clock=lambda: now[0])
    for _ in range(4):
        limiter.wait()
        granted.append(now[0])
    assert granted == pytest.approx([0.0, 0.5, 1.0, 1.5])
