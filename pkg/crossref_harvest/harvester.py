import json
import logging
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional
from urllib.parse import quote

import requests
from pydantic import BaseModel, Field

from corpus import DEFAULT_FIELD, ArticleRecord
from errors import DataIoError, EndpointUnreachableError

from .doi_cache import DoiCache

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(message)s",
    handlers=[logging.StreamHandler()]
)

DATE_KEYS = ("published-print", "published-online", "published", "issued")
PAGE_SPAN = re.compile(r"^\s*(\d+)\s*[-–—]\s*(\d+)\s*$")
DOI_PREFIXES = ("https://doi.org/", "http://doi.org/", "https://dx.doi.org/", "http://dx.doi.org/",
                "doi.org/", "dx.doi.org/", "doi:")


class HarvestFailure(BaseModel):
    doi: str = Field(..., description="Normalized DOI")
    reason: str = Field(..., description="not-found, malformed-response, missing-reference-count, "
                                         "server-error, http-error, transport-error or not-cached")
    detail: str = Field("", description="Human-readable context")


class HarvestReport(BaseModel):
    requested: int = Field(0, description="Distinct DOIs after normalization")
    harvested: int = Field(0, description="Records produced")
    from_cache: int = Field(0, description="Responses served from the disk cache")
    failures: list[HarvestFailure] = Field(default_factory=list, description="Per-DOI failures")


class _DoiFailure(Exception):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(detail)
        self.reason = reason
        self.detail = detail


class RateLimiter:
    """Global requests-per-second limit shared by every worker thread."""

    def __init__(self, rate: float, sleep: Callable[[float], None] = time.sleep,
                 clock: Callable[[], float] = time.monotonic):
        self.interval = 1.0 / rate if rate > 0 else 0.0
        self.sleep = sleep
        self.clock = clock
        self.nextSlot = 0.0
        self.lock = threading.Lock()

    def wait(self) -> None:
        with self.lock:
            now = self.clock()
            slot = max(now, self.nextSlot)
            self.nextSlot = slot + self.interval
        if slot > now:
            self.sleep(slot - now)


def normalizeDoi(doi: str) -> str:
    doi = doi.strip()
    lowered = doi.lower()
    for prefix in DOI_PREFIXES:
        if lowered.startswith(prefix):
            doi = doi[len(prefix):]
            break
    return doi.strip().lower()


def readDoiFile(path: str) -> list:
    """(doi, field_label) pairs; one DOI per line with an optional ',field'."""
    try:
        with open(path, "r") as doiFile:
            lines = doiFile.read().splitlines()
    except FileNotFoundError as e:
        raise DataIoError(f"file not found: {path}") from e
    entries = []
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        doi, _, field = line.partition(",")
        entries.append((doi.strip(), field.strip() or DEFAULT_FIELD))
    return entries


def parsePageCount(page) -> Optional[int]:
    if not isinstance(page, str):
        return None
    match = PAGE_SPAN.match(page)
    if not match:
        return None
    first, last = int(match.group(1)), int(match.group(2))
    if last < first:
        return None
    return last - first + 1


def parseYear(message: dict) -> Optional[int]:
    for key in DATE_KEYS:
        try:
            year = message[key]["date-parts"][0][0]
        except (KeyError, IndexError, TypeError):
            continue
        if isinstance(year, int):
            return year
    return None


class CrossrefHarvester:
    def __init__(self, endpoint: str = "https://api.crossref.org/works", rate: float = 1.0,
                 cacheDir: Optional[str] = ".refgrowth_cache", concurrency: int = 4, maxRetries: int = 4,
                 backoffSeconds: float = 1.0, maxBackoffSeconds: float = 30.0, timeoutSeconds: float = 30.0,
                 userAgent: str = "refgrowth/1.0", offline: bool = False,
                 sleep: Callable[[float], None] = time.sleep):
        self.endpoint = endpoint.rstrip("/")
        self.concurrency = max(1, concurrency)
        self.maxRetries = maxRetries
        self.backoffSeconds = backoffSeconds
        self.maxBackoffSeconds = maxBackoffSeconds
        self.timeoutSeconds = timeoutSeconds
        self.userAgent = userAgent
        self.offline = offline
        self.sleep = sleep
        self.rateLimiter = RateLimiter(rate, sleep=sleep)
        self.cache = DoiCache(cacheDir) if cacheDir else None
        self.cacheHits = 0
        self.counterLock = threading.Lock()
        logging.info(f"CrossrefHarvester initialized for {self.endpoint} (offline={offline}).")

    def buildUrl(self, doi: str) -> str:
        return f"{self.endpoint}/{quote(doi, safe='')}"

    def requestWithRetry(self, doi: str) -> tuple:
        """GET one DOI, retrying 429, 5xx and connection errors with capped exponential backoff."""
        url = self.buildUrl(doi)
        headers = {"User-Agent": self.userAgent, "Accept": "application/json"}
        delay = self.backoffSeconds
        lastProblem = ""
        for attempt in range(self.maxRetries + 1):
            self.rateLimiter.wait()
            try:
                response = requests.get(url, headers=headers, timeout=self.timeoutSeconds)
            except (requests.exceptions.ConnectionError, requests.exceptions.Timeout) as e:
                lastProblem = f"connection error: {e}"
                logging.warning(f"Attempt {attempt + 1} for {doi} failed: {lastProblem}")
            except requests.exceptions.RequestException as e:
                raise _DoiFailure("transport-error", f"{type(e).__name__}: {e}")
            else:
                if response.status_code != 429 and response.status_code < 500:
                    return response.status_code, response.text
                lastProblem = f"status {response.status_code}"
                logging.warning(f"Attempt {attempt + 1} for {doi} got {lastProblem}")
                if attempt == self.maxRetries:
                    raise _DoiFailure("server-error", f"{lastProblem} after {attempt + 1} attempts")
                retryAfter = response.headers.get("Retry-After") if response.headers else None
                if retryAfter and str(retryAfter).isdigit():
                    delay = max(delay, min(float(retryAfter), self.maxBackoffSeconds))
            if attempt < self.maxRetries:
                self.sleep(delay)
                delay = min(delay * 2, self.maxBackoffSeconds)
        raise EndpointUnreachableError(
            f"{self.endpoint} unreachable after {self.maxRetries + 1} attempts: {lastProblem}"
        )

    def fetch(self, doi: str) -> tuple:
        if self.cache is not None:
            entry = self.cache.get(doi)
            if entry is not None:
                with self.counterLock:
                    self.cacheHits += 1
                return entry["status_code"], entry["text"]
        if self.offline:
            recorded = self.cache.getFailure(doi) if self.cache is not None else None
            if recorded is not None:
                raise _DoiFailure(recorded["reason"], recorded["detail"])
            raise _DoiFailure("not-cached", "offline mode and no cached response")
        try:
            statusCode, text = self.requestWithRetry(doi)
        except _DoiFailure as failure:
            if self.cache is not None:
                self.cache.putFailure(doi, failure.reason, failure.detail)
            raise
        if self.cache is not None:
            self.cache.put(doi, statusCode, text)
        return statusCode, text

    def parseRecord(self, doi: str, field: str, statusCode: int, text: str) -> ArticleRecord:
        if statusCode == 404:
            raise _DoiFailure("not-found", "endpoint returned 404")
        if statusCode != 200:
            raise _DoiFailure("http-error", f"endpoint returned {statusCode}")
        try:
            payload = json.loads(text)
        except (json.JSONDecodeError, TypeError) as e:
            raise _DoiFailure("malformed-response", f"body is not JSON: {e}")
        message = payload.get("message") if isinstance(payload, dict) else None
        if not isinstance(message, dict):
            raise _DoiFailure("malformed-response", "no 'message' object in response")
        referenceCount = message.get("reference-count", message.get("references-count"))
        if not isinstance(referenceCount, int) or isinstance(referenceCount, bool) or referenceCount < 0:
            raise _DoiFailure("missing-reference-count", f"reference-count is {referenceCount!r}")
        year = parseYear(message)
        if year is None:
            raise _DoiFailure("malformed-response", "no publication year in date fields")
        return ArticleRecord(id=doi, year=year, field_label=field, n_references=referenceCount,
                             n_pages=parsePageCount(message.get("page")))

    def harvestOne(self, doi: str, field: str):
        try:
            statusCode, text = self.fetch(doi)
            return self.parseRecord(doi, field, statusCode, text)
        except _DoiFailure as failure:
            logging.warning(f"DOI {doi} failed: {failure.reason} {failure.detail}")
            return HarvestFailure(doi=doi, reason=failure.reason, detail=failure.detail)

    def harvest(self, dois: list) -> tuple:
        """Records and a HarvestReport for DOIs given as strings or (doi, field) pairs.

        DOIs are normalized and deduplicated; output keeps first-seen order.
        """
        entries, seen = [], set()
        for item in dois:
            doi, field = (item, DEFAULT_FIELD) if isinstance(item, str) else item
            doi = normalizeDoi(doi)
            if doi and doi not in seen:
                seen.add(doi)
                entries.append((doi, field))
        report = HarvestReport(requested=len(entries))
        if not entries:
            return [], report
        self.cacheHits = 0
        logging.info(f"Harvesting {len(entries)} DOIs with {self.concurrency} worker(s).")
        executor = ThreadPoolExecutor(max_workers=self.concurrency)
        try:
            futures = [executor.submit(self.harvestOne, doi, field) for doi, field in entries]
            results = [future.result() for future in futures]
        finally:
            executor.shutdown(wait=True, cancel_futures=True)
        records = [r for r in results if isinstance(r, ArticleRecord)]
        report.failures = [r for r in results if isinstance(r, HarvestFailure)]
        report.harvested = len(records)
        report.from_cache = self.cacheHits
        logging.info(f"Harvested {report.harvested} of {report.requested} DOIs "
                     f"({report.from_cache} from cache, {len(report.failures)} failed).")
        return records, report

    def writeFailures(self, report: HarvestReport, path: str) -> None:
        """Failure sidecar without from_cache, which differs between a run and its offline replay."""
        with open(path, "w") as failuresFile:
            json.dump(report.model_dump(exclude={"from_cache"}), failuresFile, indent=2)
        logging.info(f"Wrote harvest report to {path}.")
