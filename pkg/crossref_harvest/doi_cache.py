import hashlib
import json
import logging
import os
import tempfile
from typing import Optional


class DoiCache:
    """One JSON file per DOI, named by the SHA-256 of the normalized DOI.

    Responses live in <digest>.json. Failures that never produced a cacheable
    response (server or transport errors) live in <digest>.failure.json and are
    only read back by offline replays.
    """

    def __init__(self, cacheDir: str):
        self.cacheDir = cacheDir
        os.makedirs(cacheDir, exist_ok=True)
        logging.info(f"DoiCache initialized at {cacheDir}.")

    def pathFor(self, doi: str, suffix: str = ".json") -> str:
        digest = hashlib.sha256(doi.encode("utf-8")).hexdigest()
        return os.path.join(self.cacheDir, f"{digest}{suffix}")

    def failurePathFor(self, doi: str) -> str:
        return self.pathFor(doi, ".failure.json")

    def get(self, doi: str) -> Optional[dict]:
        return self.readEntry(self.pathFor(doi), doi)

    def getFailure(self, doi: str) -> Optional[dict]:
        return self.readEntry(self.failurePathFor(doi), doi)

    def put(self, doi: str, statusCode: int, text: str) -> None:
        self.writeEntry(self.pathFor(doi), {"doi": doi, "status_code": statusCode, "text": text})
        # a real response supersedes an earlier failure
        if os.path.exists(self.failurePathFor(doi)):
            os.remove(self.failurePathFor(doi))

    def putFailure(self, doi: str, reason: str, detail: str) -> None:
        self.writeEntry(self.failurePathFor(doi), {"doi": doi, "reason": reason, "detail": detail})

    def readEntry(self, path: str, doi: str) -> Optional[dict]:
        if not os.path.exists(path):
            return None
        try:
            with open(path, "r") as entryFile:
                entry = json.load(entryFile)
        except (OSError, json.JSONDecodeError) as e:
            logging.warning(f"Ignoring unreadable cache entry for {doi}: {e}")
            return None
        if entry.get("doi") != doi:
            logging.warning(f"Cache entry {path} belongs to {entry.get('doi')}, not {doi}.")
            return None
        return entry

    def writeEntry(self, path: str, entry: dict) -> None:
        # readers see either no entry or a complete one
        fd, tempPath = tempfile.mkstemp(dir=self.cacheDir, suffix=".tmp")
        try:
            with os.fdopen(fd, "w") as tempFile:
                json.dump(entry, tempFile)
            os.replace(tempPath, path)
        except OSError:
            if os.path.exists(tempPath):
                os.remove(tempPath)
            raise
