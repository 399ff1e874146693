import json
import logging
from datetime import datetime, timezone
from typing import Any, Optional

from pydantic import BaseModel, Field, ValidationError

from errors import ConfigError, DataIoError

TOOLKIT_VERSION = "1.0.0"
MANIFEST_SUFFIX = ".manifest.json"


class RunManifest(BaseModel):
    command: str = Field(..., description="Subcommand name")
    argv: list[str] = Field(..., description="Arguments after the program name, replayed by rerun")
    config: dict[str, Any] = Field(default_factory=dict, description="Resolved configuration")
    settings: Optional[dict[str, Any]] = Field(None, description="Resolved toolkit settings, reused by rerun")
    seed: Optional[int] = Field(None, description="RNG seed for stochastic commands")
    inputs: list[str] = Field(default_factory=list, description="Input paths")
    outputs: list[str] = Field(default_factory=list, description="Output paths")
    toolkit_version: str = Field(TOOLKIT_VERSION, description="refgrowth version")
    timestamp: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat(),
                           description="UTC time the run finished")


def manifestPathFor(primaryOutput: str) -> str:
    return f"{primaryOutput}{MANIFEST_SUFFIX}"


def writeManifest(manifest: RunManifest, primaryOutput: str) -> str:
    path = manifestPathFor(primaryOutput)
    with open(path, "w") as manifestFile:
        json.dump(manifest.model_dump(), manifestFile, indent=2, sort_keys=True, default=str)
    logging.info(f"Wrote run manifest to {path}.")
    return path


def loadManifest(path: str) -> RunManifest:
    try:
        with open(path, "r") as manifestFile:
            data = json.load(manifestFile)
    except FileNotFoundError as e:
        raise DataIoError(f"manifest not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not a valid manifest: {e.msg}") from e
    try:
        manifest = RunManifest.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{path} is not a valid manifest: {e.error_count()} problem(s)") from e
    if manifest.command == "rerun":
        raise ConfigError("a rerun manifest cannot be replayed")
    return manifest
