"""Run directories with reproducibility manifests."""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

TOOL_VERSION = "0.1.0"


def config_digest(config: dict) -> str:
    """Stable digest of a resolved configuration document."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: dict
    artifacts: dict = field(default_factory=dict)
    started: float = field(default_factory=time.time)

    def record(self, name: str, path) -> None:
        self.artifacts[name] = {"path": str(path), "sha256_16": file_digest(path)}

    def write(self, run_dir) -> Path:
        doc = {
            "command": self.command,
            "config_digest": config_digest(self.config),
            "config": self.config,
            "seeds": self.seeds,
            "artifacts": self.artifacts,
            "tool_version": TOOL_VERSION,
            "started_unix": self.started,
            "finished_unix": time.time(),
        }
        path = Path(run_dir) / "manifest.json"
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
        return path


def run_root() -> Path:
    return Path(os.environ.get("SERVOTUNE_RUN_ROOT", "runs"))


def make_run_dir(command: str) -> Path:
    root = run_root()
    root.mkdir(parents=True, exist_ok=True)
    base = time.strftime("%Y%m%d-%H%M%S") + "-" + command
    path = root / base
    i = 1
    while path.exists():
        path = root / f"{base}-{i}"
        i += 1
    path.mkdir()
    return path
