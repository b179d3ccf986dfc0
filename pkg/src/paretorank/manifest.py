"""Run manifests: enough provenance to rerun or audit any command.

Every CLI command writes one of these next to its outputs.  The manifest
records the exact command line, the fully resolved configuration, the seeds
in play, content fingerprints of inputs and outputs, and wall time, so two
runs can be compared file-by-file without trusting filenames.
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
import sys
import time
from dataclasses import dataclass, field

from .dataset_io import DATASET_SCHEMA


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Collects provenance while a command runs, then serializes once."""

    command: str
    argv: list[str]
    seed: int
    config_text: str
    started_unix: float = field(default_factory=time.time)
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    extra: dict[str, object] = field(default_factory=dict)

    def add_input(self, path: str) -> None:
        self.inputs[os.path.basename(path)] = file_sha256(path)

    def add_output(self, path: str) -> None:
        self.outputs[os.path.basename(path)] = file_sha256(path)

    def note(self, key: str, value: object) -> None:
        self.extra[key] = value

    def write(self, path: str) -> None:
        payload = {
            "schema": DATASET_SCHEMA,
            "command": self.command,
            "argv": self.argv,
            "seed": self.seed,
            "config": self.config_text,
            "python": platform.python_version(),
            "started_unix": round(self.started_unix, 3),
            "duration_seconds": round(time.time() - self.started_unix, 3),
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": dict(sorted(self.outputs.items())),
            "extra": self.extra,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=False)
            fh.write("\n")


def new_manifest(command: str, seed: int, config_text: str) -> RunManifest:
    return RunManifest(
        command=command, argv=list(sys.argv), seed=seed, config_text=config_text
    )
