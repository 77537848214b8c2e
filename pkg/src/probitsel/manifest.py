"""Run manifests: what was run, on which inputs, producing which files.

The manifest digest covers the command, its resolved arguments, the
seed, the input digests and the package version, but not timestamps or
timings, so reruns of the same configuration share a digest and their
numeric outputs compare byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone

MANIFEST_FORMAT = "probitsel.manifest"
MANIFEST_VERSION = 1


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _canonical(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


@dataclass
class RunManifest:
    command: str
    args: dict
    seed: int | None
    version: str
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    started_at: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat()
    )
    finished_at: str | None = None
    wall_time_s: float | None = None

    def add_input(self, path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path) -> None:
        self.outputs.append(str(path))

    @property
    def digest(self) -> str:
        stable = {
            "command": self.command,
            "args": self.args,
            "seed": self.seed,
            "inputs": self.inputs,
            "version": self.version,
        }
        return hashlib.sha256(_canonical(stable).encode()).hexdigest()

    def finish(self, wall_time_s: float) -> None:
        self.finished_at = datetime.now(timezone.utc).isoformat()
        self.wall_time_s = wall_time_s

    def to_dict(self) -> dict:
        return {
            "format": MANIFEST_FORMAT,
            "version": MANIFEST_VERSION,
            "digest": self.digest,
            "command": self.command,
            "args": self.args,
            "seed": self.seed,
            "package_version": self.version,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "wall_time_s": self.wall_time_s,
        }

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")
