"""Run manifests: what went into a CLI invocation and what it wrote."""
from __future__ import annotations

import hashlib
import json
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

MANIFEST_NAME = "manifest.json"
LOCK_NAME = ".gasfm.lock"
MANIFEST_SCHEMA = "gasfm.manifest/1"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


class LockError(RuntimeError):
    pass


@contextmanager
def directory_lock(out_dir):
    """Exclusive ownership of ``out_dir`` for the duration of one invocation."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise LockError(f"{out_dir} is locked by another invocation (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield out_dir
    finally:
        lock.unlink(missing_ok=True)


@dataclass
class RunManifest:
    command: str
    out_dir: Path
    config: dict
    seed: int | None
    inputs: dict[str, str] = field(default_factory=dict)  # role -> sha256
    artifacts: dict[str, str] = field(default_factory=dict)  # path relative to out_dir -> sha256
    timings: dict[str, float] = field(default_factory=dict)
    version: str = field(default_factory=code_version)

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = round(time.perf_counter() - t0, 3)

    def add_input(self, role: str, path) -> str:
        digest = sha256_file(path)
        self.inputs[role] = digest
        return digest

    def add_artifact(self, path) -> str:
        path = Path(path)
        rel = path.resolve().relative_to(Path(self.out_dir).resolve()).as_posix()
        self.artifacts[rel] = sha256_file(path)
        return rel

    def to_dict(self) -> dict:
        return {
            "schema": MANIFEST_SCHEMA,
            "command": self.command,
            "code_version": self.version,
            "seed": self.seed,
            "config": self.config,
            "inputs": dict(sorted(self.inputs.items())),
            "artifacts": dict(sorted(self.artifacts.items())),
            "timings": self.timings,
        }

    def write(self) -> Path:
        path = Path(self.out_dir) / MANIFEST_NAME
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


def read_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    data = json.loads(path.read_text())
    if data.get("schema") != MANIFEST_SCHEMA:
        raise ValueError(f"{path}: not a run manifest")
    data["_dir"] = path.parent
    return data


def verify_artifacts(manifest: dict) -> list[str]:
    """Problems with a manifest's artifacts (missing files or hash mismatches)."""
    problems = []
    for rel, digest in manifest["artifacts"].items():
        p = Path(manifest["_dir"]) / rel
        if not p.is_file():
            problems.append(f"missing artifact {rel}")
        elif sha256_file(p) != digest:
            problems.append(f"hash mismatch for {rel}")
    return problems


def find_orphans(root) -> list[Path]:
    """Files under ``root`` not listed by any manifest found under ``root``."""
    root = Path(root)
    claimed = set()
    for mpath in root.rglob(MANIFEST_NAME):
        claimed.add(mpath.resolve())
        m = read_manifest(mpath)
        claimed.update((mpath.parent / rel).resolve() for rel in m["artifacts"])
    return sorted(p for p in root.rglob("*") if p.is_file() and p.resolve() not in claimed and p.name != LOCK_NAME)
