"""Unified persistent-storage layer: a mount table over heterogeneous backends.

Paths in the unified namespace look like ``/prefix/rel/path``. A mount binds a
prefix to one backend; the backend sees only the relative part, so the object
path is preserved verbatim underneath the backend's own root.
"""

from __future__ import annotations

import os
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Mapping

from ._rwlock import RWLock
from .errors import (
    BackendWriteError,
    ConfigError,
    MissingObjectError,
    OverlappingMountError,
    UnmountedPathError,
)

BACKEND_KINDS = ("in-memory-mock", "local-directory", "delayed-mock")


def split_path(path: str) -> tuple[str, ...]:
    """Return the segments of a unified-namespace path, validating it.

    Leading and trailing slashes are ignored; empty segments, ``.`` and
    ``..`` are rejected.
    """
    if not isinstance(path, str):
        raise ValueError(f"object path must be a string, got {type(path).__name__}")
    stripped = path.strip("/")
    if not stripped:
        return ()
    parts = tuple(stripped.split("/"))
    for part in parts:
        if part in ("", ".", ".."):
            raise ValueError(f"invalid object path {path!r}")
    return parts


def normalize_path(path: str) -> str:
    return "/" + "/".join(split_path(path))


def join_path(prefix: str, rel: str) -> str:
    parts = split_path(prefix) + split_path(rel)
    return "/" + "/".join(parts)


@dataclass(frozen=True)
class BackendDescriptor:
    name: str
    kind: str
    parameters: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if not self.name:
            raise ConfigError("backend name must be non-empty")


@dataclass(frozen=True)
class Ack:
    path: str
    size: int
    modeled_latency_ms: float = 0.0


class InMemoryBackend:
    latency_ms = 0.0

    def __init__(self):
        self._objects: dict[str, bytes] = {}
        self._lock = threading.Lock()

    def write(self, rel: str, data: bytes) -> None:
        with self._lock:
            self._objects[rel] = bytes(data)

    def read(self, rel: str) -> bytes:
        with self._lock:
            try:
                return self._objects[rel]
            except KeyError:
                raise MissingObjectError(rel) from None

    def exists(self, rel: str) -> bool:
        with self._lock:
            return rel in self._objects

    def keys(self) -> list[str]:
        with self._lock:
            return list(self._objects)


class DelayedBackend(InMemoryBackend):
    """In-memory mock that charges a fixed modeled latency per operation.

    No real sleeping happens; the latency is reported on acknowledgments and
    feeds the tiered store's backend cost parameters.
    """

    def __init__(self, latency_ms: float = 200.0):
        super().__init__()
        if latency_ms < 0:
            raise ConfigError("latency_ms must be >= 0")
        self.latency_ms = float(latency_ms)


class LocalDirectoryBackend:
    """One file per object at ``root / rel``; bytes are written verbatim."""

    latency_ms = 0.0

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _file(self, rel: str) -> Path:
        return self.root.joinpath(*split_path(rel))

    def write(self, rel: str, data: bytes) -> None:
        target = self._file(rel)
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            # write-then-rename so concurrent readers never see a torn file
            fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=".tmp-")
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, target)
        except OSError as exc:
            raise BackendWriteError(f"cannot write {target}: {exc}") from exc

    def read(self, rel: str) -> bytes:
        try:
            return self._file(rel).read_bytes()
        except FileNotFoundError:
            raise MissingObjectError(rel) from None

    def exists(self, rel: str) -> bool:
        return self._file(rel).is_file()

    def keys(self) -> list[str]:
        out = []
        for p in self.root.rglob("*"):
            if p.is_file() and not p.name.startswith(".tmp-"):
                out.append(p.relative_to(self.root).as_posix())
        return out


def make_backend(descriptor: BackendDescriptor):
    params = dict(descriptor.parameters)
    if descriptor.kind == "in-memory-mock":
        return InMemoryBackend()
    if descriptor.kind == "delayed-mock":
        return DelayedBackend(params.get("latency_ms", 200.0))
    if "root" not in params:
        raise ConfigError("local-directory backend needs a 'root' parameter")
    return LocalDirectoryBackend(params["root"])


def _is_prefix(a: tuple[str, ...], b: tuple[str, ...]) -> bool:
    return len(a) <= len(b) and b[: len(a)] == a


class MountTable:
    """Prefix -> backend routing with transparent naming.

    Mounting takes the table's write lock, so it is exclusive with all I/O;
    persist/fetch share the read lock and rely on per-backend atomicity.
    """

    def __init__(self):
        self._mounts: dict[tuple[str, ...], tuple[BackendDescriptor, Any]] = {}
        self._lock = RWLock()

    def mount(self, prefix: str, descriptor: BackendDescriptor, backend=None) -> "MountTable":
        key = split_path(prefix)
        if not key:
            raise OverlappingMountError("cannot mount at the namespace root")
        with self._lock.write():
            for existing, (desc, _) in self._mounts.items():
                if desc.name == descriptor.name:
                    raise ConfigError(f"duplicate backend name {descriptor.name!r}")
                if _is_prefix(existing, key) or _is_prefix(key, existing):
                    raise OverlappingMountError(
                        f"overlapping prefix: {normalize_path(prefix)} vs /{'/'.join(existing)}"
                    )
            self._mounts[key] = (descriptor, backend if backend is not None else make_backend(descriptor))
        return self

    @property
    def entries(self) -> dict[str, BackendDescriptor]:
        with self._lock.read():
            return {"/" + "/".join(k): d for k, (d, _) in sorted(self._mounts.items())}

    def backend(self, name: str):
        with self._lock.read():
            for desc, be in self._mounts.values():
                if desc.name == name:
                    return be
        raise LookupError(name)

    def _lookup(self, path: str):
        parts = split_path(path)
        for key, (desc, be) in self._mounts.items():
            if _is_prefix(key, parts) and len(parts) > len(key):
                return key, desc, be, "/".join(parts[len(key):])
        raise UnmountedPathError(f"unmounted path {path!r}")

    def resolve(self, path: str) -> tuple[BackendDescriptor, str]:
        with self._lock.read():
            _, desc, _, rel = self._lookup(path)
        return desc, rel

    def persist(self, path: str, blob: bytes) -> Ack:
        with self._lock.read():
            _, _, be, rel = self._lookup(path)
            be.write(rel, blob)
        return Ack(normalize_path(path), len(blob), float(be.latency_ms))

    def fetch(self, path: str) -> bytes:
        with self._lock.read():
            _, _, be, rel = self._lookup(path)
            return be.read(rel)

    def exists(self, path: str) -> bool:
        with self._lock.read():
            try:
                _, _, be, rel = self._lookup(path)
            except UnmountedPathError:
                return False
            return be.exists(rel)

    def latency_ms(self, path: str) -> float:
        with self._lock.read():
            _, _, be, _ = self._lookup(path)
        return float(be.latency_ms)

    def list(self, prefix: str = "/") -> list[str]:
        want = split_path(prefix)
        out = []
        with self._lock.read():
            for key, (_, be) in self._mounts.items():
                if not (_is_prefix(want, key) or _is_prefix(key, want)):
                    continue
                for rel in be.keys():
                    full = key + split_path(rel)
                    if _is_prefix(want, full):
                        out.append("/" + "/".join(full))
        return sorted(out)

    def __iter__(self) -> Iterator[str]:
        return iter(self.list("/"))
