"""Turn a video stream into a stored blob plus an indexed session record.

The object detector is a seam: ``synthetic-hash`` derives labels from a
content hash of each frame (deterministic everywhere), ``external-endpoint``
forwards frame bytes to a callable or an HTTP URL that answers with a JSON
list of labels.
"""

from __future__ import annotations

import bisect
import hashlib
import json
import math
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .backend import join_path
from .errors import ConfigError, DuplicateRecordError, ExtractorUnavailableError
from .metastore import MetaStore, SessionRecord
from .tiered import Block, TieredStore

DEFAULT_VOCABULARY = (
    "bed", "bicycle", "book", "bottle", "bowl", "box", "cabinet", "cake", "car", "carpet",
    "cat", "chair", "clock", "couch", "cup", "curtain", "desk", "dog", "door", "fan",
    "fork", "fridge", "glass", "guitar", "hat", "keyboard", "knife", "lamp", "laptop", "microwave",
    "mirror", "monitor", "oven", "person", "phone", "picture", "pillow", "plant", "remote", "shelf",
    "shoe", "sink", "sofa", "spoon", "stairs", "table", "toilet", "toy", "tv", "window",
)

LOCATIONS = ("living room", "bedroom", "kitchen", "bathroom", "hallway")


@dataclass(frozen=True)
class VideoStream:
    session_id: str
    user_id: str
    start_timestamp: float
    duration: float
    location: str
    frames: tuple[tuple[float, bytes], ...] = ()
    # accounting size of the raw video; defaults to the concatenated frame bytes
    nominal_size: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple((float(o), bytes(b)) for o, b in self.frames))
        if self.duration < 0:
            raise ValueError("duration must be >= 0")
        last = -math.inf
        for offset, _ in self.frames:
            if offset <= last:
                raise ValueError("frame offsets must be strictly increasing")
            if not 0 <= offset <= self.duration:
                raise ValueError(f"frame offset {offset} outside [0, {self.duration}]")
            last = offset

    @property
    def payload(self) -> bytes:
        return b"".join(b for _, b in self.frames)


@dataclass(frozen=True)
class FramePolicy:
    interval: float = 2.0

    def __post_init__(self):
        if not self.interval > 0:
            raise ConfigError("frame interval must be > 0")


@dataclass(frozen=True)
class ExtractorConfig:
    kind: str = "synthetic-hash"
    vocabulary: tuple[str, ...] = DEFAULT_VOCABULARY
    labels_per_frame: int = 2
    endpoint: Callable[[bytes], Sequence[str]] | str | None = None
    timeout: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))
        if self.kind not in ("synthetic-hash", "external-endpoint"):
            raise ConfigError(f"unknown extractor kind {self.kind!r}")
        if not self.vocabulary:
            raise ConfigError("vocabulary must be non-empty")
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise ConfigError("vocabulary must not contain duplicates")
        if self.labels_per_frame < 1:
            raise ConfigError("labels_per_frame must be >= 1")
        if self.kind == "external-endpoint" and self.endpoint is None:
            raise ConfigError("external-endpoint extractor needs an endpoint")


@dataclass(frozen=True)
class Skipped:
    stage: str
    probability: float | None = None
    reason: str = ""


def schedule_frames(stream: VideoStream, policy: FramePolicy = FramePolicy()) -> list[tuple[float, bytes]]:
    """Pick the earliest frame at or after each grid point 0, interval, ... <= duration."""
    if not stream.frames:
        return []
    eps = 1e-9 * max(1.0, policy.interval)
    offsets = [o for o, _ in stream.frames]
    steps = math.floor(stream.duration / policy.interval + 1e-9)
    chosen: list[int] = []
    for i in range(steps + 1):
        j = bisect.bisect_left(offsets, i * policy.interval - eps)
        if j == len(offsets):
            break
        if not chosen or chosen[-1] != j:
            chosen.append(j)
    return [stream.frames[j] for j in chosen]


def _hash_labels(frame: bytes, vocabulary: tuple[str, ...], k: int) -> set[str]:
    out = set()
    for j in range(k):
        digest = hashlib.sha256(j.to_bytes(4, "big") + frame).digest()
        out.add(vocabulary[int.from_bytes(digest[:8], "big") % len(vocabulary)])
    return out


def _call_endpoint(frame: bytes, config: ExtractorConfig) -> Sequence[str]:
    if callable(config.endpoint):
        try:
            return config.endpoint(frame)
        except (ConnectionError, TimeoutError, OSError) as exc:
            raise ExtractorUnavailableError(str(exc)) from exc
    req = urllib.request.Request(config.endpoint, data=frame,
                                 headers={"Content-Type": "application/octet-stream"})
    try:
        with urllib.request.urlopen(req, timeout=config.timeout) as resp:
            return json.loads(resp.read().decode("utf-8"))
    except (urllib.error.URLError, OSError, ValueError) as exc:
        raise ExtractorUnavailableError(f"{config.endpoint}: {exc}") from exc


def extract_labels(frame: bytes, config: ExtractorConfig = ExtractorConfig()) -> set[str]:
    if config.kind == "synthetic-hash":
        return _hash_labels(frame, config.vocabulary, config.labels_per_frame)
    vocab = set(config.vocabulary)
    return {label for label in _call_endpoint(frame, config) if label in vocab}


def _ts_token(ts: float) -> str:
    return str(int(ts)) if float(ts).is_integer() else repr(float(ts))


def object_path(user_id: str, session_id: str, timestamp: float, prefix: str = "/videos") -> str:
    return join_path(prefix, f"{user_id}/{session_id}/{_ts_token(timestamp)}.bin")


def object_path_for(stream: VideoStream, prefix: str = "/videos") -> str:
    return object_path(stream.user_id, stream.session_id, stream.start_timestamp, prefix)


def process_stream(stream: VideoStream, policy: FramePolicy, extractor: ExtractorConfig,
                   store: TieredStore, metastore: MetaStore, sampler=None,
                   memorization_sampler=None, prefix: str = "/videos",
                   on_extractor_error: str = "abort") -> SessionRecord | Skipped:
    """Learn labels from ``stream``, store its payload, index its record.

    ``sampler`` (pre-learning) sees ``{"timestamp", "location"}`` and
    ``memorization_sampler`` sees the assembled record; each returns
    ``(include, probability)``. The record is inserted only after the blob
    write succeeded.
    """
    if on_extractor_error not in ("abort", "skip"):
        raise ConfigError("on_extractor_error must be 'abort' or 'skip'")
    key = (stream.session_id, stream.start_timestamp)
    if key in metastore:
        raise DuplicateRecordError(f"record {key} already stored")

    if sampler is not None:
        include, p = sampler({"timestamp": stream.start_timestamp, "location": stream.location})
        if not include:
            return Skipped("pre-learning", p)

    labels: set[str] = set()
    for _, frame in schedule_frames(stream, policy):
        try:
            labels |= extract_labels(frame, extractor)
        except ExtractorUnavailableError:
            if on_extractor_error == "abort":
                raise

    path = object_path_for(stream, prefix)
    record = SessionRecord(stream.session_id, stream.user_id, stream.start_timestamp,
                           stream.duration, stream.location, frozenset(labels), path)
    if memorization_sampler is not None:
        include, p = memorization_sampler(record)
        if not include:
            return Skipped("pre-memorization", p)

    payload = stream.payload
    size = stream.nominal_size or max(len(payload), 1)
    store.write_block(Block(path, size, path), payload)
    metastore.put_record(record)
    return record


def synthetic_stream(session_id: str, user_id: str, start: float, duration: float, location: str,
                     seed: int, fps: float = 1.0, frame_bytes: int = 32,
                     nominal_size: int | None = None) -> VideoStream:
    """Seeded stream with ``fps`` frames per second of random bytes."""
    rng = np.random.default_rng(seed)
    n = int(math.floor(duration * fps + 1e-9)) + 1
    frames = [(i / fps, rng.bytes(frame_bytes)) for i in range(n)]
    return VideoStream(session_id, user_id, start, duration, location, tuple(frames), nominal_size)


def load_stream(path: str | Path) -> VideoStream:
    """Read a stream file: a JSON Lines header, then one line per frame.

    Header: ``{"session_id", "user_id", "start_timestamp", "duration",
    "location"}`` (optional ``"nominal_size"``). Frame lines:
    ``{"offset": seconds, "file": "relative/path"}``, resolved against the
    stream file's directory.
    """
    path = Path(path)
    lines = [json.loads(s) for s in path.read_text().splitlines() if s.strip()]
    if not lines:
        raise ValueError(f"{path}: empty stream file")
    head = lines[0]
    frames = tuple((float(f["offset"]), (path.parent / f["file"]).read_bytes()) for f in lines[1:])
    return VideoStream(str(head["session_id"]), str(head["user_id"]), head["start_timestamp"],
                       head["duration"], head["location"], frames, head.get("nominal_size"))
