import hashlib
import json
import threading
from collections import Counter
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robocloud.backend import BackendDescriptor, MountTable
from robocloud.errors import ConfigError, DuplicateRecordError, ExtractorUnavailableError
from robocloud.learning import (
    DEFAULT_VOCABULARY,
    ExtractorConfig,
    FramePolicy,
    Skipped,
    VideoStream,
    extract_labels,
    load_stream,
    object_path_for,
    process_stream,
    schedule_frames,
    synthetic_stream,
)
from robocloud.metastore import MetaStore
from robocloud.reduction import InclusionPolicy, PreLearningSampler
from robocloud.tiered import TieredStore, default_tiers


def stream(duration, step, start=1000.0):
    n = int(duration / step) + 1
    frames = [(i * step, f"frame-{i}".encode()) for i in range(n)]
    return VideoStream("s1", "u1", start, duration, "kitchen", frames)


def oracle_labels(frame, vocabulary, k):
    """Hash-index rule written out independently: sha256(j as 4-byte BE || frame)[:8] mod V."""
    out = set()
    for j in range(k):
        h = hashlib.new("sha256")
        h.update(bytes([(j >> 24) & 255, (j >> 16) & 255, (j >> 8) & 255, j & 255]))
        h.update(frame)
        out.add(vocabulary[int(h.hexdigest()[:16], 16) % len(vocabulary)])
    return out


def new_store():
    mounts = MountTable().mount("/videos", BackendDescriptor("v", "in-memory-mock"))
    return TieredStore(default_tiers(), "DirectWrite", backend=mounts)


class TestSchedule:
    def test_ten_seconds_half_second_frames(self):
        picked = schedule_frames(stream(10, 0.5), FramePolicy(2.0))
        assert [o for o, _ in picked] == [0, 2, 4, 6, 8, 10]

    def test_zero_duration(self):
        s = VideoStream("s", "u", 0, 0, "kitchen", [(0.0, b"x")])
        assert len(schedule_frames(s)) == 1

    def test_interval_longer_than_duration(self):
        assert [o for o, _ in schedule_frames(stream(3, 1), FramePolicy(10))] == [0]

    def test_empty(self):
        assert schedule_frames(VideoStream("s", "u", 0, 5, "kitchen")) == []

    def test_gaps_pick_next_frame_once(self):
        s = VideoStream("s", "u", 0, 9, "kitchen", [(0.5, b"a"), (5.0, b"b"), (9.0, b"c")])
        assert [o for o, _ in schedule_frames(s, FramePolicy(2))] == [0.5, 5.0, 9.0]

    @settings(max_examples=100)
    @given(st.lists(st.floats(0, 50, allow_nan=False), min_size=1, max_size=40, unique=True),
           st.floats(0.1, 20))
    def test_grid_rule(self, offsets, interval):
        offsets = sorted(offsets)
        s = VideoStream("s", "u", 0, 50, "kitchen", [(o, b"") for o in offsets])
        got = [o for o, _ in schedule_frames(s, FramePolicy(interval))]
        assert got == sorted(set(got)) and got
        for o in got:
            assert o in offsets

    def test_bad_policy(self):
        with pytest.raises(ConfigError):
            FramePolicy(0)


class TestExtract:
    def test_deterministic(self):
        assert extract_labels(b"same") == extract_labels(b"same")

    def test_single_label_vocabulary(self):
        cfg = ExtractorConfig(vocabulary=("dog",), labels_per_frame=3)
        assert all(extract_labels(bytes([i]), cfg) == {"dog"} for i in range(20))

    def test_histogram_matches_oracle(self):
        rng = np.random.default_rng(2024)
        frames = [rng.bytes(64) for _ in range(100)]
        cfg = ExtractorConfig(labels_per_frame=3)
        got = Counter(l for f in frames for l in extract_labels(f, cfg))
        want = Counter(l for f in frames for l in oracle_labels(f, DEFAULT_VOCABULARY, 3))
        assert got == want

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            ExtractorConfig(vocabulary=())
        with pytest.raises(ConfigError):
            ExtractorConfig(vocabulary=("a", "a"))
        with pytest.raises(ConfigError):
            ExtractorConfig(kind="external-endpoint")

    def test_callable_endpoint_filters_vocabulary(self):
        cfg = ExtractorConfig(kind="external-endpoint", endpoint=lambda b: ["dog", "spaceship"])
        assert extract_labels(b"x", cfg) == {"dog"}

    def test_http_endpoint(self):
        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = self.rfile.read(int(self.headers["Content-Length"]))
                reply = json.dumps(["cat"] if body == b"meow" else ["dog"]).encode()
                self.send_response(200)
                self.send_header("Content-Length", str(len(reply)))
                self.end_headers()
                self.wfile.write(reply)

            def log_message(self, *args):
                pass

        server = HTTPServer(("127.0.0.1", 0), Handler)
        t = threading.Thread(target=server.serve_forever, daemon=True)
        t.start()
        try:
            cfg = ExtractorConfig(kind="external-endpoint",
                                  endpoint=f"http://127.0.0.1:{server.server_port}/labels")
            assert extract_labels(b"meow", cfg) == {"cat"}
            assert extract_labels(b"woof", cfg) == {"dog"}
        finally:
            server.shutdown()

    def test_unreachable_endpoint(self):
        def down(_):
            raise ConnectionRefusedError("down")

        cfg = ExtractorConfig(kind="external-endpoint", endpoint=down)
        with pytest.raises(ExtractorUnavailableError):
            extract_labels(b"x", cfg)


class TestProcessStream:
    def test_labels_are_union_over_scheduled_frames(self):
        s = stream(10, 0.5)
        cfg = ExtractorConfig()
        store, meta = new_store(), MetaStore()
        r = process_stream(s, FramePolicy(2.0), cfg, store, meta)
        want = set()
        for i in (0, 4, 8, 12, 16, 20):
            want |= oracle_labels(f"frame-{i}".encode(), DEFAULT_VOCABULARY, 2)
        assert r.labels == want
        assert meta.get_by_key("s1", 1000.0) == r
        assert store.read_block(r.object_path)[0] == s.payload
        assert r.object_path == object_path_for(s) == "/videos/u1/s1/1000.bin"

    def test_zero_probability_sampler_skips(self):
        store, meta = new_store(), MetaStore()
        out = process_stream(stream(4, 1), FramePolicy(), ExtractorConfig(), store, meta,
                             sampler=lambda m: (False, 0.0))
        assert out == Skipped("pre-learning", 0.0)
        assert len(meta) == 0 and len(store) == 0

    def test_policy_sampler_rejection_reports_probability(self):
        sampler = PreLearningSampler(InclusionPolicy("uniform", base_rate=0.01, seed=1))
        outs = [process_stream(stream(4, 1, start=float(i)), FramePolicy(), ExtractorConfig(),
                               new_store(), MetaStore(), sampler=sampler) for i in range(20)]
        skipped = [o for o in outs if isinstance(o, Skipped)]
        assert len(skipped) == sampler.rejected >= 15
        assert all(o.probability == 0.01 for o in skipped)

    def test_always_sampler_same_as_none(self):
        a = process_stream(stream(4, 1), FramePolicy(), ExtractorConfig(), new_store(), MetaStore())
        b = process_stream(stream(4, 1), FramePolicy(), ExtractorConfig(), new_store(), MetaStore(),
                           sampler=lambda meta: (True, 1.0))
        assert a == b

    def test_duplicate_key(self):
        store, meta = new_store(), MetaStore()
        process_stream(stream(4, 1), FramePolicy(), ExtractorConfig(), store, meta)
        with pytest.raises(DuplicateRecordError):
            process_stream(stream(4, 1), FramePolicy(), ExtractorConfig(), store, meta)

    def test_failed_blob_write_leaves_no_record(self):
        class Broken:
            latency_ms = 0.0

            def write(self, rel, data):
                raise OSError("disk full")

        mounts = MountTable().mount("/videos", BackendDescriptor("v", "in-memory-mock"), backend=Broken())
        store, meta = TieredStore(default_tiers(), backend=mounts), MetaStore()
        with pytest.raises(OSError):
            process_stream(stream(4, 1), FramePolicy(), ExtractorConfig(), store, meta)
        assert len(meta) == 0 and len(store) == 0

    def test_every_record_readable_under_random_faults(self):
        rng = np.random.default_rng(5)

        class Flaky:
            latency_ms = 0.0

            def __init__(self):
                self.data = {}

            def write(self, rel, data):
                if rng.random() < 0.3:
                    raise OSError("injected")
                self.data[rel] = data

            def read(self, rel):
                return self.data[rel]

        be = Flaky()
        mounts = MountTable().mount("/videos", BackendDescriptor("v", "in-memory-mock"), backend=be)
        store, meta = TieredStore(default_tiers(), backend=mounts), MetaStore()
        for i in range(50):
            s = synthetic_stream(f"s{i}", "u", 1000 + i, 6, "kitchen", seed=i)
            try:
                process_stream(s, FramePolicy(), ExtractorConfig(), store, meta)
            except OSError:
                pass
        assert 0 < len(meta) < 50
        for r in meta.records():
            assert store.read_block(r.object_path)[0]

    def test_skip_on_extractor_error(self):
        calls = iter([ConnectionError("x"), ["dog"], ["cat"]] * 10)

        def flaky(_):
            v = next(calls)
            if isinstance(v, Exception):
                raise v
            return v

        cfg = ExtractorConfig(kind="external-endpoint", endpoint=flaky)
        r = process_stream(stream(4, 1), FramePolicy(2), cfg, new_store(), MetaStore(), on_extractor_error="skip")
        assert r.labels == {"dog", "cat"}
        with pytest.raises(ExtractorUnavailableError):
            process_stream(stream(4, 1), FramePolicy(2), cfg, new_store(), MetaStore())

    def test_determinism(self):
        def run():
            s = synthetic_stream("s", "u", 5.0, 30, "bedroom", seed=3)
            return process_stream(s, FramePolicy(), ExtractorConfig(), new_store(), MetaStore())

        assert run() == run()

    def test_label_provenance(self):
        s = synthetic_stream("s", "u", 5.0, 30, "bedroom", seed=4)
        r = process_stream(s, FramePolicy(), ExtractorConfig(), new_store(), MetaStore())
        per_frame = [extract_labels(f) for _, f in schedule_frames(s, FramePolicy())]
        assert all(any(l in labs for labs in per_frame) for l in r.labels)


class TestStreams:
    def test_synthetic_stream_shape(self):
        s = synthetic_stream("s", "u", 0, 10, "kitchen", seed=1, fps=2)
        assert len(s.frames) == 21 and s.frames[-1][0] == 10

    def test_invalid_offsets(self):
        with pytest.raises(ValueError):
            VideoStream("s", "u", 0, 5, "k", [(1.0, b""), (1.0, b"")])
        with pytest.raises(ValueError):
            VideoStream("s", "u", 0, 5, "k", [(6.0, b"")])

    def test_load_stream(self, tmp_path):
        (tmp_path / "f").mkdir()
        lines = [json.dumps({"session_id": "s", "user_id": "u", "start_timestamp": 7,
                             "duration": 2, "location": "hallway"})]
        for i in range(3):
            (tmp_path / "f" / f"{i}.bin").write_bytes(bytes([i]))
            lines.append(json.dumps({"offset": i, "file": f"f/{i}.bin"}))
        (tmp_path / "s.jsonl").write_text("\n".join(lines))
        s = load_stream(tmp_path / "s.jsonl")
        assert s.frames == ((0.0, b"\x00"), (1.0, b"\x01"), (2.0, b"\x02"))
        assert s.location == "hallway"
