import hashlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robocloud.backend import (
    BackendDescriptor,
    LocalDirectoryBackend,
    MountTable,
    join_path,
    normalize_path,
    split_path,
)
from robocloud.errors import ConfigError, MissingObjectError, OverlappingMountError, UnmountedPathError


def mem(name):
    return BackendDescriptor(name, "in-memory-mock")


class TestPaths:
    def test_normalize(self):
        assert normalize_path("a/b/c/") == "/a/b/c"

    @pytest.mark.parametrize("bad", ["/a/../b", "/a//b", "/a/./b"])
    def test_bad_segments_rejected(self, bad):
        with pytest.raises(ValueError):
            split_path(bad)

    def test_join(self):
        assert join_path("/videos", "u/s/1.bin") == "/videos/u/s/1.bin"


class TestMount:
    def test_single_mount(self):
        t = MountTable().mount("/s3mock", mem("s3"))
        assert list(t.entries) == ["/s3mock"]

    def test_overlap_rejected(self):
        t = MountTable().mount("/a", mem("a"))
        with pytest.raises(OverlappingMountError, match="overlapping prefix"):
            t.mount("/a/b", mem("b"))
        with pytest.raises(OverlappingMountError):
            MountTable().mount("/a/b", mem("b")).mount("/a", mem("a"))

    def test_sibling_prefixes_are_disjoint(self):
        t = MountTable().mount("/a", mem("a")).mount("/ab", mem("ab"))
        assert t.resolve("/ab/x")[0].name == "ab"

    def test_duplicate_name(self):
        with pytest.raises(ConfigError):
            MountTable().mount("/a", mem("x")).mount("/b", mem("x"))

    def test_disjoint_round_trip(self):
        t = MountTable().mount("/one", mem("one")).mount("/two", mem("two"))
        t.persist("/one/x", b"1")
        t.persist("/two/y", b"2")
        assert t.list("/one") == ["/one/x"]
        assert t.list("/two") == ["/two/y"]
        assert t.list("/") == ["/one/x", "/two/y"]


class TestResolve:
    def test_strip_prefix(self):
        t = MountTable().mount("/b1", mem("B"))
        desc, rel = t.resolve("/b1/x/y")
        assert desc.name == "B" and rel == "x/y"

    def test_unmounted(self):
        with pytest.raises(UnmountedPathError, match="unmounted"):
            MountTable().mount("/b1", mem("B")).resolve("/nowhere/z")

    @settings(max_examples=100)
    @given(st.lists(st.from_regex(r"[a-z0-9_]{1,6}", fullmatch=True), min_size=1, max_size=4),
           st.sampled_from(["/p", "/q/r"]))
    def test_transparent_naming(self, segments, prefix):
        t = MountTable().mount("/p", mem("p")).mount("/q/r", mem("qr"))
        path = prefix + "/" + "/".join(segments)
        desc, rel = t.resolve(path)
        assert join_path(prefix, rel) == path
        assert desc.name == {"/p": "p", "/q/r": "qr"}[prefix]


class TestPersistFetch:
    def test_round_trip_1kb(self):
        t = MountTable().mount("/m", mem("m"))
        blob = bytes(range(256)) * 4
        ack = t.persist("/m/obj", blob)
        assert ack.size == 1024
        assert t.fetch("/m/obj") == blob

    def test_delayed_mock_latency(self):
        t = MountTable().mount("/d", BackendDescriptor("d", "delayed-mock", {"latency_ms": 200}))
        assert t.persist("/d/x", b"x").modeled_latency_ms >= 200

    def test_missing_and_unmounted(self):
        t = MountTable().mount("/m", mem("m"))
        with pytest.raises(MissingObjectError):
            t.fetch("/m/none")
        with pytest.raises(UnmountedPathError):
            t.persist("/elsewhere/x", b"")

    @pytest.mark.parametrize("kind", ["in-memory-mock", "local-directory", "delayed-mock"])
    def test_thousand_random_blobs(self, kind, tmp_path):
        params = {"root": str(tmp_path)} if kind == "local-directory" else {}
        t = MountTable().mount("/r", BackendDescriptor("r", kind, params))
        rng = np.random.default_rng(7)
        digests = {}
        for i in range(1000):
            blob = rng.bytes(int(rng.integers(0, 200)))
            path = f"/r/d{i % 10}/o{i}"
            t.persist(path, blob)
            digests[path] = hashlib.sha256(blob).hexdigest()
        for path, digest in digests.items():
            assert hashlib.sha256(t.fetch(path)).hexdigest() == digest

    def test_local_directory_is_bit_exact(self, tmp_path):
        t = MountTable().mount("/l", BackendDescriptor("l", "local-directory", {"root": str(tmp_path)}))
        t.persist("/l/a/b.bin", b"\x00\xffraw")
        assert (tmp_path / "a" / "b.bin").read_bytes() == b"\x00\xffraw"
        assert LocalDirectoryBackend(tmp_path).keys() == ["a/b.bin"]


class TestList:
    def test_empty(self):
        assert MountTable().list("/") == []

    def test_three_sorted(self):
        t = MountTable().mount("/b1", mem("b1"))
        for name in ("c", "a", "b"):
            t.persist(f"/b1/{name}", b"")
        assert t.list("/b1") == ["/b1/a", "/b1/b", "/b1/c"]

    def test_matches_reference_after_random_persists(self):
        t = MountTable().mount("/x", mem("x")).mount("/y/z", mem("yz"))
        rng = np.random.default_rng(3)
        ref = set()
        for _ in range(500):
            prefix = ["/x", "/y/z"][int(rng.integers(2))]
            path = f"{prefix}/k{int(rng.integers(50))}/v{int(rng.integers(50))}"
            t.persist(path, b"v")
            ref.add(path)
        assert t.list("/") == sorted(ref)
        assert t.list("/y") == sorted(p for p in ref if p.startswith("/y/"))
        assert t.list("/unmounted") == []
