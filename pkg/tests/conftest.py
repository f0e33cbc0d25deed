import numpy as np
import pytest

from robocloud.learning import DEFAULT_VOCABULARY, LOCATIONS
from robocloud.metastore import QueryPredicate, SessionRecord

T0 = 1_700_000_000


def make_records(n, seed=0, labels=DEFAULT_VOCABULARY[:12], users=5, span=100_000):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        k = int(rng.integers(0, 5))
        labs = frozenset(labels[j] for j in rng.choice(len(labels), size=k, replace=False))
        ts = T0 + int(rng.integers(0, span))
        uid = f"u{int(rng.integers(users))}"
        out.append(SessionRecord(f"s{i}", uid, ts, float(rng.integers(1, 120)),
                                 LOCATIONS[int(rng.integers(len(LOCATIONS)))], labs,
                                 f"/videos/{uid}/s{i}/{ts}.bin"))
    return out


def make_predicate(rng, records, labels=DEFAULT_VOCABULARY[:12], users=5, span=100_000):
    while True:
        kw = {}
        if rng.random() < 0.5:
            a, b = sorted(int(x) for x in rng.integers(0, span, size=2))
            kw["time_range"] = (T0 + a, T0 + b)
        if rng.random() < 0.4:
            kw["location"] = LOCATIONS[int(rng.integers(len(LOCATIONS)))]
        if rng.random() < 0.4:
            kw["labels_any"] = {labels[j] for j in rng.choice(len(labels), size=int(rng.integers(1, 3)), replace=False)}
        if rng.random() < 0.3:
            kw["labels_all"] = {labels[j] for j in rng.choice(len(labels), size=int(rng.integers(1, 3)), replace=False)}
        if rng.random() < 0.1 and records:
            kw["session_id"] = records[int(rng.integers(len(records)))].session_id
        if rng.random() < 0.3:
            kw["user_id"] = f"u{int(rng.integers(users))}"
        if kw:
            return QueryPredicate(**kw)


@pytest.fixture
def records():
    return make_records


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
