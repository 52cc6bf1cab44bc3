"""Shared fixtures: the 8-object worked example and random SIS generators.

Also prints one PASS/FAIL line per acceptance criterion after a run that
includes tests from test_acceptance.py.
"""

from __future__ import annotations

import pytest

from huretex.rng import SplitMix64
from huretex.rsfg import build_rsfg
from huretex.sis import SequentialInformationSystem

# The worked 8-object example: attributes a1, a2 and the label d.
FIXTURE_ROWS = [
    ("u1", "x1", "y1", "0"),
    ("u2", "x1", "y1", "0"),
    ("u3", "x1", "y2", "1"),
    ("u4", "x2", "y1", "0"),
    ("u5", "x2", "y2", "1"),
    ("u6", "x2", "y2", "1"),
    ("u7", "x1", "y1", "1"),
    ("u8", "x2", "y2", "0"),
]
FIXTURE_ALPHABETS = (("x1", "x2"), ("y1", "y2"), ("0", "1"))


def make_fixture_sis() -> SequentialInformationSystem:
    rows = tuple(tuple(FIXTURE_ALPHABETS[a].index(v) for a, v in enumerate(r[1:]))
                 for r in FIXTURE_ROWS)
    return SequentialInformationSystem(
        attributes=(("a1", "dense"), ("a2", "dense"), ("d", "output")),
        alphabets=FIXTURE_ALPHABETS,
        rows=rows,
        object_ids=tuple(r[0] for r in FIXTURE_ROWS),
        labels=tuple(r[3] for r in FIXTURE_ROWS),
    )


def make_random_sis(rng: SplitMix64, n_attrs: int, n_objects: int,
                    min_alpha: int = 2, max_alpha: int = 6) -> SequentialInformationSystem:
    """Random SIS with first-occurrence alphabets (every symbol realized)."""
    sizes = [min_alpha + rng.randint(max_alpha - min_alpha + 1) for _ in range(n_attrs)]
    alphabets, columns = [], []
    for s in sizes:
        index: dict[int, int] = {}
        encoded = []
        for _ in range(n_objects):
            v = rng.randint(s)
            if v not in index:
                index[v] = len(index)
            encoded.append(index[v])
        alphabets.append(tuple(f"v{j}" for j in range(len(index))))
        columns.append(encoded)
    rows = tuple(zip(*columns))
    attributes = tuple((f"a{i}", "dense") for i in range(n_attrs - 1)) + (("d", "output"),)
    labels = tuple(alphabets[-1][row[-1]] for row in rows)
    return SequentialInformationSystem(attributes=attributes, alphabets=tuple(alphabets),
                                       rows=rows,
                                       object_ids=tuple(f"u{i}" for i in range(n_objects)),
                                       labels=labels)


@pytest.fixture
def fixture_sis():
    return make_fixture_sis()


@pytest.fixture
def fixture_graph():
    return build_rsfg(make_fixture_sis())


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = []
    for status, key in (("PASS", "passed"), ("FAIL", "failed")):
        for rep in terminalreporter.stats.get(key, []):
            if getattr(rep, "when", None) == "call" and "test_acceptance.py" in rep.nodeid:
                lines.append((rep.nodeid.split("::")[-1], status))
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, status in sorted(lines):
            terminalreporter.write_line(f"{status}  {name}")
