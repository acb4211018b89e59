"""Shared fixtures plus the release-checklist summary hook.

Tests marked ``acceptance(num=..., desc=...)`` are rolled up into one
PASS/FAIL line per checklist item at the end of the run.  The ``perf``
marker tags timing-sensitive checks so they can be deselected on shared
machines with ``-m "not perf"``.
"""

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("suite", deadline=None)
settings.load_profile("suite")


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(num, desc): release checklist item rollup"
    )
    config.addinivalue_line(
        "markers", "perf: timing-sensitive; deselect with -m 'not perf'"
    )
    config._acceptance_map = {}


def pytest_collection_modifyitems(config, items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            config._acceptance_map[item.nodeid] = (
                mark.kwargs["num"],
                mark.kwargs["desc"],
            )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    amap = getattr(config, "_acceptance_map", {})
    if not amap:
        return
    # Aggregate per checklist item: FAIL dominates, then SKIP, then PASS.
    state = {}
    words = {"passed": "PASS", "failed": "FAIL", "error": "FAIL", "skipped": "SKIP"}
    for status, word in words.items():
        for rep in terminalreporter.stats.get(status, ()):
            nodeid = getattr(rep, "nodeid", None)
            if nodeid not in amap:
                continue
            num, desc = amap[nodeid]
            rank = {"PASS": 0, "SKIP": 1, "FAIL": 2}[word]
            cur = state.get(num, ("", -1))
            if rank > cur[1]:
                state[num] = (desc, rank)
            elif cur[1] == -1:
                state[num] = (desc, rank)
    if not state:
        return
    back = {0: "PASS", 1: "SKIP", 2: "FAIL"}
    terminalreporter.section("acceptance checklist")
    for num in sorted(state):
        desc, rank = state[num]
        terminalreporter.write_line(f"ACCEPTANCE {num:>2} {back[rank]} - {desc}")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_vectors(rng):
    return rng.normal(size=(64, 3))


@pytest.fixture
def small_strings(rng):
    alphabet = "abcdef"
    out = []
    for _ in range(48):
        length = int(rng.integers(1, 12))
        out.append("".join(alphabet[int(c)] for c in rng.integers(0, 6, length)))
    return out
