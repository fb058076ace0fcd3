import os

import hypothesis
import pytest
from hypothesis import strategies as st

from reidrisk.model import GeneralizationProfile, Point, UserTrace, build_generalized_dataset

hypothesis.settings.register_profile("default", max_examples=60, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

PROFILE = GeneralizationProfile("zip", 1)
A, B, C = Point("A", 0), Point("B", 0), Point("C", 0)


def make_dataset(traces: dict, profile=PROFILE):
    return build_generalized_dataset([UserTrace(u, pts) for u, pts in traces.items()], profile)


@pytest.fixture
def two_users():
    """The hand-checkable fixture {u1:{A,B}, u2:{A,C}}."""
    return make_dataset({"u1": {A, B}, "u2": {A, C}})


def small_traces(max_users=6, max_points=5, zones="ABCDEFG"):
    """Strategy: dict user -> non-empty set of Points from a small universe."""
    point = st.builds(Point, st.sampled_from(zones), st.integers(0, 1))
    trace = st.frozensets(point, min_size=1, max_size=max_points)
    return st.lists(trace, min_size=1, max_size=max_users).map(
        lambda ts: {f"u{i}": set(t) for i, t in enumerate(ts)}
    )


ACCEPTANCE_LINES: list = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
