from __future__ import annotations

import pytest

from sparse_alloc.graph import AllocationInstance, build_instance

_ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("acceptance")
    if mark is None or call.when != "call":
        return
    number, title = mark.args
    outcome = "PASS" if call.excinfo is None else "FAIL"
    detail = getattr(item, "acceptance_detail", "")
    _ACCEPTANCE[number] = (title, outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, outcome, detail = _ACCEPTANCE[number]
        line = f"criterion {number:>2}: {outcome}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture
def detail(request):
    """Attach a one-line measurement to the acceptance summary."""

    def record(text: str) -> None:
        request.node.acceptance_detail = text

    return record


def path_instance() -> AllocationInstance:
    # u1=0, u2=1, v1=2, v2=3; edges u1-v1, u1-v2, u2-v1
    return build_instance(2, 2, [(0, 2), (0, 3), (1, 2)], [1, 1])


def k12(cap: int = 1) -> AllocationInstance:
    return build_instance(1, 2, [(0, 1), (0, 2)], [cap, cap])


def k21(cap: int = 1) -> AllocationInstance:
    return build_instance(2, 1, [(0, 2), (1, 2)], [cap])
