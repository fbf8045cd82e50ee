import pytest

CRITERIA = {
    1: "jump identity",
    2: "a priori factor",
    3: "data-term invariance",
    4: "per-pixel marginal law",
    5: "termination bound",
    6: "main bound on shipped instances",
    7: "exhaustive oracle on tiny instances",
    8: "two-class optimality via thresholding",
    9: "coarea identity",
    10: "a posteriori certificate",
    11: "determinism",
}

_results: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record the outcome of an acceptance criterion and assert it."""

    def record(number: int, ok: bool, detail: str = "") -> None:
        _results[number] = (bool(ok), detail)
        print(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {CRITERIA[number]}  {detail}")
        assert ok, f"criterion {number} ({CRITERIA[number]}) failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number, name in CRITERIA.items():
        ok, detail = _results.get(number, (False, "not run or errored"))
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: "
                                    f"{name}  {detail}")
