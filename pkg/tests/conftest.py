import pytest

CRITERIA = {
    1: "conditional CF identity, three families, runtime <= 60 s",
    2: "Gaussian integral covariance",
    3: "refinement convergence and exact constant-rule agreement",
    4: "Gauss domination inequality",
    5: "Prokhorov axioms and closed cases",
    6: "decoupled tangent frequencies, tightness and two-sample CF",
    7: "principle of conditioning",
    8: "boundedness probe quantiles vs oracle fixture",
    9: "determinism across reruns and thread counts",
}

_results: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record the verdict of one acceptance criterion for the terminal summary."""

    def record(number: int, passed: bool, detail: str = "") -> None:
        _results[number] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number, title in CRITERIA.items():
        if number in _results:
            passed, detail = _results[number]
            verdict = "PASS" if passed else "FAIL"
        else:
            verdict, detail = "NOT RUN", ""
        line = f"criterion {number}: {verdict}  {title}"
        tr.write_line(f"{line}  [{detail}]" if detail else line)
