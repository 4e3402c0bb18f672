from collections import Counter

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("default")

_criteria: dict[int, tuple[str, list[str]]] = {}
_notes: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        n, title = mark.args
        if hasattr(report, "wasxfail"):
            result = "xfail"
        else:
            result = report.outcome
        _criteria.setdefault(n, (title, []))[1].append(result)
        _notes.setdefault(n, []).extend(v for k, v in item.user_properties if k == "note")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, results = _criteria[n]
        if all(r == "passed" for r in results):
            verdict = "PASS"
        elif all(r == "skipped" for r in results):
            verdict = "SKIP"
        elif "failed" in results:
            verdict = "FAIL"
        else:
            counts = Counter(results)
            verdict = "FAIL (partial: %s)" % ", ".join(f"{n} {r}" for r, n in sorted(counts.items()))
        terminalreporter.write_line(f"criterion {n:2d}: {verdict:6s} {title}")
        for note in _notes.get(n, []):
            terminalreporter.write_line(f"              {note}")


@pytest.fixture
def note(request):
    """Attach a one-line measurement to this test's acceptance summary line."""
    def add(text: str) -> None:
        request.node.user_properties.append(("note", text))
        print(text)
    return add
