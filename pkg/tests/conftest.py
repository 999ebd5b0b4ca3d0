import sys
from pathlib import Path

from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


# one PASS/FAIL line per acceptance criterion, printed after the run
_CRITERIA: dict[str, list[str]] = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance" not in report.nodeid or not name.startswith("test_A"):
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        key = name[len("test_"):].split("_", 1)[0]
        _CRITERIA.setdefault(key, []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: int(k[1:])):
        outcomes = _CRITERIA[key]
        status = "PASS" if all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"{key}: {status} ({outcomes.count('passed')}/{len(outcomes)} checks)")
