import re
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# per-criterion verdicts for the acceptance suite terminal summary
_CRITERIA: dict[int, bool] = {}
_CRITERION_RE = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")


def pytest_runtest_logreport(report):
    match = _CRITERION_RE.search(report.nodeid)
    if match is None:
        return
    n = int(match.group(1))
    ok = _CRITERIA.get(n, True)
    # a setup error, call failure, or skip all count against the criterion
    if report.failed or report.skipped:
        ok = False
    _CRITERIA[n] = ok


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for n in sorted(_CRITERIA):
        verdict = "PASS" if _CRITERIA[n] else "FAIL"
        terminalreporter.write_line(f"CRITERION {n}: {verdict}")
