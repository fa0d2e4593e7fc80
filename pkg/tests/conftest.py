"""Prints one PASS/FAIL line per acceptance criterion after the run."""

import re

_CRITERION = re.compile(r"test_criterion_(\d+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcomes = {}
    for status in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(status, []):
            match = _CRITERION.search(getattr(report, "nodeid", ""))
            if match and getattr(report, "when", "call") == "call":
                outcomes.setdefault(int(match.group(1)), []).append(status == "passed")
    if not outcomes:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for criterion in sorted(outcomes):
        verdict = "PASS" if all(outcomes[criterion]) else "FAIL"
        terminalreporter.write_line(f"criterion {criterion}: {verdict}")
