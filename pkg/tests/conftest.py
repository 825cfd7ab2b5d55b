import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py::test_criterion" in rep.nodeid and rep.when == "call" or (
                outcome == "error" and "test_criterion" in rep.nodeid
            ):
                name = rep.nodeid.split("[", 1)[1].rstrip("]")
                detail = dict(rep.user_properties).get("detail", "")
                lines.append((name, "PASS" if outcome == "passed" else "FAIL", detail))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, status, detail in sorted(lines):
            terminalreporter.write_line(f"{status} criterion {name}" + (f": {detail}" if detail else ""))
