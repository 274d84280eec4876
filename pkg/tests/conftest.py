import warnings

from segopt.grid import DegenerateMaskWarning

# acceptance verdicts, filled in by test_acceptance and printed at the end of the run
VERDICTS: dict = {}


def pytest_configure(config):
    warnings.filterwarnings("ignore", category=DegenerateMaskWarning)


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(VERDICTS):
        ok, detail = VERDICTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
