import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter):
    """Print one verdict line per acceptance criterion that ran."""
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(verdicts):
        ok, note = verdicts[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}" + (f"  ({note})" if note else ""))
