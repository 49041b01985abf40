from collections import defaultdict

import pytest

_RESULTS = defaultdict(list)


@pytest.fixture
def criterion():
    """Record one sub-check of a numbered acceptance criterion."""

    def record(number, label, ok, detail=""):
        _RESULTS[number].append((label, bool(ok), detail))
        print(f"criterion {number} [{label}]: {'pass' if ok else 'FAIL'} {detail}".rstrip())
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        checks = _RESULTS[number]
        failed = [c for c in checks if not c[1]]
        status = "PASS" if not failed else "FAIL"
        detail = "; ".join(f"{label} {d}".strip() for label, _, d in (failed or checks))
        terminalreporter.write_line(f"criterion {number}: {status}  ({len(checks) - len(failed)}/"
                                    f"{len(checks)} checks)  {detail}")
