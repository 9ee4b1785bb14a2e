import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest

from pathrecourse.gridworld import PROFILES, simulate_driver_policy


@pytest.fixture(scope="session")
def drivers():
    """Both simulated driver policies, trained once per test session."""
    return {name: simulate_driver_policy(p) for name, p in PROFILES.items()}


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdict lines at the end of the run, whatever the capture mode."""
    lines = []
    for key in ("passed", "failed", "xfailed", "xpassed"):
        for rep in terminalreporter.stats.get(key, []):
            lines += [v for k, v in getattr(rep, "user_properties", ()) if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
