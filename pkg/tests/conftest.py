import sys
from pathlib import Path

from hypothesis import settings

# sim_invariants is a plain helper module next to the tests
sys.path.insert(0, str(Path(__file__).parent))

# timing varies too much on shared CI machines for per-example deadlines
settings.register_profile("default", deadline=None)
settings.load_profile("default")

# one verdict line per acceptance criterion, collected by test_acceptance
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
