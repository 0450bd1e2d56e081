"""Shared pytest configuration."""
from __future__ import annotations

import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

# one line per acceptance criterion, filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
