from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # loc_world, fixture_server

from loc_world import build_store


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory) -> Path:
    """The standard recorded store, built once per session."""
    directory = tmp_path_factory.mktemp("loc-fixtures")
    build_store(directory)
    return directory


@pytest.fixture()
def replay_client(fixture_dir, tmp_path):
    """Replay-mode client over the standard store, fail-on-use transport."""
    from lcsh_loop.loc import LocClient, LookupConfig, Mode

    from test_loc_client import FailOnUseTransport

    cfg = LookupConfig(mode=Mode.REPLAY, fixture_dir=fixture_dir, cache_dir=tmp_path / "cache")
    client = LocClient(cfg, transport=FailOnUseTransport())
    yield client
    client.close()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One visible pass/fail line per acceptance criterion."""
    lines = []
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            if "test_acceptance.py" in getattr(report, "nodeid", ""):
                name = report.nodeid.split("::")[-1]
                lines.append((name, status.upper()))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, status in sorted(lines):
            terminalreporter.write_line(f"{'PASS' if status == 'PASSED' else 'FAIL'}  {name}")
