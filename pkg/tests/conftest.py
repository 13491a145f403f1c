import json
import re
from pathlib import Path

import pytest

from hanoisim import RunConfig

PROGRAMS = Path(__file__).resolve().parent.parent / "src" / "hanoisim" / "programs"

_ACCEPTANCE = re.compile(r"test_acceptance_(\d+)_")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per release-gate check in test_acceptance.py."""
    results: dict[int, str] = {}
    for outcome, verdict in (("passed", "PASS"), ("failed", "FAIL"),
                             ("error", "FAIL")):
        for report in terminalreporter.stats.get(outcome, []):
            match = _ACCEPTANCE.search(getattr(report, "nodeid", ""))
            if match:
                num = int(match.group(1))
                if results.get(num) != "FAIL":
                    results[num] = verdict
    if not results:
        return
    from test_acceptance import DESCRIPTIONS
    terminalreporter.write_sep("-", "acceptance checks")
    for num in sorted(results):
        terminalreporter.write_line(
            f"[ACCEPTANCE {num}] {results[num]} - {DESCRIPTIONS.get(num, '')}")


@pytest.fixture(scope="session")
def programs_dir() -> Path:
    return PROGRAMS


@pytest.fixture(scope="session")
def manifest() -> list[dict]:
    doc = json.loads((PROGRAMS / "manifest.json").read_text(encoding="utf-8"))
    return doc["programs"]


def config_for(entry: dict, **overrides) -> RunConfig:
    """RunConfig matching a corpus manifest entry."""
    args = {"engine": entry["engine"], "atomic_order": entry["atomic_order"]}
    args.update(overrides)
    return RunConfig(**args)
