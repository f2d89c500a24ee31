from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

_ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = {}


@pytest.fixture
def record(request):
    """Store ``(passed, detail)`` for an acceptance criterion and echo it."""
    lines = request.config.stash[_ACCEPTANCE_KEY]
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def _record(criterion: str, passed: bool, detail: str) -> bool:
        lines[criterion] = (bool(passed), detail)
        if reporter is not None:
            reporter.write_line(f"\n{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}")
        return bool(passed)

    return _record


def _sort_key(criterion: str):
    head = "".join(ch for ch in criterion if ch.isdigit())
    return int(head or 0), criterion


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    grouped: dict[str, list[bool]] = {}
    for criterion, (passed, _) in lines.items():
        if "." in criterion:
            grouped.setdefault(criterion.split(".")[0], []).append(passed)
    entries = [(_sort_key(c), f"{'PASS' if ok else 'FAIL'} criterion {c}: {detail}")
               for c, (ok, detail) in lines.items()]
    for base, results in grouped.items():
        verdict = "PASS" if all(results) else "FAIL"
        summary = f"{verdict} criterion {base}: {sum(results)}/{len(results)} property checks hold"
        entries.append(((_sort_key(base)[0], base + "~"), summary))
    for _, text in sorted(entries):
        terminalreporter.write_line(text)
