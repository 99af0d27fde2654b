from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bdtr.retrieval import build_index  # noqa: E402
from scenarios import bridge_corpus, bridge_sample  # noqa: E402


@pytest.fixture
def bridge_index():
    return build_index(bridge_corpus())


@pytest.fixture
def bridge():
    return bridge_sample()


@pytest.fixture
def write_jsonl(tmp_path):
    import json

    def _write(name, records):
        path = tmp_path / name
        with open(path, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write((rec if isinstance(rec, str) else json.dumps(rec)) + "\n")
        return path

    return _write


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
