from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from backprover.datagen import GenConfig, generate_split  # noqa: E402
from backprover.records import sample_from_record  # noqa: E402
from backprover.theory import Question, Theory  # noqa: E402

T1_TEXTS = [
    "Anne is big.",
    "Bob is kind.",
    "If someone is big then they are strong.",
    "If someone is strong then they are happy.",
    "If someone is not big then they are small.",
]


@pytest.fixture
def t1() -> Theory:
    return Theory.from_texts(T1_TEXTS)


def q(text: str) -> Question:
    return Question.from_text(text)


@pytest.fixture(scope="session")
def small_corpus():
    """120 generated samples covering depths 0-2, both strategies and both answers."""
    config = GenConfig(samples_per_split={"train": 120}, seed=7)
    return [sample_from_record(r) for r in generate_split(config, "train")]


# -- acceptance summary --------------------------------------------------------------

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, name): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    entry = _criteria.setdefault(marker[0], {"name": marker[1], "outcome": "passed"})
    if report.failed:
        entry["outcome"] = "failed"
        entry["reason"] = report.longrepr.reprcrash.message.splitlines()[0] if hasattr(report.longrepr, "reprcrash") else ""
    elif report.skipped and entry["outcome"] == "passed":
        entry["outcome"] = "skipped"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        word = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[entry["outcome"]]
        line = f"criterion {number} [{word}] {entry['name']}"
        if entry.get("reason"):
            line += f": {entry['reason']}"
        terminalreporter.write_line(line)
