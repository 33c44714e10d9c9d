from __future__ import annotations

import pytest

from decision_memory.envs.experts import generate_expert_trajectories
from decision_memory.formation import FormationConfig, form_memory
from decision_memory.llm.backends import Fallback, ScriptedBackend

_ACCEPTANCE: list[tuple[int, str, str, float]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when != "call":
        return
    _ACCEPTANCE.append((marker.kwargs["criterion"], marker.kwargs["title"],
                        "PASS" if report.passed else "FAIL", report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, verdict, seconds in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"C{number:<2} {verdict}  {title}  ({seconds:.2f}s)")


@pytest.fixture(scope="session")
def rule_backend() -> ScriptedBackend:
    return ScriptedBackend((), Fallback.RULE_BASED)


@pytest.fixture(scope="session")
def house_trajectories():
    return generate_expert_trajectories("toyhouse", 40, seed=21, noise=0.2)


@pytest.fixture(scope="session")
def house_memory_set(rule_backend, house_trajectories):
    return form_memory(rule_backend, house_trajectories, FormationConfig(batch_size=20), seed=21)
