from __future__ import annotations

import pytest

from selflets.model import Behavior, Idle, InvokeAbility, InvokeService, OfferModeSet, Service, State, Transition


def service1_behavior() -> Behavior:
    """Calls Service 2, then Service 3, then finishes."""
    return Behavior(
        "service1",
        (
            State("call2", InvokeService("Service 2")),
            State("call3", InvokeService("Service 3")),
            State("done", Idle(), terminal=True),
        ),
        "call2",
        (Transition("call2", "call3", "ok"), Transition("call3", "done", "ok")),
    )


def work_behavior(bid: str, value: int) -> Behavior:
    return Behavior(
        bid,
        (State("work", InvokeAbility("work", {"value": value})), State("done", terminal=True)),
        "work",
        (Transition("work", "done", "ok"),),
    )


def s2_services(modes: str = "can_do|can_teach") -> list[tuple[Service, Behavior]]:
    m = OfferModeSet.parse(modes)
    return [
        (Service("Service 1", "service1", m), service1_behavior()),
        (Service("Service 2", "service2", m), work_behavior("service2", 2)),
        (Service("Service 3", "service3", m), work_behavior("service3", 3)),
    ]


@pytest.fixture
def fig3():
    return s2_services()


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
