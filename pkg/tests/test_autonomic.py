from __future__ import annotations

import pytest

from selflets.autonomic import (
    ChangeAskMode,
    ChangeOfferMode,
    DisablePeer,
    Edit,
    InstallAbility,
    InstallService,
    ModifyBehavior,
    Rule,
    RuleError,
    action_from_dict,
    teach_frequent_service_rule,
)
from selflets.dispatcher import Broker, EventQueue
from selflets.model import AskMode, Event, OfferModeSet, Service
from selflets.negotiation import Resolution, ServiceRequest
from selflets.node import SelfLet

from .conftest import s2_services, service1_behavior

FORECAST = "prediction.frequent_service"


def nodes(s2_modes="can_do|can_teach"):
    q = EventQueue()
    broker = Broker(q)
    s1, s2 = SelfLet("S1", q, broker), SelfLet("S2", q, broker)
    for s, b in s2_services(s2_modes):
        s2.install_service(s, b)
    q.drain()
    return s1, s2, q


def test_frequent_remote_service_asks_teach():
    s1, _, _ = nodes()
    s1.install_rule(teach_frequent_service_rule())
    actions = s1.autonomic.evaluate(Event(FORECAST, {"service": "Service 1", "support": 1.0}))
    assert actions == [ChangeAskMode("Service 1", "teach")]


def test_once_per_exhaustion():
    s1, _, _ = nodes()
    s1.install_rule(teach_frequent_service_rule())
    e = Event(FORECAST, {"service": "Service 1"})
    s1.autonomic.evaluate(e)
    assert s1.autonomic.evaluate(e) == []
    assert s1.autonomic.evaluate(Event(FORECAST, {"service": "Service 2"})) != []


def test_local_service_condition_fails():
    _, s2, _ = nodes()
    s2.install_rule(teach_frequent_service_rule())
    assert s2.autonomic.evaluate(Event(FORECAST, {"service": "Service 1"})) == []


def test_absent_key_skips_rule_with_diagnostic():
    s1, _, q = nodes()
    seen = []
    s1.dispatcher.subscribe("probe", "rule_skipped", seen.append)
    s1.install_rule(teach_frequent_service_rule())
    assert s1.autonomic.evaluate(Event(FORECAST, {"other": 1})) == []
    q.drain()
    assert len(seen) == 1


def test_min_support_gate():
    s1, _, _ = nodes()
    s1.install_rule(teach_frequent_service_rule(min_support=0.8))
    assert s1.autonomic.evaluate(Event(FORECAST, {"service": "Service 1", "support": 0.6})) == []
    assert s1.autonomic.evaluate(Event(FORECAST, {"service": "Service 1", "support": 0.9})) != []


def test_change_ask_mode_affects_resolution():
    s1, _, _ = nodes()
    s1.knowledge.update_provider("Service 1", "S2", OfferModeSet.parse("can_do|can_teach"), 0)
    assert s1.autonomic.apply_action(ChangeAskMode("Service 1", "teach"))
    assert s1.negotiation.resolve_need("Service 1") == Resolution.remote("S2", AskMode.TEACH)


def test_change_offer_mode_enables_teach():
    _, s2, _ = nodes("can_do")
    req = ServiceRequest("Service 1", "S1", AskMode.TEACH, 1)
    assert s2.negotiation.handle_request(req).kind == "service_refusal"
    assert s2.autonomic.apply_action(ChangeOfferMode("Service 1", "can_do|can_teach"))
    assert s2.negotiation.handle_request(req).kind == "service_transfer"


def test_modify_behavior_removing_initial_fails_atomically():
    _, s2, q = nodes()
    failed = []
    s2.dispatcher.subscribe("probe", "action_failed", failed.append)
    before = s2.knowledge.behaviors.get("service1")
    ok = s2.autonomic.apply_action(ModifyBehavior("service1", (Edit("remove_state", state_id="call2"),)))
    q.drain()
    assert not ok and len(failed) == 1
    assert s2.knowledge.behaviors.get("service1") == before


def test_modify_behavior_valid_edit():
    _, s2, _ = nodes()
    ok = s2.autonomic.apply_action(ModifyBehavior("service1", (Edit("set_initial", state_id="call3"),
                                                              Edit("remove_state", state_id="call2"))))
    assert ok
    assert s2.knowledge.behaviors.get("service1").initial == "call3"


def test_install_ability_from_catalog_only():
    s1, _, _ = nodes()
    s1.abilities.unregister("echo")
    assert s1.autonomic.apply_action(InstallAbility("echo"))
    assert not s1.autonomic.apply_action(InstallAbility("teleport"))


def test_disable_peer_refuses_requests():
    _, s2, _ = nodes()
    s2.autonomic.apply_action(DisablePeer("S1"))
    reply = s2.negotiation.handle_request(ServiceRequest("Service 2", "S1", AskMode.DO, 1))
    assert reply.kind == "service_refusal"


def test_duplicate_rule_rejected():
    s1, _, _ = nodes()
    s1.install_rule(teach_frequent_service_rule())
    with pytest.raises(RuleError):
        s1.install_rule(teach_frequent_service_rule())


def test_installed_rule_fires_on_published_event():
    s1, _, q = nodes()
    s1.knowledge.update_provider("Service 1", "S2", OfferModeSet.parse("can_do|can_teach"), 0)
    s1.install_rule(teach_frequent_service_rule())
    s1.publish(Event(FORECAST, {"service": "Service 1"}))
    q.drain()
    assert s1.negotiation.ask_modes.get("Service 1") is AskMode.TEACH
    assert s1.autonomic.applied == ["change_ask_mode(Service 1, teach)"]


def test_rule_roundtrip():
    r = teach_frequent_service_rule()
    assert Rule.from_dict(r.to_dict()) == r
    a = ModifyBehavior("b", (Edit("set_initial", state_id="x"),))
    assert action_from_dict(a.to_dict()) == a


def test_install_service_action():
    s1, _, _ = nodes()
    assert s1.autonomic.apply_action(InstallService("Service 1", service1_behavior(), "can_do"))
    assert s1.knowledge.is_local("Service 1")
    assert isinstance(s1.knowledge.services.get("Service 1"), Service)
