from __future__ import annotations

from collections import deque

import pytest
from hypothesis import given, strategies as st

from selflets.dispatcher import Broker, CountingMode, DispatchError, Dispatcher, EventQueue, MessageMeter, matches
from selflets.model import Event, Message


def recorder():
    seen = []
    return seen, seen.append


def test_exact_subscription_receives():
    d = Dispatcher()
    seen, h = recorder()
    d.subscribe("prediction_manager", "service_request_out", h)
    d.publish(Event("service_request_out", {"service": "Service 1"}))
    d.queue.drain()
    assert [e.kind for e in seen] == ["service_request_out"]


def test_non_matching_kind():
    d = Dispatcher()
    seen, h = recorder()
    d.subscribe("A", "x", h)
    assert d.publish(Event("y")) == 0
    d.queue.drain()
    assert seen == []


def test_prefix_subscription():
    d = Dispatcher()
    seen, h = recorder()
    d.subscribe("A", "prediction.*", h)
    d.publish(Event("prediction.frequent_service"))
    d.queue.drain()
    assert len(seen) == 1
    assert not matches("prediction.*", "predictionx")


def test_empty_pattern_rejected():
    with pytest.raises(DispatchError):
        Dispatcher().subscribe("A", "")


def test_subscribe_is_idempotent():
    d = Dispatcher()
    d.subscribe("A", "x")
    d.subscribe("A", "x")
    assert len(d.subscriptions) == 1
    assert d.publish(Event("x")) == 1


def test_overlapping_patterns_deliver_once():
    d = Dispatcher()
    d.subscribe("A", "x.*")
    d.subscribe("A", "x.y")
    assert d.publish(Event("x.y")) == 1


def test_zero_subscribers_drops_event():
    d = Dispatcher()
    assert d.publish(Event("x")) == 0
    assert len(d.queue) == 0


def test_fan_out_three():
    d = Dispatcher()
    for who in "ABC":
        d.subscribe(who, "x")
    assert d.publish(Event("x")) == 3
    assert len(d.queue) == 3


def test_fifo_per_subscriber():
    d = Dispatcher()
    seen, h = recorder()
    d.subscribe("A", "p*", h)
    d.publish(Event("p1"))
    d.publish(Event("p2"))
    d.queue.drain()
    assert [e.kind for e in seen] == ["p1", "p2"]


def test_deliver_next_counts():
    q = EventQueue()
    assert q.deliver_next() == 0
    d = Dispatcher(q)
    d.subscribe("A", "x")
    d.publish(Event("x"))
    assert q.deliver_next() == 1
    assert len(q) == 0


@given(st.lists(st.tuples(st.sampled_from(["n1", "n2"]), st.sampled_from(["a", "b", "c"])), max_size=40))
def test_global_order_matches_reference_queue(ops):
    q = EventQueue()
    nodes = {n: Dispatcher(q, n) for n in ("n1", "n2")}
    delivered = []
    subs = {"n1": [("x", "a"), ("y", "*")], "n2": [("z", "b"), ("z", "c"), ("w", "a")]}
    for n, pairs in subs.items():
        for who, pat in pairs:
            nodes[n].subscribe(who, pat, lambda e, n=n, who=who: delivered.append((n, who, e.kind)))

    reference = deque()
    for i, (n, kind) in enumerate(ops):
        nodes[n].publish(Event(kind, {"i": i}))
        seen = []
        for who, pat in subs[n]:
            if who not in seen and (pat == "*" or pat == kind):
                seen.append(who)
                reference.append((n, who, kind))
        # interleave some deliveries with publishes
        if i % 3 == 2:
            q.deliver_next()
            if reference:
                assert delivered[-1] == reference.popleft()
    q.drain()
    assert delivered[len(delivered) - len(reference):] == list(reference)


def _broker(n_nodes, mode=CountingMode.REQUESTS_ONLY):
    b = Broker(EventQueue(), MessageMeter(mode))
    for i in range(n_nodes):
        b.register(f"N{i}")
        b.subscribe(f"N{i}", "discover")
        b.subscribe(f"N{i}", f"node:N{i}")
    return b


def test_broadcast_one_other_node():
    b = _broker(2)
    assert b.send_remote("discover", "N0", Event("service_discover")) == 1
    assert b.meter.total == 1


def test_broadcast_four_other_nodes():
    b = _broker(5)
    b.send_remote("discover", "N0", Event("service_discover"))
    assert b.meter.total == 4


def test_directed_reply_single_recipient():
    b = _broker(3, CountingMode.DELIVERIES)
    got = []
    b.register("N2", got.append)
    b.send_remote("node:N2", "N0", Event("service_result"))
    b.queue.drain()
    assert b.meter.total == 1
    assert [m.sender for m in got] == ["N0"]


def test_requests_only_ignores_replies():
    b = _broker(2)
    b.send_remote("node:N1", "N0", Event("service_result"))
    assert b.meter.total == 0
    b.send_remote("node:N1", "N0", Event("service_request"))
    assert b.meter.total == 1


def test_unregistered_sender_rejected():
    with pytest.raises(DispatchError):
        _broker(1).send_remote("discover", "ghost", Event("service_discover"))


def test_meter_counts_recipients():
    m = MessageMeter(CountingMode.DELIVERIES)
    m.record(Message("t", "a", Event("anything")), 3)
    assert m.total == 3 and m.by_kind == {"anything": 3}
