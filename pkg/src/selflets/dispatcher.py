"""Publish/subscribe routing inside a node and between nodes.

Every :class:`Dispatcher` (one per node) and the :class:`Broker` (between
nodes) push into a shared :class:`EventQueue`, so the whole simulation drains
in one global FIFO order.
"""

from __future__ import annotations

import enum
from collections import Counter, deque
from dataclasses import dataclass
from typing import Any, Callable

from .model import Event, Message, NodeId

__all__ = [
    "Broker",
    "CountingMode",
    "DispatchError",
    "Dispatcher",
    "EventQueue",
    "MessageMeter",
    "Subscription",
    "matches",
]

# Message body kinds that count as service requests on the meter.
REQUEST_KINDS = frozenset({"service_request", "service_discover"})


class DispatchError(ValueError):
    pass


def _check_pattern(pattern: str) -> None:
    if not isinstance(pattern, str) or not pattern:
        raise DispatchError("subscription pattern must be a non-empty string")
    if "*" in pattern[:-1]:
        raise DispatchError(f"wildcard only allowed as trailing character: {pattern!r}")


def matches(pattern: str, kind: str) -> bool:
    """Exact match, or prefix match when the pattern ends with ``*``."""
    if pattern.endswith("*"):
        return kind.startswith(pattern[:-1])
    return pattern == kind


@dataclass(frozen=True)
class Subscription:
    subscriber: str
    pattern: str


class EventQueue:
    """Global FIFO of pending ``(item, recipient, handler)`` deliveries."""

    def __init__(self) -> None:
        self._pending: deque[tuple[Any, str, Callable[[Any], None] | None]] = deque()
        self.delivered = 0

    def push(self, item: Any, recipient: str, handler: Callable[[Any], None] | None) -> None:
        self._pending.append((item, recipient, handler))

    def deliver_next(self) -> int:
        if not self._pending:
            return 0
        item, _recipient, handler = self._pending.popleft()
        self.delivered += 1
        if handler is not None:
            handler(item)
        return 1

    def drain(self, limit: int | None = None) -> int:
        n = 0
        while (limit is None or n < limit) and self.deliver_next():
            n += 1
        return n

    def pending(self) -> list[tuple[Any, str]]:
        return [(item, who) for item, who, _ in self._pending]

    def __len__(self) -> int:
        return len(self._pending)


class Dispatcher:
    """A node's internal event bus."""

    def __init__(self, queue: EventQueue | None = None, name: str = "") -> None:
        self.queue = queue if queue is not None else EventQueue()
        self.name = name
        self._subs: list[Subscription] = []
        self._handlers: dict[str, Callable[[Event], None]] = {}
        self.observers: list[Callable[[Event], None]] = []

    def subscribe(self, who: str, pattern: str,
                  handler: Callable[[Event], None] | None = None) -> Subscription:
        _check_pattern(pattern)
        sub = Subscription(who, pattern)
        if sub not in self._subs:
            self._subs.append(sub)
        if handler is not None:
            self._handlers[who] = handler
        return sub

    def unsubscribe(self, who: str, pattern: str | None = None) -> None:
        self._subs = [s for s in self._subs
                      if not (s.subscriber == who and (pattern is None or s.pattern == pattern))]

    @property
    def subscriptions(self) -> list[Subscription]:
        return list(self._subs)

    def recipients(self, kind: str) -> list[str]:
        out: list[str] = []
        for s in self._subs:
            if s.subscriber not in out and matches(s.pattern, kind):
                out.append(s.subscriber)
        return out

    def publish(self, event: Event) -> int:
        """Enqueue ``event`` once per matching subscriber; returns the fan-out."""
        for observe in self.observers:
            observe(event)
        targets = self.recipients(event.kind)
        for who in targets:
            self.queue.push(event, who, self._handlers.get(who))
        return len(targets)

    def deliver_next(self) -> int:
        return self.queue.deliver_next()


class CountingMode(str, enum.Enum):
    REQUESTS_ONLY = "requests_only"
    DELIVERIES = "deliveries"


class MessageMeter:
    """Counts inter-node deliveries under the configured counting mode."""

    def __init__(self, mode: CountingMode | str = CountingMode.REQUESTS_ONLY) -> None:
        self.mode = CountingMode(mode)
        self.total = 0
        self.by_kind: Counter[str] = Counter()

    def counts(self, message: Message) -> bool:
        return self.mode is CountingMode.DELIVERIES or message.body.kind in REQUEST_KINDS

    def record(self, message: Message, recipients: int) -> None:
        if recipients and self.counts(message):
            self.total += recipients
            self.by_kind[message.body.kind] += recipients


class Broker:
    """In-process stand-in for the distributed inter-node dispatcher."""

    def __init__(self, queue: EventQueue | None = None, meter: MessageMeter | None = None) -> None:
        self.queue = queue if queue is not None else EventQueue()
        self.meter = meter if meter is not None else MessageMeter()
        self._handlers: dict[NodeId, Callable[[Message], None] | None] = {}
        self._topics: dict[str, list[NodeId]] = {}
        self.observers: list[Callable[[Message, list[NodeId]], None]] = []

    def register(self, node: NodeId, handler: Callable[[Message], None] | None = None) -> None:
        if not node:
            raise DispatchError("node id must be non-empty")
        self._handlers[node] = handler

    @property
    def nodes(self) -> list[NodeId]:
        return list(self._handlers)

    def subscribe(self, node: NodeId, topic: str) -> None:
        if node not in self._handlers:
            raise DispatchError(f"node {node!r} is not registered")
        _check_pattern(topic)
        subs = self._topics.setdefault(topic, [])
        if node not in subs:
            subs.append(node)

    def subscribers(self, topic: str) -> list[NodeId]:
        out: list[NodeId] = []
        for pattern, nodes in self._topics.items():
            if matches(pattern, topic):
                out.extend(n for n in nodes if n not in out)
        return out

    def send_remote(self, topic: str, sender: NodeId, body: Event) -> int:
        """Enqueue ``body`` for every subscriber of ``topic`` except the sender.

        Returns the number of recipients, which is also what the meter adds.
        """
        if sender not in self._handlers:
            raise DispatchError(f"sender {sender!r} is not registered")
        message = Message(topic, sender, body)
        targets = [n for n in self.subscribers(topic) if n != sender]
        for node in targets:
            self.queue.push(message, node, self._handlers[node])
        self.meter.record(message, len(targets))
        for observe in self.observers:
            observe(message, targets)
        return len(targets)
