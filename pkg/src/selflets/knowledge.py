"""A node's internal knowledge: key-value base plus the service, behavior,
attribute and provider repositories."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Iterator

from .model import Behavior, Event, NodeId, OfferModeSet, Scalar, Service, ServiceId, validate_behavior

__all__ = [
    "BehaviorRepository",
    "InvalidBehavior",
    "Knowledge",
    "KnowledgeBase",
    "MISSING",
    "ProviderEntry",
    "ProviderList",
    "ServiceRepository",
]


class _Missing:
    def __repr__(self) -> str:
        return "MISSING"


MISSING: Any = _Missing()


class InvalidBehavior(ValueError):
    def __init__(self, behavior_id: str, defects: list[str]) -> None:
        super().__init__(f"behavior {behavior_id!r} is invalid: {'; '.join(defects)}")
        self.behavior_id = behavior_id
        self.defects = defects


class KnowledgeBase:
    """Last-writer-wins scalar store; absent keys differ from stored ``None``."""

    def __init__(self, entries: dict[str, Scalar] | None = None) -> None:
        self._entries: dict[str, Scalar] = dict(entries or {})

    def get(self, key: str, default: Any = MISSING) -> Any:
        return self._entries.get(key, default)

    def __getitem__(self, key: str) -> Scalar:
        return self._entries[key]

    def __setitem__(self, key: str, value: Scalar) -> None:
        self._entries[key] = value

    def set(self, key: str, value: Scalar) -> None:
        self._entries[key] = value

    def delete(self, key: str) -> None:
        self._entries.pop(key, None)

    def __contains__(self, key: object) -> bool:
        return key in self._entries

    def snapshot(self) -> dict[str, Scalar]:
        return dict(self._entries)


class BehaviorRepository:
    def __init__(self) -> None:
        self._behaviors: dict[str, Behavior] = {}

    def add(self, behavior: Behavior) -> None:
        defects = validate_behavior(behavior)
        if defects:
            raise InvalidBehavior(behavior.id, defects)
        self._behaviors[behavior.id] = behavior

    def get(self, behavior_id: str) -> Behavior | None:
        return self._behaviors.get(behavior_id)

    def remove(self, behavior_id: str) -> None:
        self._behaviors.pop(behavior_id, None)

    def __contains__(self, behavior_id: object) -> bool:
        return behavior_id in self._behaviors

    def __iter__(self) -> Iterator[Behavior]:
        return iter(self._behaviors.values())

    def __len__(self) -> int:
        return len(self._behaviors)

    def ids(self) -> list[str]:
        return sorted(self._behaviors)


class ServiceRepository:
    def __init__(self) -> None:
        self._services: dict[ServiceId, Service] = {}

    def add(self, service: Service) -> None:
        self._services[service.id] = service

    def get(self, service_id: ServiceId) -> Service | None:
        return self._services.get(service_id)

    def remove(self, service_id: ServiceId) -> None:
        self._services.pop(service_id, None)

    def __contains__(self, service_id: object) -> bool:
        return service_id in self._services

    def __iter__(self) -> Iterator[Service]:
        return iter(self._services.values())

    def __len__(self) -> int:
        return len(self._services)


@dataclass
class ProviderEntry:
    node: NodeId
    modes: OfferModeSet
    last_seen: int


class ProviderList:
    """Known providers per required service, at most one entry per node."""

    def __init__(self, owner: NodeId = "") -> None:
        self.owner = owner
        self._entries: dict[ServiceId, dict[NodeId, ProviderEntry]] = {}

    def update(self, service: ServiceId, node: NodeId, modes: OfferModeSet, tick: int) -> None:
        if node == self.owner:
            return
        per_service = self._entries.setdefault(service, {})
        entry = per_service.get(node)
        if entry is None:
            per_service[node] = ProviderEntry(node, modes, tick)
        else:
            entry.modes = modes
            entry.last_seen = tick

    def demote(self, service: ServiceId, node: NodeId) -> None:
        entry = self._entries.get(service, {}).get(node)
        if entry is not None:
            entry.last_seen = 0

    def remove(self, service: ServiceId, node: NodeId) -> None:
        self._entries.get(service, {}).pop(node, None)

    def expire(self, now: int, window: int) -> None:
        for per_service in self._entries.values():
            for node in [n for n, e in per_service.items() if now - e.last_seen > window]:
                del per_service[node]

    def get(self, service: ServiceId) -> list[ProviderEntry]:
        return list(self._entries.get(service, {}).values())

    def services(self) -> list[ServiceId]:
        return sorted(s for s, e in self._entries.items() if e)


class Knowledge:
    """Internal Knowledge of one node.

    ``publish`` receives the events knowledge changes emit
    (currently only ``service_installed``).
    """

    def __init__(self, node_id: NodeId, publish: Callable[[Event], Any] | None = None,
                 clock: Callable[[], int] | None = None) -> None:
        self.node_id = node_id
        self.kb = KnowledgeBase()
        self.services = ServiceRepository()
        self.behaviors = BehaviorRepository()
        self.attributes: dict[str, str] = {}
        self.providers = ProviderList(node_id)
        self._publish = publish or (lambda e: None)
        self._clock = clock or (lambda: 0)

    def install_service(self, service: Service, behavior: Behavior | None = None) -> None:
        """Store ``behavior`` (validated) and register ``service``.

        Raises InvalidBehavior with repositories untouched when the behavior
        is invalid or a can_do/can_teach service would lack its behavior.
        """
        if behavior is not None:
            if behavior.id != service.behavior:
                raise InvalidBehavior(behavior.id,
                                      [f"service {service.id} expects behavior {service.behavior}"])
            defects = validate_behavior(behavior)
            if defects:
                raise InvalidBehavior(behavior.id, defects)
        modes = service.offer_modes
        if (modes.can_do or modes.can_teach) and behavior is None and service.behavior not in self.behaviors:
            raise InvalidBehavior(service.behavior, ["behavior not in repository"])
        if behavior is not None:
            self.behaviors.add(behavior)
        self.services.add(service)
        self._publish(Event("service_installed",
                            {"service": service.id, "behavior": service.behavior,
                             "offer_modes": str(service.offer_modes)},
                            self.node_id, self._clock()))

    def update_provider(self, service: ServiceId, node: NodeId, modes: OfferModeSet, tick: int) -> None:
        self.providers.update(service, node, modes, tick)

    def is_local(self, service: ServiceId) -> bool:
        """True when the service can be executed here right now."""
        s = self.services.get(service)
        return s is not None and s.offer_modes.can_do and s.behavior in self.behaviors

    def required_services(self) -> set[ServiceId]:
        """Services invoked by stored behaviors that cannot be run locally."""
        needed: set[ServiceId] = set()
        for b in self.behaviors:
            needed.update(b.invoked_services())
        return {s for s in needed if not self.is_local(s)}

    def behavior_for(self, service: ServiceId) -> Behavior | None:
        s = self.services.get(service)
        return None if s is None else self.behaviors.get(s.behavior)
