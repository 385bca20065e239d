"""Domain vocabulary shared by every SelfLet component.

All types here are immutable values.  Each has a ``to_dict``/``from_dict``
pair producing the JSON-compatible form used in scenario files and on the
wire between nodes.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Mapping, Union

from .guards import GuardSyntaxError, compile_guard

Scalar = Union[str, int, float, bool, None]
NodeId = str
ServiceId = str

_SCALARS = (str, int, float, bool, type(None))


class AskMode(str, enum.Enum):
    DO = "do"
    TEACH = "teach"
    KNOW_WHO_CAN_DO = "know_who_can_do"
    KNOW_WHO_CAN_TEACH = "know_who_can_teach"

    @classmethod
    def parse(cls, value: str | AskMode) -> AskMode:
        if isinstance(value, AskMode):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown ask mode {value!r}") from None

    @property
    def required_flag(self) -> str:
        """OfferModeSet flag a provider needs to answer this mode."""
        return _REQUIRED_FLAG[self]


_REQUIRED_FLAG = {
    AskMode.DO: "can_do",
    AskMode.TEACH: "can_teach",
    AskMode.KNOW_WHO_CAN_DO: "knows_who_can_do",
    AskMode.KNOW_WHO_CAN_TEACH: "knows_who_can_teach",
}

_FLAGS = ("can_do", "can_teach", "knows_who_can_do", "knows_who_can_teach")


@dataclass(frozen=True)
class OfferModeSet:
    can_do: bool = False
    can_teach: bool = False
    knows_who_can_do: bool = False
    knows_who_can_teach: bool = False

    @classmethod
    def parse(cls, text: str | OfferModeSet | None) -> OfferModeSet:
        """Parse ``"can_do|can_teach"``; ``""``/``"none"`` is the empty set."""
        if isinstance(text, OfferModeSet):
            return text
        if text is None:
            return cls()
        flags = {}
        for part in str(text).split("|"):
            part = part.strip().lower()
            if part in ("", "none"):
                continue
            if part not in _FLAGS:
                raise ValueError(f"unknown offer mode {part!r}")
            flags[part] = True
        return cls(**flags)

    @classmethod
    def all_combinations(cls) -> list[OfferModeSet]:
        return [cls(*(bool(i >> b & 1) for b in range(4))) for i in range(16)]

    def supports(self, mode: AskMode) -> bool:
        return getattr(self, mode.required_flag)

    def with_flags(self, **flags: bool) -> OfferModeSet:
        values = {f: getattr(self, f) for f in _FLAGS}
        values.update(flags)
        return OfferModeSet(**values)

    @property
    def empty(self) -> bool:
        return not any(getattr(self, f) for f in _FLAGS)

    def __str__(self) -> str:
        return "|".join(f for f in _FLAGS if getattr(self, f)) or "none"


@dataclass(frozen=True)
class Event:
    """Unit of internal and inter-node communication.

    ``payload`` is a flat map of string keys to scalars and must not be
    mutated after construction.
    """

    kind: str
    payload: Mapping[str, Scalar] = field(default_factory=dict)
    source: str = ""
    timestamp: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.kind, str) or not self.kind:
            raise ValueError("event kind must be a non-empty string")
        for key, value in self.payload.items():
            if not isinstance(key, str):
                raise TypeError(f"payload key {key!r} is not a string")
            if not isinstance(value, _SCALARS):
                raise TypeError(f"payload value for {key!r} is not a scalar: {value!r}")
        object.__setattr__(self, "payload", dict(self.payload))

    def get(self, key: str, default: Any = None) -> Any:
        return self.payload.get(key, default)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "payload": dict(self.payload), "source": self.source,
                "timestamp": self.timestamp}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Event:
        return cls(data["kind"], dict(data.get("payload", {})), data.get("source", ""),
                   int(data.get("timestamp", 0)))


# -- behaviors ---------------------------------------------------------------


@dataclass(frozen=True)
class Idle:
    def to_dict(self) -> dict[str, Any]:
        return {"type": "idle"}


@dataclass(frozen=True)
class InvokeAbility:
    """Run a host operation; ``store`` names the knowledge key written with its result."""

    name: str
    args: Mapping[str, Scalar] = field(default_factory=dict)
    store: str | None = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"type": "ability", "name": self.name, "args": dict(self.args)}
        if self.store is not None:
            d["store"] = self.store
        return d


@dataclass(frozen=True)
class InvokeService:
    service: ServiceId

    def to_dict(self) -> dict[str, Any]:
        return {"type": "service", "service": self.service}


Action = Union[Idle, InvokeAbility, InvokeService]


def action_from_dict(data: Mapping[str, Any] | None) -> Action:
    if data is None:
        return Idle()
    kind = data.get("type", "idle")
    if kind == "idle":
        return Idle()
    if kind == "ability":
        return InvokeAbility(data["name"], dict(data.get("args", {})), data.get("store"))
    if kind == "service":
        return InvokeService(data["service"])
    raise ValueError(f"unknown state action type {kind!r}")


@dataclass(frozen=True)
class State:
    id: str
    action: Action = Idle()
    terminal: bool = False

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"id": self.id, "action": self.action.to_dict()}
        if self.terminal:
            d["terminal"] = True
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> State:
        return cls(data["id"], action_from_dict(data.get("action")), bool(data.get("terminal", False)))


@dataclass(frozen=True)
class Transition:
    source: str
    target: str
    guard: str = "true"

    def to_dict(self) -> dict[str, Any]:
        return {"from": self.source, "to": self.target, "guard": self.guard}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Transition:
        return cls(data["from"], data["to"], data.get("guard", "true"))


@dataclass(frozen=True)
class Behavior:
    """Flat guarded state machine. Transitions keep declaration order."""

    id: str
    states: tuple[State, ...]
    initial: str
    transitions: tuple[Transition, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "transitions", tuple(self.transitions))

    def state(self, state_id: str) -> State:
        for s in self.states:
            if s.id == state_id:
                return s
        raise KeyError(state_id)

    def outgoing(self, state_id: str) -> list[Transition]:
        return [t for t in self.transitions if t.source == state_id]

    def invoked_services(self) -> list[ServiceId]:
        seen: list[ServiceId] = []
        for s in self.states:
            if isinstance(s.action, InvokeService) and s.action.service not in seen:
                seen.append(s.action.service)
        return seen

    def abilities(self) -> list[str]:
        return sorted({s.action.name for s in self.states if isinstance(s.action, InvokeAbility)})

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "initial": self.initial,
            "states": [s.to_dict() for s in self.states],
            "transitions": [t.to_dict() for t in self.transitions],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Behavior:
        return cls(
            data["id"],
            tuple(State.from_dict(s) for s in data.get("states", [])),
            data.get("initial", ""),
            tuple(Transition.from_dict(t) for t in data.get("transitions", [])),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> Behavior:
        return cls.from_dict(json.loads(text))


def validate_behavior(b: Behavior) -> list[str]:
    """Return the list of invariant violations; an empty list means valid."""
    defects: list[str] = []
    if not b.id:
        defects.append("behavior id is empty")
    ids = [s.id for s in b.states]
    known = set(ids)
    if not ids:
        defects.append("behavior has no states")
    for sid in sorted({i for i in ids if ids.count(i) > 1}):
        defects.append(f"duplicate state {sid}")
    if b.initial not in known:
        defects.append(f"unknown initial state {b.initial}")
    for s in b.states:
        if s.terminal and not isinstance(s.action, Idle):
            defects.append(f"terminal state {s.id} has non-idle action")
    for t in b.transitions:
        for end in (t.source, t.target):
            if end not in known:
                defects.append(f"unknown state {end}")
        try:
            compile_guard(t.guard)
        except GuardSyntaxError as exc:
            defects.append(f"invalid guard on {t.source}->{t.target}: {exc}")
    if b.initial in known:
        reached = {b.initial}
        todo = deque([b.initial])
        while todo:
            current = todo.popleft()
            for t in b.outgoing(current):
                if t.target in known and t.target not in reached:
                    reached.add(t.target)
                    todo.append(t.target)
        for sid in ids:
            if sid not in reached:
                defects.append(f"unreachable state {sid}")
    return list(dict.fromkeys(defects))


@dataclass(frozen=True)
class Service:
    id: ServiceId
    behavior: str
    offer_modes: OfferModeSet = OfferModeSet(can_do=True)

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "behavior": self.behavior, "offer_modes": str(self.offer_modes)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Service:
        return cls(data["id"], data["behavior"], OfferModeSet.parse(data.get("offer_modes", "can_do")))


@dataclass(frozen=True)
class Message:
    """An inter-node message; ``body`` is an Event (behavior transfers ride in its payload)."""

    topic: str
    sender: NodeId
    body: Event

    def to_dict(self) -> dict[str, Any]:
        return {"topic": self.topic, "sender": self.sender, "body": self.body.to_dict()}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Message:
        return cls(data["topic"], data["sender"], Event.from_dict(data["body"]))
