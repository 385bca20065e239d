"""Autonomic manager: a minimal forward-chaining engine over declarative rules.

A rule fires when an event matches its trigger pattern and its condition
holds.  Conditions use the guard expression language; names resolve against
the event payload first, then the knowledge base.  The following functions
are available to conditions: ``is_local(s)``, ``is_remote(s)``,
``has_service(s)`` and ``has_behavior(b)``.

Action fields written as ``"$key"`` are filled from the triggering event's
payload when the rule fires.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Any, Callable, ClassVar, Mapping, Union

from .dispatcher import _check_pattern, matches
from .engine import Ability, AbilityRegistry
from .guards import GuardSyntaxError, Undefined, compile_guard, evaluate as eval_expr
from .knowledge import InvalidBehavior, Knowledge
from .model import AskMode, Behavior, Event, OfferModeSet, Service, State, Transition, validate_behavior

if TYPE_CHECKING:
    from .negotiation import NegotiationManager

__all__ = [
    "ActionError",
    "AutonomicManager",
    "ChangeAskMode",
    "ChangeOfferMode",
    "DisablePeer",
    "Edit",
    "EnablePeer",
    "InstallAbility",
    "InstallService",
    "ModifyBehavior",
    "Rule",
    "RuleError",
    "action_from_dict",
    "teach_frequent_service_rule",
]


class RuleError(ValueError):
    pass


class ActionError(RuleError):
    pass


def _bind_value(value: Any, payload: Mapping[str, Any]) -> Any:
    if isinstance(value, str) and value.startswith("$"):
        key = value[1:]
        if key not in payload:
            raise Undefined(key)
        return payload[key]
    return value


@dataclass(frozen=True)
class ChangeAskMode:
    type: ClassVar[str] = "change_ask_mode"
    service: str
    mode: str

    def bind(self, payload: Mapping[str, Any]) -> ChangeAskMode:
        return ChangeAskMode(_bind_value(self.service, payload), _bind_value(self.mode, payload))

    def describe(self) -> str:
        return f"change_ask_mode({self.service}, {AskMode.parse(self.mode).value})"

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.type, "service": self.service, "mode": self.mode}


@dataclass(frozen=True)
class ChangeOfferMode:
    type: ClassVar[str] = "change_offer_mode"
    service: str
    modes: str

    def bind(self, payload: Mapping[str, Any]) -> ChangeOfferMode:
        return ChangeOfferMode(_bind_value(self.service, payload), _bind_value(self.modes, payload))

    def describe(self) -> str:
        return f"change_offer_mode({self.service}, {OfferModeSet.parse(self.modes)})"

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.type, "service": self.service, "modes": self.modes}


@dataclass(frozen=True)
class InstallService:
    type: ClassVar[str] = "install_service"
    service: str
    behavior: Behavior
    offer_modes: str = "can_do"

    def bind(self, payload: Mapping[str, Any]) -> InstallService:
        return replace(self, service=_bind_value(self.service, payload))

    def describe(self) -> str:
        return f"install_service({self.service}, {self.behavior.id})"

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.type, "service": self.service, "behavior": self.behavior.to_dict(),
                "offer_modes": self.offer_modes}


@dataclass(frozen=True)
class InstallAbility:
    type: ClassVar[str] = "install_ability"
    name: str

    def bind(self, payload: Mapping[str, Any]) -> InstallAbility:
        return InstallAbility(_bind_value(self.name, payload))

    def describe(self) -> str:
        return f"install_ability({self.name})"

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.type, "name": self.name}


@dataclass(frozen=True)
class Edit:
    """One behavior edit: add/remove a state or transition, or move the initial state."""

    op: str
    state: State | None = None
    transition: Transition | None = None
    state_id: str | None = None

    OPS: ClassVar[tuple[str, ...]] = ("add_state", "remove_state", "add_transition",
                                      "remove_transition", "set_initial")

    def __post_init__(self) -> None:
        if self.op not in self.OPS:
            raise RuleError(f"unknown edit op {self.op!r}")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"op": self.op}
        if self.state is not None:
            d["state"] = self.state.to_dict()
        if self.transition is not None:
            d["transition"] = self.transition.to_dict()
        if self.state_id is not None:
            d["state_id"] = self.state_id
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Edit:
        return cls(
            data["op"],
            State.from_dict(data["state"]) if "state" in data else None,
            Transition.from_dict(data["transition"]) if "transition" in data else None,
            data.get("state_id"),
        )

    def apply(self, b: Behavior) -> Behavior:
        states, transitions, initial = list(b.states), list(b.transitions), b.initial
        if self.op == "add_state":
            if self.state is None:
                raise ActionError("add_state needs a state")
            states = [s for s in states if s.id != self.state.id] + [self.state]
        elif self.op == "remove_state":
            sid = self.state_id or (self.state.id if self.state else None)
            if sid not in {s.id for s in states}:
                raise ActionError(f"no state {sid} to remove")
            states = [s for s in states if s.id != sid]
            transitions = [t for t in transitions if sid not in (t.source, t.target)]
        elif self.op == "add_transition":
            if self.transition is None:
                raise ActionError("add_transition needs a transition")
            transitions.append(self.transition)
        elif self.op == "remove_transition":
            if self.transition is None or self.transition not in transitions:
                raise ActionError("no such transition to remove")
            transitions.remove(self.transition)
        else:
            initial = self.state_id or ""
        return Behavior(b.id, tuple(states), initial, tuple(transitions))


@dataclass(frozen=True)
class ModifyBehavior:
    type: ClassVar[str] = "modify_behavior"
    behavior: str
    edits: tuple[Edit, ...] = ()

    def bind(self, payload: Mapping[str, Any]) -> ModifyBehavior:
        return replace(self, behavior=_bind_value(self.behavior, payload))

    def describe(self) -> str:
        return f"modify_behavior({self.behavior}, {len(self.edits)} edits)"

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.type, "behavior": self.behavior, "edits": [e.to_dict() for e in self.edits]}


@dataclass(frozen=True)
class EnablePeer:
    type: ClassVar[str] = "enable_peer"
    node: str

    def bind(self, payload: Mapping[str, Any]) -> EnablePeer:
        return EnablePeer(_bind_value(self.node, payload))

    def describe(self) -> str:
        return f"enable_peer({self.node})"

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.type, "node": self.node}


@dataclass(frozen=True)
class DisablePeer:
    type: ClassVar[str] = "disable_peer"
    node: str

    def bind(self, payload: Mapping[str, Any]) -> DisablePeer:
        return DisablePeer(_bind_value(self.node, payload))

    def describe(self) -> str:
        return f"disable_peer({self.node})"

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.type, "node": self.node}


Action = Union[ChangeAskMode, ChangeOfferMode, InstallService, InstallAbility, ModifyBehavior,
               EnablePeer, DisablePeer]


def action_from_dict(data: Mapping[str, Any]) -> Action:
    kind = data.get("type")
    if kind == "change_ask_mode":
        if not str(data["mode"]).startswith("$"):
            AskMode.parse(data["mode"])
        return ChangeAskMode(data["service"], data["mode"])
    if kind == "change_offer_mode":
        if not str(data["modes"]).startswith("$"):
            OfferModeSet.parse(data["modes"])
        return ChangeOfferMode(data["service"], data["modes"])
    if kind == "install_service":
        return InstallService(data["service"], Behavior.from_dict(data["behavior"]),
                              data.get("offer_modes", "can_do"))
    if kind == "install_ability":
        return InstallAbility(data["name"])
    if kind == "modify_behavior":
        return ModifyBehavior(data["behavior"], tuple(Edit.from_dict(e) for e in data.get("edits", [])))
    if kind == "enable_peer":
        return EnablePeer(data["node"])
    if kind == "disable_peer":
        return DisablePeer(data["node"])
    raise RuleError(f"unknown action type {kind!r}")


@dataclass(frozen=True)
class Rule:
    name: str
    trigger: str
    actions: tuple[Action, ...]
    condition: str = "true"
    once_per: str | None = None
    min_support: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "actions", tuple(self.actions))
        if not self.name:
            raise RuleError("rule name must be non-empty")
        if not self.actions:
            raise RuleError(f"rule {self.name!r} has no actions")
        try:
            _check_pattern(self.trigger)
            compile_guard(self.condition)
        except (ValueError, GuardSyntaxError) as exc:
            raise RuleError(f"rule {self.name!r}: {exc}") from None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"name": self.name, "trigger": self.trigger, "condition": self.condition,
                             "actions": [a.to_dict() for a in self.actions]}
        if self.once_per is not None:
            d["once_per"] = self.once_per
        if self.min_support is not None:
            d["min_support"] = self.min_support
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Rule:
        return cls(
            data["name"],
            data["trigger"],
            tuple(action_from_dict(a) for a in data.get("actions", [])),
            data.get("condition", "true"),
            data.get("once_per"),
            data.get("min_support"),
        )


def teach_frequent_service_rule(min_support: float | None = None) -> Rule:
    """When requests for a remote service become frequent, ask it in teach mode."""
    return Rule(
        name="change service ask mode",
        trigger="prediction.frequent_service",
        condition="is_remote(service)",
        actions=(ChangeAskMode("$service", "teach"),),
        once_per="service",
        min_support=min_support,
    )


class AutonomicManager:
    component = "autonomic_manager"

    def __init__(
        self,
        knowledge: Knowledge,
        negotiation: NegotiationManager | None = None,
        abilities: AbilityRegistry | None = None,
        ability_catalog: Mapping[str, Ability] | None = None,
        publish: Callable[[Event], Any] | None = None,
        subscribe: Callable[[str], Any] | None = None,
        clock: Callable[[], int] | None = None,
    ) -> None:
        self.knowledge = knowledge
        self.negotiation = negotiation
        self.abilities = abilities
        self.ability_catalog = dict(ability_catalog or {})
        self.publish = publish or (lambda e: None)
        self._subscribe = subscribe or (lambda pattern: None)
        self.clock = clock or (lambda: 0)
        self.rules: dict[str, Rule] = {}
        self.fired: dict[str, list[Any]] = {}
        self.applied: list[str] = []
        self.failed: list[str] = []

    def _event(self, kind: str, **payload: Any) -> Event:
        return Event(kind, payload, self.knowledge.node_id, self.clock())

    def install_rule(self, rule: Rule) -> None:
        if rule.name in self.rules:
            raise RuleError(f"duplicate rule name {rule.name!r}")
        self.rules[rule.name] = rule
        self.fired.setdefault(rule.name, [])
        self._subscribe(rule.trigger)

    def _functions(self) -> dict[str, Callable]:
        k = self.knowledge
        return {
            "is_local": k.is_local,
            "is_remote": lambda s: not k.is_local(s),
            "has_service": lambda s: s in k.services,
            "has_behavior": lambda b: b in k.behaviors,
        }

    def _matching(self, event: Event) -> list[tuple[Rule, list[Action]]]:
        payload = event.payload
        kb = self.knowledge.kb

        def lookup(key: str) -> Any:
            if key in payload:
                return payload[key]
            return kb[key]

        out = []
        for name in sorted(self.rules):
            rule = self.rules[name]
            if not matches(rule.trigger, event.kind):
                continue
            try:
                if rule.once_per is not None:
                    if rule.once_per not in payload:
                        raise Undefined(rule.once_per)
                    if payload[rule.once_per] in self.fired[name]:
                        continue
                if rule.min_support is not None:
                    if "support" not in payload:
                        raise Undefined("support")
                    if not payload["support"] >= rule.min_support:
                        continue
                if not eval_expr(rule.condition, lookup, self._functions(), strict=True):
                    continue
                actions = [a.bind(payload) for a in rule.actions]
            except Undefined as exc:
                self.publish(self._event("rule_skipped", rule=name, missing=str(exc)))
                continue
            if rule.once_per is not None:
                self.fired[name].append(payload[rule.once_per])
            out.append((rule, actions))
        return out

    def evaluate(self, event: Event) -> list[Action]:
        """Actions of every rule firing on ``event``, rules taken in name order."""
        return [a for _, actions in self._matching(event) for a in actions]

    def on_event(self, event: Event) -> None:
        for rule, actions in self._matching(event):
            for action in actions:
                self.apply_action(action, rule.name)

    # -- actions ---------------------------------------------------------------

    def apply_action(self, action: Action, rule: str = "") -> bool:
        """Apply ``action`` atomically; emits action_applied or action_failed."""
        try:
            self._apply(action)
        except (ActionError, InvalidBehavior, ValueError, KeyError) as exc:
            self.failed.append(_describe(action))
            self.publish(self._event("action_failed", action=action.type, rule=rule,
                                     reason=str(exc)))
            return False
        self.applied.append(_describe(action))
        self.publish(self._event("action_applied", action=action.type, rule=rule,
                                 detail=_describe(action)))
        return True

    def _apply(self, action: Action) -> None:
        k = self.knowledge
        if isinstance(action, ChangeAskMode):
            if self.negotiation is None:
                raise ActionError("no negotiation manager")
            self.negotiation.ask_modes.set(action.service, AskMode.parse(action.mode))
        elif isinstance(action, ChangeOfferMode):
            service = k.services.get(action.service)
            if service is None:
                raise ActionError(f"service {action.service} not in repository")
            modes = OfferModeSet.parse(action.modes)
            if (modes.can_do or modes.can_teach) and service.behavior not in k.behaviors:
                raise ActionError(f"behavior {service.behavior} missing for {modes}")
            k.services.add(replace(service, offer_modes=modes))
        elif isinstance(action, InstallService):
            k.install_service(Service(action.service, action.behavior.id,
                                      OfferModeSet.parse(action.offer_modes)), action.behavior)
        elif isinstance(action, InstallAbility):
            fn = self.ability_catalog.get(action.name)
            if fn is None or self.abilities is None:
                raise ActionError(f"ability {action.name} not available from the host catalog")
            self.abilities.register(action.name, fn)
        elif isinstance(action, ModifyBehavior):
            b = k.behaviors.get(action.behavior)
            if b is None:
                raise ActionError(f"behavior {action.behavior} not in repository")
            for edit in action.edits:
                b = edit.apply(b)
            defects = validate_behavior(b)
            if defects:
                raise InvalidBehavior(b.id, defects)
            k.behaviors.add(b)
        elif isinstance(action, (EnablePeer, DisablePeer)):
            if self.negotiation is None:
                raise ActionError("no negotiation manager")
            if isinstance(action, DisablePeer):
                self.negotiation.disabled_peers.add(action.node)
            else:
                self.negotiation.disabled_peers.discard(action.node)
        else:
            raise ActionError(f"unsupported action {action!r}")

    def snapshot(self) -> dict[str, Any]:
        return {"fired": {r: list(v) for r, v in sorted(self.fired.items())},
                "applied": list(self.applied), "failed": list(self.failed)}


def _describe(action: Any) -> str:
    try:
        return action.describe()
    except ValueError:
        return repr(action)
