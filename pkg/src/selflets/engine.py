"""Behavior engine: runs the main behavior continuously and service behaviors
on demand, interleaving instances round-robin one step at a time."""

from __future__ import annotations

import enum
import itertools
import random
from dataclasses import dataclass, field
from typing import Any, Callable

from .guards import evaluate
from .knowledge import Knowledge
from .model import (
    Behavior,
    Event,
    Idle,
    InvokeAbility,
    InvokeService,
    NodeId,
    Scalar,
    ServiceId,
)

__all__ = [
    "AbilityContext",
    "AbilityRegistry",
    "BehaviorEngine",
    "BehaviorInstance",
    "InstanceKind",
    "ServiceNotAvailable",
    "default_abilities",
]

_UNSET: Any = object()


class ServiceNotAvailable(LookupError):
    """The service's behavior is not in the local behavior repository."""

    def __init__(self, service: ServiceId) -> None:
        super().__init__(f"service {service!r} not locally available")
        self.service = service


@dataclass
class AbilityContext:
    node: NodeId
    tick: int
    rng: random.Random


Ability = Callable[[dict, AbilityContext], Scalar]


class AbilityRegistry:
    def __init__(self, abilities: dict[str, Ability] | None = None) -> None:
        self._abilities: dict[str, Ability] = {}
        for name, fn in (abilities or {}).items():
            self.register(name, fn)

    def register(self, name: str, fn: Ability) -> None:
        if not name:
            raise ValueError("ability name must be non-empty")
        self._abilities[name] = fn

    def unregister(self, name: str) -> None:
        self._abilities.pop(name, None)

    def get(self, name: str) -> Ability | None:
        return self._abilities.get(name)

    def __contains__(self, name: object) -> bool:
        return name in self._abilities

    def names(self) -> list[str]:
        return sorted(self._abilities)


def default_abilities() -> dict[str, Ability]:
    """Host operations every node knows about."""
    return {
        "noop": lambda args, ctx: None,
        "work": lambda args, ctx: args.get("value", 1),
        "echo": lambda args, ctx: args.get("value"),
        "random": lambda args, ctx: ctx.rng.random(),
        "tick": lambda args, ctx: ctx.tick,
    }


class InstanceKind(str, enum.Enum):
    MAIN = "main"
    SERVICE = "service"


@dataclass
class BehaviorInstance:
    behavior: Behavior
    current_state: str
    invocation_id: int
    kind: InstanceKind
    service: ServiceId | None = None
    root: int = 0
    awaiting: int | None = None
    action_done: bool = False
    last_result: Any = _UNSET
    last_ok: Any = _UNSET
    ready_at: int = 0
    finished: bool = False
    stalled: bool = False
    delay: int = 0
    iterations: int = 0
    steps_in_tick: tuple[int, int] = (-1, 0)
    history: list[str] = field(default_factory=list)

    @property
    def live(self) -> bool:
        return not (self.finished or self.stalled)

    def runnable(self, tick: int) -> bool:
        return self.live and self.awaiting is None and tick >= self.ready_at


class BehaviorEngine:
    def __init__(
        self,
        node_id: NodeId,
        knowledge: Knowledge,
        publish: Callable[[Event], Any] | None = None,
        clock: Callable[[], int] | None = None,
        abilities: AbilityRegistry | None = None,
        rng: random.Random | None = None,
        steps_per_tick: int = 10_000,
    ) -> None:
        self.node_id = node_id
        self.knowledge = knowledge
        self.publish = publish or (lambda e: None)
        self.clock = clock or (lambda: 0)
        self.abilities = abilities if abilities is not None else AbilityRegistry(default_abilities())
        self.rng = rng or random.Random(0)
        self.steps_per_tick = steps_per_tick
        self.instances: list[BehaviorInstance] = []
        self._ids = itertools.count(1)
        self.main_iterations = 0
        self.service_runs = 0

    @property
    def goals_executed(self) -> int:
        return self.main_iterations + self.service_runs

    def new_id(self) -> int:
        return next(self._ids)

    def _event(self, kind: str, **payload: Scalar) -> Event:
        return Event(kind, payload, self.node_id, self.clock())

    # -- instance creation -------------------------------------------------

    def start_main(self, behavior_id: str, delay: int = 0, start_at: int = 0) -> BehaviorInstance:
        b = self.knowledge.behaviors.get(behavior_id)
        if b is None:
            raise KeyError(f"main behavior {behavior_id!r} not in repository")
        iid = self.new_id()
        inst = BehaviorInstance(b, b.initial, iid, InstanceKind.MAIN, root=iid,
                                ready_at=start_at, delay=delay)
        self.instances.append(inst)
        return inst

    def start_service_run(self, service: ServiceId, invocation_id: int | None = None,
                          root: int | None = None) -> BehaviorInstance:
        b = self.knowledge.behavior_for(service)
        if b is None:
            raise ServiceNotAvailable(service)
        iid = self.new_id() if invocation_id is None else invocation_id
        inst = BehaviorInstance(b, b.initial, iid, InstanceKind.SERVICE, service=service,
                                root=iid if root is None else root, ready_at=self.clock())
        self.instances.append(inst)
        return inst

    # -- execution -----------------------------------------------------------

    def _lookup(self, inst: BehaviorInstance) -> Callable[[str], Any]:
        def lookup(key: str) -> Any:
            if key == "result":
                if inst.last_result is _UNSET:
                    raise KeyError(key)
                return inst.last_result
            if key == "ok":
                if inst.last_ok is _UNSET:
                    raise KeyError(key)
                return inst.last_ok
            return self.knowledge.kb[key]

        return lookup

    def _run_ability(self, inst: BehaviorInstance, action: InvokeAbility) -> list[Event]:
        fn = self.abilities.get(action.name)
        if fn is None:
            inst.last_result, inst.last_ok = None, False
            return [self._event("missing_ability", ability=action.name, behavior=inst.behavior.id)]
        ctx = AbilityContext(self.node_id, self.clock(), self.rng)
        result = fn(dict(action.args), ctx)
        inst.last_result, inst.last_ok = result, True
        if action.store:
            self.knowledge.kb[action.store] = result
        return []

    def step(self, inst: BehaviorInstance) -> list[Event]:
        """Advance ``inst`` by one step and return the events it emits."""
        if not inst.live or inst.awaiting is not None:
            return []
        events: list[Event] = []
        state = inst.behavior.state(inst.current_state)
        if not inst.action_done:
            inst.action_done = True
            inst.history.append(state.id)
            action = state.action
            if isinstance(action, InvokeService):
                need = self.new_id()
                inst.awaiting = need
                events.append(self._event("service_needed", service=action.service,
                                          invocation_id=need, root=inst.root,
                                          behavior=inst.behavior.id))
                return events
            if isinstance(action, InvokeAbility):
                events.extend(self._run_ability(inst, action))
            else:
                assert isinstance(action, Idle)
        if state.terminal:
            events.extend(self._finish(inst))
            return events
        lookup = self._lookup(inst)
        for t in inst.behavior.outgoing(state.id):
            if evaluate(t.guard, lookup):
                inst.current_state = t.target
                inst.action_done = False
                return events
        inst.stalled = True
        events.append(self._event("behavior_stalled", behavior=inst.behavior.id,
                                  state=state.id, invocation_id=inst.invocation_id))
        if inst.kind is InstanceKind.SERVICE:
            events.append(self._event("service_failed", service=inst.service,
                                      invocation_id=inst.invocation_id,
                                      reason=f"stalled in state {state.id}"))
        return events

    def _finish(self, inst: BehaviorInstance) -> list[Event]:
        result = None if inst.last_result is _UNSET else inst.last_result
        if inst.kind is InstanceKind.SERVICE:
            inst.finished = True
            self.service_runs += 1
            return [self._event("service_completed", service=inst.service,
                                invocation_id=inst.invocation_id, result=result, ok=True)]
        # Main restarts; behavior edits take effect from the next iteration.
        self.main_iterations += 1
        inst.iterations += 1
        done = self._event("goal_completed", behavior=inst.behavior.id, root=inst.root,
                           iteration=inst.iterations)
        inst.behavior = self.knowledge.behaviors.get(inst.behavior.id) or inst.behavior
        inst.current_state = inst.behavior.initial
        inst.action_done = False
        inst.last_result = inst.last_ok = _UNSET
        inst.root = inst.invocation_id = self.new_id()
        inst.ready_at = self.clock() + inst.delay
        return [done]

    def resume(self, inst: BehaviorInstance, completion: Event) -> bool:
        """Unsuspend ``inst`` if ``completion`` carries the id it waits for."""
        if inst.awaiting is None or completion.get("invocation_id") != inst.awaiting:
            return False
        inst.awaiting = None
        inst.last_result = completion.get("result")
        inst.last_ok = completion.kind == "service_completed" and bool(completion.get("ok", True))
        return True

    def on_completion(self, event: Event) -> int:
        """Route a service_completed / service_failed to its waiting instance."""
        for inst in self.instances:
            if self.resume(inst, event):
                return 1
        return 0

    def step_round(self) -> int:
        """Offer one step to every runnable instance, in creation order."""
        tick = self.clock()
        steps = 0
        for inst in list(self.instances):
            if not inst.runnable(tick):
                continue
            last_tick, used = inst.steps_in_tick
            if last_tick == tick and used >= self.steps_per_tick:
                continue
            inst.steps_in_tick = (tick, used + 1 if last_tick == tick else 1)
            for e in self.step(inst):
                self.publish(e)
            steps += 1
        self.instances = [i for i in self.instances if not i.finished]
        return steps

    def suspended(self) -> list[BehaviorInstance]:
        return [i for i in self.instances if i.awaiting is not None]

    def stalled(self) -> list[BehaviorInstance]:
        return [i for i in self.instances if i.stalled]
