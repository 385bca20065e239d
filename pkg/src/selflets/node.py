"""A SelfLet: the components of one autonomic node wired to its dispatcher."""

from __future__ import annotations

import random
from typing import Any, Callable, Mapping

from .autonomic import AutonomicManager, Rule
from .dispatcher import Broker, Dispatcher, EventQueue
from .engine import Ability, AbilityRegistry, BehaviorEngine, default_abilities
from .knowledge import Knowledge
from .model import AskMode, Behavior, Event, NodeId, Service, ServiceId
from .negotiation import NegotiationManager
from .prediction import PredictionManager, PredictionModel, PredictionModelDescriptor

__all__ = ["SelfLet"]


class SelfLet:
    """One node.  All components share the node's internal dispatcher, whose
    queue may be shared with other nodes and the broker for a global FIFO."""

    def __init__(
        self,
        node_id: NodeId,
        queue: EventQueue | None = None,
        broker: Broker | None = None,
        clock: Callable[[], int] | None = None,
        abilities: Mapping[str, Ability] | None = None,
        ability_catalog: Mapping[str, Ability] | None = None,
        rng: random.Random | None = None,
        learner_advertises: bool = False,
        steps_per_tick: int = 10_000,
    ) -> None:
        if not node_id:
            raise ValueError("node id must be non-empty")
        self.node_id = node_id
        self.clock = clock or (lambda: 0)
        self.dispatcher = Dispatcher(queue, name=node_id)
        self.knowledge = Knowledge(node_id, self.dispatcher.publish, self.clock)
        catalog = dict(default_abilities())
        catalog.update(ability_catalog or {})
        self.abilities = AbilityRegistry(dict(abilities) if abilities is not None else catalog)
        self.engine = BehaviorEngine(node_id, self.knowledge, self.dispatcher.publish, self.clock,
                                     self.abilities, rng or random.Random(node_id),
                                     steps_per_tick)
        self.negotiation = NegotiationManager(node_id, self.knowledge, self.engine, self.dispatcher,
                                              broker, self.clock, learner_advertises)
        self.autonomic = AutonomicManager(
            self.knowledge, self.negotiation, self.abilities, catalog, self.dispatcher.publish,
            lambda pattern: self.dispatcher.subscribe(AutonomicManager.component, pattern,
                                                      self.autonomic.on_event),
            self.clock,
        )
        self.prediction = PredictionManager(self.dispatcher, node_id, self.clock)
        self.dispatcher.subscribe("behavior_engine", "service_completed", self.engine.on_completion)
        self.dispatcher.subscribe("behavior_engine", "service_failed", self.engine.on_completion)

    def __repr__(self) -> str:
        return f"SelfLet({self.node_id!r})"

    # -- configuration ----------------------------------------------------------

    def add_behavior(self, behavior: Behavior) -> None:
        self.knowledge.behaviors.add(behavior)

    def install_service(self, service: Service, behavior: Behavior | None = None) -> None:
        self.knowledge.install_service(service, behavior)

    def set_ask_mode(self, service: ServiceId, mode: AskMode | str) -> None:
        self.negotiation.ask_modes.set(service, AskMode.parse(mode))

    def install_rule(self, rule: Rule) -> None:
        self.autonomic.install_rule(rule)

    def register_model(self, descriptor: PredictionModelDescriptor, model: PredictionModel) -> None:
        self.prediction.register_model(descriptor, model)

    def start_main(self, behavior_id: str, delay: int = 0, start_at: int = 0) -> None:
        self.engine.start_main(behavior_id, delay, start_at)

    # -- runtime -----------------------------------------------------------------

    def step_round(self) -> int:
        return self.engine.step_round()

    def advertise(self) -> int:
        return self.negotiation.advertise()

    def publish(self, event: Event) -> int:
        return self.dispatcher.publish(event)

    @property
    def goals_executed(self) -> int:
        return self.engine.goals_executed

    def diagnostics(self) -> list[str]:
        out = []
        for inst in self.engine.stalled():
            out.append(f"{self.node_id}: behavior {inst.behavior.id} stalled in {inst.current_state}")
        for inst in self.engine.suspended():
            out.append(f"{self.node_id}: behavior {inst.behavior.id} suspended on "
                       f"invocation {inst.awaiting}")
        for iid, service in sorted(self.negotiation.pending_needs.items()):
            out.append(f"{self.node_id}: need {iid} for {service} unresolved")
        return out

    def snapshot(self) -> dict[str, Any]:
        return {
            "goals_executed": self.engine.goals_executed,
            "main_iterations": self.engine.main_iterations,
            "service_runs": self.engine.service_runs,
            "behaviors": self.knowledge.behaviors.ids(),
            "services": {s.id: str(s.offer_modes)
                         for s in sorted(self.knowledge.services, key=lambda s: s.id)},
            "ask_modes": self.negotiation.ask_modes.snapshot(),
            "requests_sent": self.negotiation.requests_sent,
            "rules": self.autonomic.snapshot(),
            "quarantined_models": sorted(self.prediction.quarantined),
        }
