"""Negotiation manager: resolves service needs locally, remotely or through
discovery, and answers peers according to the offer modes of local services.

Wire protocol (message body event kinds):

``service_request``
    directed ask ``{service, requester, ask_mode, invocation_id, root}``
``service_discover``
    broadcast "who offers S?" ``{service, requester, invocation_id, root}``
``service_advertisement``
    ``{service, provider, modes}``, spontaneous or as a discovery answer
``service_result`` / ``service_transfer`` / ``service_referral`` / ``service_refusal``
    the single reply to a ``service_request``
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Iterable

from .dispatcher import Broker, Dispatcher
from .engine import BehaviorEngine, ServiceNotAvailable
from .knowledge import InvalidBehavior, Knowledge, ProviderEntry
from .model import AskMode, Behavior, Event, Message, NodeId, OfferModeSet, Service, ServiceId

__all__ = [
    "AskModePolicy",
    "NegotiationManager",
    "NoProvider",
    "Resolution",
    "ServiceRequest",
    "direct_topic",
    "select_provider",
]

DISCOVER_TOPIC = "discover"
ADVERTISE_TOPIC = "advertisement"


def direct_topic(node: NodeId) -> str:
    return f"node:{node}"


class NoProvider(LookupError):
    pass


class AskModePolicy:
    """Preferred ask mode per service, ``Do`` unless changed."""

    def __init__(self, defaults: dict[ServiceId, AskMode] | None = None) -> None:
        self._modes: dict[ServiceId, AskMode] = dict(defaults or {})

    def get(self, service: ServiceId) -> AskMode:
        return self._modes.get(service, AskMode.DO)

    def set(self, service: ServiceId, mode: AskMode) -> None:
        self._modes[service] = AskMode.parse(mode)

    def snapshot(self) -> dict[str, str]:
        return {s: m.value for s, m in sorted(self._modes.items())}


@dataclass(frozen=True)
class Resolution:
    kind: str  # "local" | "remote" | "discover"
    provider: NodeId | None = None
    mode: AskMode | None = None

    @classmethod
    def local(cls) -> Resolution:
        return cls("local")

    @classmethod
    def remote(cls, provider: NodeId, mode: AskMode) -> Resolution:
        return cls("remote", provider, mode)

    @classmethod
    def discover(cls) -> Resolution:
        return cls("discover")


@dataclass(frozen=True)
class ServiceRequest:
    service: ServiceId
    requester: NodeId
    ask_mode: AskMode
    invocation_id: int
    root: int = 0

    def to_event(self, timestamp: int = 0) -> Event:
        return Event("service_request",
                     {"service": self.service, "requester": self.requester,
                      "ask_mode": self.ask_mode.value, "invocation_id": self.invocation_id,
                      "root": self.root},
                     self.requester, timestamp)

    @classmethod
    def from_event(cls, event: Event) -> ServiceRequest:
        p = event.payload
        return cls(p["service"], p["requester"], AskMode.parse(p["ask_mode"]),
                   int(p["invocation_id"]), int(p.get("root", 0)))


def select_provider(candidates: Iterable[ProviderEntry], need_mode: AskMode) -> NodeId:
    """Most recently seen compatible provider, ties broken by node id."""
    compatible = [c for c in candidates if c.modes.supports(need_mode)]
    if not compatible:
        raise NoProvider(f"no provider offers {need_mode.value}")
    return min(compatible, key=lambda c: (-c.last_seen, c.node)).node


@dataclass
class _Need:
    service: ServiceId
    root: int
    announced: bool = False
    provider: NodeId | None = None
    mode: AskMode | None = None


class NegotiationManager:
    component = "negotiation_manager"

    def __init__(
        self,
        node_id: NodeId,
        knowledge: Knowledge,
        engine: BehaviorEngine,
        dispatcher: Dispatcher,
        broker: Broker | None = None,
        clock: Callable[[], int] | None = None,
        learner_advertises: bool = False,
    ) -> None:
        self.node_id = node_id
        self.knowledge = knowledge
        self.engine = engine
        self.dispatcher = dispatcher
        self.broker = broker
        self.clock = clock or (lambda: 0)
        self.learner_advertises = learner_advertises
        self.ask_modes = AskModePolicy()
        self.disabled_peers: set[NodeId] = set()
        # Services learned through teach transfers; not advertised unless learner_advertises.
        self.silent_services: set[ServiceId] = set()
        self._needs: dict[int, _Need] = {}
        self._serving: dict[int, ServiceRequest] = {}
        self._discovering: dict[ServiceId, list[int]] = {}
        self.requests_sent = 0

        dispatcher.subscribe(self.component, "service_needed", self._on_internal)
        dispatcher.subscribe(self.component, "service_completed", self._on_internal)
        dispatcher.subscribe(self.component, "service_failed", self._on_internal)
        if broker is not None:
            broker.register(node_id, self.on_message)
            for topic in (direct_topic(node_id), DISCOVER_TOPIC, ADVERTISE_TOPIC):
                broker.subscribe(node_id, topic)

    # -- helpers ---------------------------------------------------------------

    def _event(self, kind: str, **payload: Any) -> Event:
        return Event(kind, payload, self.node_id, self.clock())

    def _send(self, topic: str, body: Event) -> int:
        if self.broker is None:
            return 0
        return self.broker.send_remote(topic, self.node_id, body)

    @property
    def pending_needs(self) -> dict[int, ServiceId]:
        return {i: n.service for i, n in self._needs.items()}

    # -- resolution --------------------------------------------------------------

    def resolve_need(self, service: ServiceId, invocation_id: int = 0,
                     mode: AskMode | None = None) -> Resolution:
        """Local if runnable here, else a remote provider in the preferred
        (or given) mode, degrading to Do, else discovery."""
        if self.knowledge.is_local(service):
            return Resolution.local()
        preferred = mode or self.ask_modes.get(service)
        candidates = [e for e in self.knowledge.providers.get(service)
                      if e.node not in self.disabled_peers]
        for m in (preferred, AskMode.DO) if preferred is not AskMode.DO else (preferred,):
            try:
                return Resolution.remote(select_provider(candidates, m), m)
            except NoProvider:
                continue
        return Resolution.discover()

    def _on_internal(self, event: Event) -> None:
        if event.kind == "service_needed":
            iid = int(event.payload["invocation_id"])
            self._needs[iid] = _Need(event.payload["service"], int(event.get("root", 0)))
            self._advance(iid)
        else:
            self._on_run_finished(event)

    def _advance(self, iid: int, mode: AskMode | None = None, final: bool = False) -> None:
        need = self._needs.get(iid)
        if need is None:
            return
        r = self.resolve_need(need.service, iid, mode)
        if r.kind == "local":
            del self._needs[iid]
            try:
                self.engine.start_service_run(need.service, invocation_id=iid, root=need.root)
            except ServiceNotAvailable as exc:
                self._fail(iid, need, str(exc))
            return
        if not need.announced:
            need.announced = True
            self.dispatcher.publish(self._event("service_request_out", service=need.service,
                                                invocation_id=iid, root=need.root))
        if r.kind == "remote":
            need.provider, need.mode = r.provider, r.mode
            req = ServiceRequest(need.service, self.node_id, r.mode, iid, need.root)
            self.requests_sent += 1
            self._send(direct_topic(r.provider), req.to_event(self.clock()))
            return
        if final:
            self._fail(iid, need, "no provider found")
            return
        waiting = self._discovering.setdefault(need.service, [])
        waiting.append(iid)
        if len(waiting) > 1:
            return
        sent = self._send(DISCOVER_TOPIC, self._event("service_discover", service=need.service,
                                                      requester=self.node_id, invocation_id=iid,
                                                      root=need.root))
        if sent == 0:
            for other in self._discovering.pop(need.service):
                self._fail(other, self._needs[other], "no peers to discover from")

    def _fail(self, iid: int, need: _Need, reason: str) -> None:
        self._needs.pop(iid, None)
        self.dispatcher.publish(self._event("service_failed", service=need.service,
                                            invocation_id=iid, reason=reason))

    # -- serving peers ---------------------------------------------------------

    def handle_request(self, req: ServiceRequest) -> Event | None:
        """Answer a peer's request.

        Returns the reply event, or None when a Do request started a local
        run; its result is sent when the run finishes.
        """
        service = self.knowledge.services.get(req.service)
        modes = service.offer_modes if service is not None else OfferModeSet()
        if req.requester in self.disabled_peers:
            return self._refusal(req, "peer disabled")
        if req.ask_mode is AskMode.DO and modes.can_do:
            try:
                run = self.engine.start_service_run(req.service)
            except ServiceNotAvailable as exc:
                return self._refusal(req, str(exc))
            self._serving[run.invocation_id] = req
            return None
        if req.ask_mode is AskMode.TEACH and modes.can_teach:
            behavior = self.knowledge.behavior_for(req.service)
            if behavior is None:
                return self._refusal(req, "behavior missing")
            return self._event("service_transfer", service=req.service,
                               invocation_id=req.invocation_id, behavior=behavior.to_json())
        if req.ask_mode in (AskMode.KNOW_WHO_CAN_DO, AskMode.KNOW_WHO_CAN_TEACH) \
                and modes.supports(req.ask_mode):
            wanted = AskMode.DO if req.ask_mode is AskMode.KNOW_WHO_CAN_DO else AskMode.TEACH
            nodes = sorted(e.node for e in self.knowledge.providers.get(req.service)
                           if e.modes.supports(wanted) and e.node != req.requester)
            return self._event("service_referral", service=req.service,
                               invocation_id=req.invocation_id, mode=wanted.value,
                               providers=",".join(nodes))
        return self._refusal(req, f"{req.ask_mode.value} not offered")

    def _refusal(self, req: ServiceRequest, reason: str) -> Event:
        return self._event("service_refusal", service=req.service,
                           invocation_id=req.invocation_id, reason=reason)

    def _on_run_finished(self, event: Event) -> None:
        req = self._serving.pop(int(event.get("invocation_id", -1)), None)
        if req is None:
            return
        if event.kind == "service_completed":
            reply = self._event("service_result", service=req.service,
                                invocation_id=req.invocation_id, result=event.get("result"), ok=True)
        else:
            reply = self._refusal(req, str(event.get("reason", "execution failed")))
        self._send(direct_topic(req.requester), reply)

    def advertise(self) -> int:
        """Broadcast every offered service; returns the number of messages enqueued."""
        sent = 0
        for service in sorted(self.knowledge.services, key=lambda s: s.id):
            if service.offer_modes.empty or service.id in self.silent_services:
                continue
            sent += self._send(ADVERTISE_TOPIC, self._advertisement(service))
        return sent

    def _advertisement(self, service: Service) -> Event:
        return self._event("service_advertisement", service=service.id, provider=self.node_id,
                           modes=str(service.offer_modes))

    # -- teach -----------------------------------------------------------------

    def apply_teach(self, transfer: Event) -> bool:
        """Install a transferred behavior as a locally runnable service."""
        service_id = transfer.get("service")
        try:
            behavior = Behavior.from_json(transfer.payload["behavior"])
            self.knowledge.install_service(Service(service_id, behavior.id, OfferModeSet(can_do=True)),
                                           behavior)
        except (InvalidBehavior, KeyError, TypeError, ValueError) as exc:
            self.dispatcher.publish(self._event("teach_rejected", service=str(service_id),
                                                reason=str(exc)))
            return False
        for name in behavior.abilities():
            if name not in self.engine.abilities:
                self.dispatcher.publish(self._event("missing_ability", ability=name,
                                                    behavior=behavior.id))
        if not self.learner_advertises:
            self.silent_services.add(service_id)
        return True

    # -- inbound messages ------------------------------------------------------

    def on_message(self, message: Message) -> None:
        body = message.body
        p = body.payload
        kind = body.kind
        if kind == "service_request":
            req = ServiceRequest.from_event(body)
            self.dispatcher.publish(self._event("service_request_in", service=req.service,
                                                requester=req.requester, ask_mode=req.ask_mode.value))
            reply = self.handle_request(req)
            if reply is not None:
                self._send(direct_topic(req.requester), reply)
        elif kind == "service_discover":
            service = self.knowledge.services.get(p["service"])
            if service is not None and not service.offer_modes.empty \
                    and service.id not in self.silent_services:
                self._send(direct_topic(p["requester"]), self._advertisement(service))
        elif kind == "service_advertisement":
            self._on_advertisement(p["service"], p["provider"], OfferModeSet.parse(p["modes"]))
        else:
            self._on_reply(message.sender, body)

    def _on_advertisement(self, service: ServiceId, provider: NodeId, modes: OfferModeSet) -> None:
        waiting = self._discovering.pop(service, [])
        if waiting or service in self.knowledge.required_services():
            self.knowledge.update_provider(service, provider, modes, self.clock())
        for iid in waiting:
            self._advance(iid, final=True)

    def _touch(self, service: ServiceId, provider: NodeId) -> None:
        for entry in self.knowledge.providers.get(service):
            if entry.node == provider:
                self.knowledge.update_provider(service, provider, entry.modes, self.clock())

    def _on_reply(self, sender: NodeId, body: Event) -> None:
        p = body.payload
        iid = int(p.get("invocation_id", -1))
        need = self._needs.get(iid)
        if need is None:
            return
        kind = body.kind
        if kind == "service_result":
            self._touch(need.service, sender)
            del self._needs[iid]
            self.dispatcher.publish(self._event("service_completed", service=need.service,
                                                invocation_id=iid, result=p.get("result"),
                                                ok=bool(p.get("ok", True)), provider=sender))
        elif kind == "service_transfer":
            self._touch(need.service, sender)
            if self.apply_teach(body):
                self._advance(iid)
            else:
                self._advance(iid, mode=AskMode.DO, final=True)
        elif kind == "service_referral":
            wanted = AskMode.parse(p.get("mode", "do"))
            flags = OfferModeSet(can_do=wanted is AskMode.DO, can_teach=wanted is AskMode.TEACH)
            for node in filter(None, str(p.get("providers", "")).split(",")):
                if node != self.node_id:
                    self.knowledge.update_provider(need.service, node, flags, self.clock())
            self._advance(iid, mode=wanted, final=True)
        elif kind == "service_refusal":
            self.knowledge.providers.demote(need.service, sender)
            if need.mode is not AskMode.DO:
                self._advance(iid, mode=AskMode.DO, final=True)
            else:
                self._fail(iid, need, str(p.get("reason", "refused")))
