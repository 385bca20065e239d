"""Deterministic discrete-event harness for networks of SelfLets.

Each tick: advertisements (when due), then alternate one round-robin step
of every node's behavior engine with a full drain of the global queue until
the network is quiescent, then a metrics row is recorded.  Ticks run from 0
to ``duration`` inclusive.
"""

from __future__ import annotations

import csv
import io
import json
import random
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .autonomic import Rule, RuleError
from .dispatcher import Broker, CountingMode, EventQueue, MessageMeter
from .guards import GuardSyntaxError
from .model import (
    AskMode,
    Behavior,
    Idle,
    InvokeService,
    Message,
    Service,
    State,
    Transition,
    validate_behavior,
)
from .node import SelfLet
from .prediction import DescriptorError, PredictionModelDescriptor, create_model

__all__ = [
    "AdvertisementConfig",
    "GeneratorSpec",
    "MainSpec",
    "MetricsReport",
    "ModelSpec",
    "NodeSpec",
    "Scenario",
    "ScenarioError",
    "SimClock",
    "builtin_scenario",
    "export_metrics",
    "goal_request_costs",
    "load_scenario",
    "resolve_scenario_path",
    "run",
    "scenario_from_dict",
]

BUILTIN_SCENARIOS = ("teach_propagation",)


class ScenarioError(ValueError):
    """Scenario parse or validation failure, with a location such as ``file:nodes[S1].services``."""

    def __init__(self, message: str, location: str = "") -> None:
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


class SimClock:
    def __init__(self) -> None:
        self.tick = 0

    def __call__(self) -> int:
        return self.tick


# -- scenario model ---------------------------------------------------------------


@dataclass(frozen=True)
class MainSpec:
    behavior: str
    delay: int = 0
    start: int = 0


@dataclass(frozen=True)
class ModelSpec:
    name: str
    model: str
    consumes: tuple[str, ...]
    produces: tuple[str, ...]
    params: Mapping[str, Any] = field(default_factory=dict)

    @property
    def descriptor(self) -> PredictionModelDescriptor:
        return PredictionModelDescriptor(self.name, frozenset(self.consumes), frozenset(self.produces))


@dataclass(frozen=True)
class NodeSpec:
    id: str
    behaviors: tuple[Behavior, ...] = ()
    services: tuple[Service, ...] = ()
    main: tuple[MainSpec, ...] = ()
    ask_modes: Mapping[str, str] = field(default_factory=dict)
    rules: tuple[Rule, ...] = ()
    models: tuple[ModelSpec, ...] = ()
    knowledge: Mapping[str, Any] = field(default_factory=dict)
    attributes: Mapping[str, str] = field(default_factory=dict)
    abilities: tuple[str, ...] | None = None
    learner_advertises: bool = False


@dataclass(frozen=True)
class GeneratorSpec:
    """Periodic goal source: the node's main behavior invokes ``service`` every ``period`` ticks."""

    node: str
    service: str
    period: int
    start: int | None = None

    @property
    def behavior_id(self) -> str:
        return f"generator:{self.service}"

    def behavior(self) -> Behavior:
        return Behavior(self.behavior_id,
                        (State("request", InvokeService(self.service)), State("done", Idle(), True)),
                        "request", (Transition("request", "done", "true"),))


@dataclass(frozen=True)
class AdvertisementConfig:
    mode: str = "one_shot"
    period: int | None = None

    def due(self, tick: int) -> bool:
        if self.mode == "periodic":
            return tick % self.period == 0
        return tick == 0


@dataclass(frozen=True)
class Scenario:
    name: str
    nodes: tuple[NodeSpec, ...]
    generators: tuple[GeneratorSpec, ...] = ()
    duration: int = 1000
    seed: int = 0
    counting_mode: CountingMode = CountingMode.REQUESTS_ONLY
    advertisements: AdvertisementConfig = AdvertisementConfig()
    policy_enabled: bool = True
    provider_expiry: int | None = None
    steps_per_tick: int = 10_000
    source: str = ""

    def with_overrides(self, duration: int | None = None, seed: int | None = None,
                       policy: bool | None = None, counting_mode: str | None = None) -> Scenario:
        changes: dict[str, Any] = {}
        if duration is not None:
            if duration < 0:
                raise ScenarioError("duration must be non-negative")
            changes["duration"] = duration
        if seed is not None:
            changes["seed"] = seed
        if policy is not None:
            changes["policy_enabled"] = policy
        if counting_mode is not None:
            changes["counting_mode"] = CountingMode(counting_mode)
        return replace(self, **changes)

    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def to_dict(self) -> dict[str, Any]:
        ads: dict[str, Any] = {"mode": self.advertisements.mode}
        if self.advertisements.period is not None:
            ads["period"] = self.advertisements.period
        return {
            "name": self.name,
            "duration": self.duration,
            "seed": self.seed,
            "counting_mode": self.counting_mode.value,
            "policy_enabled": self.policy_enabled,
            "provider_expiry": self.provider_expiry,
            "steps_per_tick": self.steps_per_tick,
            "advertisements": ads,
            "generators": [{"node": g.node, "service": g.service, "period": g.period,
                            **({"start": g.start} if g.start is not None else {})}
                           for g in self.generators],
            "nodes": [_node_to_dict(n) for n in self.nodes],
        }


def _node_to_dict(n: NodeSpec) -> dict[str, Any]:
    d: dict[str, Any] = {
        "id": n.id,
        "behaviors": [b.to_dict() for b in n.behaviors],
        "services": [s.to_dict() for s in n.services],
        "main": [{"behavior": m.behavior, "delay": m.delay, "start": m.start} for m in n.main],
        "ask_modes": dict(n.ask_modes),
        "rules": [r.to_dict() for r in n.rules],
        "prediction_models": [{"name": m.name, "model": m.model, "consumes": list(m.consumes),
                               "produces": list(m.produces), "params": dict(m.params)}
                              for m in n.models],
        "knowledge": dict(n.knowledge),
        "attributes": dict(n.attributes),
        "learner_advertises": n.learner_advertises,
    }
    if n.abilities is not None:
        d["abilities"] = list(n.abilities)
    return d


# -- loading -------------------------------------------------------------------------


def _int(value: Any, what: str, loc: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ScenarioError(f"{what} must be an integer >= {minimum}, got {value!r}", loc)
    return value


def _parse_node(data: Mapping[str, Any], loc: str) -> NodeSpec:
    if not isinstance(data, Mapping):
        raise ScenarioError("node spec must be an object", loc)
    node_id = data.get("id")
    if not isinstance(node_id, str) or not node_id:
        raise ScenarioError("node id must be a non-empty string", loc)
    loc = f"{loc}[{node_id}]"

    behaviors: list[Behavior] = []
    for i, bd in enumerate(data.get("behaviors", [])):
        try:
            b = Behavior.from_dict(bd)
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"malformed behavior: {exc}", f"{loc}.behaviors[{i}]") from None
        defects = validate_behavior(b)
        if defects:
            raise ScenarioError(f"invalid behavior {b.id}: {'; '.join(defects)}",
                                f"{loc}.behaviors[{b.id}]")
        if any(x.id == b.id for x in behaviors):
            raise ScenarioError(f"duplicate behavior {b.id}", f"{loc}.behaviors[{b.id}]")
        behaviors.append(b)
    known = {b.id for b in behaviors}

    services: list[Service] = []
    for i, sd in enumerate(data.get("services", [])):
        try:
            s = Service.from_dict(sd)
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"malformed service: {exc}", f"{loc}.services[{i}]") from None
        if (s.offer_modes.can_do or s.offer_modes.can_teach) and s.behavior not in known:
            raise ScenarioError(f"unknown behavior {s.behavior}", f"{loc}.services[{s.id}]")
        services.append(s)

    main = []
    for i, md in enumerate(data.get("main", [])):
        if md.get("behavior") not in known:
            raise ScenarioError(f"unknown behavior {md.get('behavior')}", f"{loc}.main[{i}]")
        main.append(MainSpec(md["behavior"], _int(md.get("delay", 0), "delay", f"{loc}.main[{i}]"),
                             _int(md.get("start", 0), "start", f"{loc}.main[{i}]")))

    ask_modes = {}
    for service, mode in data.get("ask_modes", {}).items():
        try:
            ask_modes[service] = AskMode.parse(mode).value
        except ValueError as exc:
            raise ScenarioError(str(exc), f"{loc}.ask_modes[{service}]") from None

    rules: list[Rule] = []
    for i, rd in enumerate(data.get("rules", [])):
        try:
            rule = Rule.from_dict(rd)
        except (KeyError, TypeError, RuleError, GuardSyntaxError, ValueError) as exc:
            raise ScenarioError(f"invalid rule: {exc}", f"{loc}.rules[{i}]") from None
        if any(r.name == rule.name for r in rules):
            raise ScenarioError(f"duplicate rule {rule.name}", f"{loc}.rules[{rule.name}]")
        rules.append(rule)

    models: list[ModelSpec] = []
    for i, md in enumerate(data.get("prediction_models", [])):
        mloc = f"{loc}.prediction_models[{i}]"
        try:
            spec = ModelSpec(md.get("name", md["model"]), md["model"], tuple(md["consumes"]),
                             tuple(md["produces"]), dict(md.get("params", {})))
            spec.descriptor
            create_model(spec.model, **spec.params)
        except (KeyError, TypeError, ValueError, DescriptorError) as exc:
            raise ScenarioError(f"invalid prediction model: {exc}", mloc) from None
        models.append(spec)

    abilities = data.get("abilities")
    return NodeSpec(
        node_id, tuple(behaviors), tuple(services), tuple(main), ask_modes, tuple(rules),
        tuple(models), dict(data.get("knowledge", {})), dict(data.get("attributes", {})),
        tuple(abilities) if abilities is not None else None,
        bool(data.get("learner_advertises", False)),
    )


def scenario_from_dict(data: Mapping[str, Any], origin: str = "<scenario>") -> Scenario:
    """Build and validate a Scenario; errors carry ``origin`` and the element path."""
    if not isinstance(data, Mapping):
        raise ScenarioError("scenario must be a JSON object", origin)
    raw_nodes = data.get("nodes")
    if not isinstance(raw_nodes, list) or not raw_nodes:
        raise ScenarioError("node list is empty", f"{origin}:nodes")
    nodes = [_parse_node(nd, f"{origin}:nodes") for nd in raw_nodes]
    ids = [n.id for n in nodes]
    for nid in ids:
        if ids.count(nid) > 1:
            raise ScenarioError(f"duplicate node id {nid}", f"{origin}:nodes[{nid}]")
    offered = {s.id for n in nodes for s in n.services}

    generators = []
    for i, gd in enumerate(data.get("generators", [])):
        gloc = f"{origin}:generators[{i}]"
        if gd.get("node") not in ids:
            raise ScenarioError(f"unknown node {gd.get('node')}", gloc)
        if gd.get("service") not in offered:
            raise ScenarioError(f"service {gd.get('service')} is not offered by any node", gloc)
        start = gd.get("start")
        generators.append(GeneratorSpec(gd["node"], gd["service"], _int(gd.get("period"), "period", gloc, 1),
                                        None if start is None else _int(start, "start", gloc)))

    ads = data.get("advertisements", {"mode": "one_shot"})
    if isinstance(ads, str):
        ads = {"mode": ads}
    if ads.get("mode") not in ("one_shot", "periodic"):
        raise ScenarioError(f"unknown advertisement mode {ads.get('mode')!r}", f"{origin}:advertisements")
    period = ads.get("period")
    if ads["mode"] == "periodic":
        period = _int(period, "advertisement period", f"{origin}:advertisements", 1)
    try:
        counting = CountingMode(data.get("counting_mode", "requests_only"))
    except ValueError:
        raise ScenarioError(f"unknown counting mode {data.get('counting_mode')!r}",
                            f"{origin}:counting_mode") from None
    expiry = data.get("provider_expiry")
    return Scenario(
        name=str(data.get("name", Path(origin).stem)),
        nodes=tuple(nodes),
        generators=tuple(generators),
        duration=_int(data.get("duration", 1000), "duration", f"{origin}:duration"),
        seed=_int(data.get("seed", 0), "seed", f"{origin}:seed"),
        counting_mode=counting,
        advertisements=AdvertisementConfig(ads["mode"], period),
        policy_enabled=bool(data.get("policy_enabled", True)),
        provider_expiry=None if expiry is None else _int(expiry, "provider_expiry",
                                                         f"{origin}:provider_expiry", 1),
        steps_per_tick=_int(data.get("steps_per_tick", 10_000), "steps_per_tick",
                            f"{origin}:steps_per_tick", 1),
        source=origin,
    )


def resolve_scenario_path(name: str | Path) -> Path:
    """A filesystem path, or the name of a built-in scenario (``.json`` optional)."""
    path = Path(name)
    if path.exists():
        return path
    stem = path.name[:-5] if path.name.endswith(".json") else path.name
    if stem in BUILTIN_SCENARIOS:
        return Path(str(resources.files("selflets") / "scenarios" / f"{stem}.json"))
    raise ScenarioError(f"scenario file not found: {name}")


def load_scenario(path: str | Path) -> Scenario:
    resolved = resolve_scenario_path(path)
    try:
        data = json.loads(resolved.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"JSON parse error at line {exc.lineno} column {exc.colno}: {exc.msg}",
                            str(path)) from None
    return scenario_from_dict(data, str(path))


def builtin_scenario(name: str = "teach_propagation") -> Scenario:
    return load_scenario(f"{name}.json")


# -- metrics -----------------------------------------------------------------------


@dataclass
class MetricsReport:
    scenario: str
    seed: int
    duration: int
    counting_mode: str
    policy_enabled: bool
    total_messages: int = 0
    convergence_tick: int | None = None
    stalled: bool = False
    diagnostics: list[str] = field(default_factory=list)
    messages_by_kind: dict[str, int] = field(default_factory=dict)
    nodes: dict[str, dict[str, Any]] = field(default_factory=dict)
    series: list[dict[str, Any]] = field(default_factory=list)

    def goals(self, node: str) -> int:
        return self.nodes[node]["goals_executed"]

    def messages_at(self, tick: int) -> int:
        return self.series[tick]["messages_total"]

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "duration": self.duration,
            "counting_mode": self.counting_mode,
            "policy_enabled": self.policy_enabled,
            "total_messages": self.total_messages,
            "convergence_tick": self.convergence_tick,
            "stalled": self.stalled,
            "diagnostics": list(self.diagnostics),
            "messages_by_kind": dict(self.messages_by_kind),
            "nodes": self.nodes,
            "series": self.series,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> MetricsReport:
        return cls(**{k: data[k] for k in (
            "scenario", "seed", "duration", "counting_mode", "policy_enabled", "total_messages",
            "convergence_tick", "stalled", "diagnostics", "messages_by_kind", "nodes", "series")})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        node_ids = sorted(self.nodes)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tick", "messages_total", *(f"goals_{n}" for n in node_ids)])
        for row in self.series:
            w.writerow([row["tick"], row["messages_total"], *(row["goals"][n] for n in node_ids)])
        return buf.getvalue()


def export_metrics(report: MetricsReport, fmt: str, path: str | Path) -> None:
    if fmt == "json":
        text = report.to_json()
    elif fmt == "csv":
        text = report.to_csv()
    else:
        raise ValueError(f"unknown metrics format {fmt!r}")
    with open(path, "w", newline="") as fh:
        fh.write(text)


# -- running ---------------------------------------------------------------------


def build_network(scenario: Scenario, clock: SimClock) -> tuple[dict[str, SelfLet], Broker, EventQueue]:
    queue = EventQueue()
    broker = Broker(queue, MessageMeter(scenario.counting_mode))
    nodes: dict[str, SelfLet] = {}
    for spec in sorted(scenario.nodes, key=lambda n: n.id):
        node = SelfLet(spec.id, queue, broker, clock,
                       rng=random.Random(f"{scenario.seed}:{spec.id}"),
                       learner_advertises=spec.learner_advertises,
                       steps_per_tick=scenario.steps_per_tick)
        if spec.abilities is not None:
            for name in node.abilities.names():
                if name not in spec.abilities:
                    node.abilities.unregister(name)
        for key, value in spec.knowledge.items():
            node.knowledge.kb[key] = value
        node.knowledge.attributes.update(spec.attributes)
        for b in spec.behaviors:
            node.add_behavior(b)
        for s in spec.services:
            node.install_service(s)
        for service, mode in spec.ask_modes.items():
            node.set_ask_mode(service, mode)
        for m in spec.models:
            node.register_model(m.descriptor, create_model(m.model, **m.params))
        if scenario.policy_enabled:
            for r in spec.rules:
                node.install_rule(r)
        for m in spec.main:
            node.start_main(m.behavior, m.delay, m.start)
        nodes[spec.id] = node
    for g in scenario.generators:
        node = nodes[g.node]
        node.add_behavior(g.behavior())
        node.start_main(g.behavior_id, g.period, g.period if g.start is None else g.start)
    # Construction-time events (service_installed...) are not part of the run.
    while len(queue):
        queue.deliver_next()
    return nodes, broker, queue


def run(scenario: Scenario, trace: list[dict[str, Any]] | None = None,
        max_rounds: int = 100_000) -> MetricsReport:
    """Run ``scenario`` to completion; appends trace records to ``trace`` if given."""
    clock = SimClock()
    nodes, broker, queue = build_network(scenario, clock)
    ordered = [nodes[n] for n in sorted(nodes)]

    if trace is not None:
        for node in ordered:
            node.dispatcher.observers.append(
                lambda e, nid=node.node_id: trace.append(
                    {"tick": clock.tick, "channel": "local", "node": nid, "event": e.to_dict()}))

        def on_message(message: Message, targets: list[str]) -> None:
            trace.append({"tick": clock.tick, "channel": "remote", "topic": message.topic,
                          "sender": message.sender, "recipients": list(targets),
                          "counted": bool(targets) and broker.meter.counts(message),
                          "event": message.body.to_dict()})

        broker.observers.append(on_message)

    report = MetricsReport(scenario.name, scenario.seed, scenario.duration,
                           scenario.counting_mode.value, scenario.policy_enabled)
    last_total = 0
    for tick in range(scenario.duration + 1):
        clock.tick = tick
        if scenario.provider_expiry is not None:
            for node in ordered:
                node.knowledge.providers.expire(tick, scenario.provider_expiry)
        if scenario.advertisements.due(tick):
            for node in ordered:
                node.advertise()
        rounds = 0
        while True:
            steps = sum(node.step_round() for node in ordered)
            delivered = queue.drain()
            if not steps and not delivered:
                break
            rounds += 1
            if rounds >= max_rounds:
                report.diagnostics.append(f"tick {tick}: no quiescence after {max_rounds} rounds")
                break
        total = broker.meter.total
        if total > last_total:
            report.convergence_tick = tick
            last_total = total
        report.series.append({"tick": tick, "messages_total": total,
                              "goals": {n.node_id: n.goals_executed for n in ordered}})

    for node in ordered:
        report.diagnostics.extend(node.diagnostics())
    report.stalled = bool(report.diagnostics)
    report.total_messages = broker.meter.total
    report.messages_by_kind = dict(sorted(broker.meter.by_kind.items()))
    report.nodes = {n.node_id: n.snapshot() for n in ordered}
    return report


def goal_request_costs(trace: list[dict[str, Any]], node: str,
                       ask_mode: str | None = "do") -> list[tuple[int, int, int]]:
    """Per completed main-behavior iteration of ``node``: ``(tick, root, n)``
    where ``n`` counts the service requests it sent on that goal's behalf.

    Only requests in ``ask_mode`` are counted (all modes when None).
    """
    sent: dict[int, int] = {}
    out = []
    for rec in trace:
        ev = rec["event"]
        if rec["channel"] == "remote":
            if rec["sender"] == node and ev["kind"] == "service_request" and \
                    (ask_mode is None or ev["payload"]["ask_mode"] == ask_mode):
                root = ev["payload"]["root"]
                sent[root] = sent.get(root, 0) + len(rec["recipients"])
        elif rec["node"] == node and ev["kind"] == "goal_completed":
            root = ev["payload"]["root"]
            out.append((rec["tick"], root, sent.pop(root, 0)))
    return out
