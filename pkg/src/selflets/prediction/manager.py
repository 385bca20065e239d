"""Prediction Manager and the plugin contract for prediction models."""

from __future__ import annotations

import abc
from dataclasses import dataclass
from typing import Any, Callable

from ..dispatcher import DispatchError, Dispatcher, _check_pattern, matches
from ..model import Event

__all__ = [
    "DescriptorError",
    "PredictionManager",
    "PredictionModel",
    "PredictionModelDescriptor",
    "available_models",
    "create_model",
    "model_factory",
]


class DescriptorError(ValueError):
    pass


@dataclass(frozen=True)
class PredictionModelDescriptor:
    """Event kinds a model consumes (patterns) and produces (exact kinds)."""

    model_name: str
    consumes: frozenset[str]
    produces: frozenset[str]

    def __post_init__(self) -> None:
        object.__setattr__(self, "consumes", frozenset(self.consumes))
        object.__setattr__(self, "produces", frozenset(self.produces))
        if not self.model_name:
            raise DescriptorError("model_name must be non-empty")
        if not self.consumes:
            raise DescriptorError(f"{self.model_name}: consumes is empty")
        try:
            for p in self.consumes:
                _check_pattern(p)
        except DispatchError as exc:
            raise DescriptorError(f"{self.model_name}: {exc}") from None
        loops = sorted(k for k in self.produces if any(matches(p, k) for p in self.consumes))
        if loops:
            raise DescriptorError(f"{self.model_name}: produces {loops} which it also consumes")

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.model_name, "consumes": sorted(self.consumes),
                "produces": sorted(self.produces)}


class PredictionModel(abc.ABC):
    """Plugin contract. Models only affect the node through returned events.

    Models may append human-readable notes to ``diagnostics``; the manager
    drains them into ``model_diagnostic`` events after each call.
    """

    diagnostics: list[str]

    @abc.abstractmethod
    def on_event(self, event: Event) -> list[Event]:
        ...

    def reset(self) -> None:
        pass


_FACTORIES: dict[str, Callable[..., PredictionModel]] = {}


def model_factory(name: str) -> Callable[[Callable[..., PredictionModel]], Callable[..., PredictionModel]]:
    """Register a model factory under ``name`` for scenario files."""

    def deco(fn: Callable[..., PredictionModel]) -> Callable[..., PredictionModel]:
        if name in _FACTORIES:
            raise DescriptorError(f"duplicate model factory {name!r}")
        _FACTORIES[name] = fn
        return fn

    return deco


def available_models() -> list[str]:
    return sorted(_FACTORIES)


def create_model(name: str, **params: Any) -> PredictionModel:
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise DescriptorError(f"unknown prediction model {name!r}") from None
    return factory(**params)


class PredictionManager:
    """Routes dispatcher events to registered models and publishes their forecasts."""

    component = "prediction_manager"

    def __init__(self, dispatcher: Dispatcher, source: str = "",
                 clock: Callable[[], int] | None = None) -> None:
        self.dispatcher = dispatcher
        self.source = source
        self.clock = clock or (lambda: 0)
        self._models: dict[str, tuple[PredictionModelDescriptor, PredictionModel]] = {}
        self.quarantined: set[str] = set()

    @property
    def models(self) -> list[str]:
        return list(self._models)

    def register_model(self, descriptor: PredictionModelDescriptor, model: PredictionModel) -> None:
        if descriptor.model_name in self._models:
            raise DescriptorError(f"duplicate model name {descriptor.model_name!r}")
        self._models[descriptor.model_name] = (descriptor, model)
        for pattern in sorted(descriptor.consumes):
            self.dispatcher.subscribe(self.component, pattern, self.route_event)

    def _diagnostic(self, model: str, reason: str) -> None:
        self.dispatcher.publish(Event("model_failed", {"model": model, "reason": reason},
                                      self.source, self.clock()))

    def route_event(self, event: Event) -> int:
        """Forward ``event`` to every interested live model; returns how many saw it."""
        routed = 0
        for name, (descriptor, model) in self._models.items():
            if name in self.quarantined or not any(matches(p, event.kind) for p in descriptor.consumes):
                continue
            routed += 1
            try:
                forecasts = list(model.on_event(event))
                bad = [f.kind for f in forecasts if f.kind not in descriptor.produces]
                if bad:
                    raise DescriptorError(f"emitted undeclared kinds {sorted(set(bad))}")
            except Exception as exc:  # a failing plugin must not take the node down
                self.quarantined.add(name)
                self._diagnostic(name, f"{type(exc).__name__}: {exc}")
                continue
            notes = getattr(model, "diagnostics", None)
            while notes:
                self.dispatcher.publish(Event("model_diagnostic", {"model": name, "note": notes.pop(0)},
                                              self.source, self.clock()))
            for f in forecasts:
                self.dispatcher.publish(f)
        return routed
