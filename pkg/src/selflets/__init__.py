"""Deterministic simulator for networks of autonomic SelfLet nodes."""

from .autonomic import AutonomicManager, Rule, teach_frequent_service_rule
from .dispatcher import Broker, CountingMode, Dispatcher, EventQueue, MessageMeter
from .engine import BehaviorEngine, ServiceNotAvailable
from .knowledge import Knowledge
from .model import (
    AskMode,
    Behavior,
    Event,
    Idle,
    InvokeAbility,
    InvokeService,
    Message,
    OfferModeSet,
    Service,
    State,
    Transition,
    validate_behavior,
)
from .negotiation import NegotiationManager
from .node import SelfLet
from .prediction import (
    FrequencyThresholds,
    FrequentServiceModel,
    PredictionManager,
    PredictionModel,
    PredictionModelDescriptor,
    SpaceSavingSketch,
    frequent_items,
)
from .simulator import MetricsReport, Scenario, ScenarioError, export_metrics, load_scenario, run

__version__ = "0.1.0"

__all__ = [
    "AskMode",
    "AutonomicManager",
    "Behavior",
    "BehaviorEngine",
    "Broker",
    "CountingMode",
    "Dispatcher",
    "Event",
    "EventQueue",
    "FrequencyThresholds",
    "FrequentServiceModel",
    "Idle",
    "InvokeAbility",
    "InvokeService",
    "Knowledge",
    "Message",
    "MessageMeter",
    "MetricsReport",
    "NegotiationManager",
    "OfferModeSet",
    "PredictionManager",
    "PredictionModel",
    "PredictionModelDescriptor",
    "Rule",
    "Scenario",
    "ScenarioError",
    "SelfLet",
    "Service",
    "ServiceNotAvailable",
    "SpaceSavingSketch",
    "State",
    "Transition",
    "export_metrics",
    "frequent_items",
    "load_scenario",
    "run",
    "teach_frequent_service_rule",
    "validate_behavior",
]
