"""Prediction subsystem: model plugins, their manager and the built-in
frequent-service model."""

from .frequent import FREQUENT_SERVICE, FrequentServiceModel, frequent_service_descriptor
from .manager import (
    DescriptorError,
    PredictionManager,
    PredictionModel,
    PredictionModelDescriptor,
    available_models,
    create_model,
    model_factory,
)
from .sketch import FrequencyThresholds, MonitoredItem, SpaceSavingSketch, frequent_items

__all__ = [
    "DescriptorError",
    "FREQUENT_SERVICE",
    "FrequencyThresholds",
    "FrequentServiceModel",
    "MonitoredItem",
    "PredictionManager",
    "PredictionModel",
    "PredictionModelDescriptor",
    "SpaceSavingSketch",
    "available_models",
    "create_model",
    "frequent_items",
    "frequent_service_descriptor",
    "model_factory",
]
