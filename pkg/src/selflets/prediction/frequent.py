"""Built-in model announcing services that outgoing requests hit frequently."""

from __future__ import annotations

from ..model import Event
from .manager import PredictionModel, PredictionModelDescriptor, model_factory
from .sketch import FrequencyThresholds, SpaceSavingSketch, frequent_items

__all__ = ["FREQUENT_SERVICE", "FrequentServiceModel", "frequent_service_descriptor"]

FREQUENT_SERVICE = "prediction.frequent_service"
SERVICE_REQUEST_OUT = "service_request_out"


def frequent_service_descriptor(name: str = "frequent_service",
                                consumes: str = SERVICE_REQUEST_OUT) -> PredictionModelDescriptor:
    return PredictionModelDescriptor(name, frozenset({consumes}), frozenset({FREQUENT_SERVICE}))


class FrequentServiceModel(PredictionModel):
    """Feeds requested service ids into a Space-Saving sketch and emits one
    ``prediction.frequent_service`` event per service when it turns frequent.

    With ``window`` set the sketch is reset after every ``window``
    observations, which also re-arms announcements.  Otherwise history is
    cumulative and a service is announced at most once.
    """

    def __init__(self, thresholds: FrequencyThresholds | None = None, capacity: int = 16,
                 window: int | None = None, raw_counts: bool = False, key: str = "service",
                 source: str = "frequent_service") -> None:
        if window is not None and window < 1:
            raise ValueError("window must be a positive number of observations")
        self.thresholds = thresholds or FrequencyThresholds()
        self.sketch = SpaceSavingSketch(capacity)
        self.window = window
        self.raw_counts = raw_counts
        self.key = key
        self.source = source
        self.announced: set[str] = set()
        self.ignored = 0
        self.diagnostics: list[str] = []

    def reset(self) -> None:
        self.sketch.reset()
        self.announced.clear()

    def on_event(self, event: Event) -> list[Event]:
        item = event.get(self.key)
        if not isinstance(item, str) or not item:
            self.ignored += 1
            self.diagnostics.append(f"missing {self.key!r} in {event.kind}")
            return []
        self.sketch.observe(item)
        out = []
        for service, count, support in frequent_items(self.sketch, self.thresholds, self.raw_counts):
            if service in self.announced:
                continue
            self.announced.add(service)
            out.append(Event(FREQUENT_SERVICE,
                             {"service": service, "support": support, "count": count},
                             self.source, event.timestamp))
        if self.window is not None and self.sketch.total >= self.window:
            self.reset()
        return out


@model_factory("frequent_service")
def _make(minimum_occurrences: int = 5, frequency_threshold: float = 0.5, capacity: int = 16,
          window: int | None = None, raw_counts: bool = False, source: str = "frequent_service",
          key: str = "service") -> FrequentServiceModel:
    return FrequentServiceModel(FrequencyThresholds(minimum_occurrences, frequency_threshold),
                                capacity, window, raw_counts, key, source)
