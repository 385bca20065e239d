"""Space-Saving frequent-items summary over a bounded set of counters."""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["MonitoredItem", "FrequencyThresholds", "SpaceSavingSketch", "frequent_items"]


@dataclass
class MonitoredItem:
    item: str
    count: int
    error: int

    @property
    def guaranteed(self) -> int:
        return self.count - self.error


@dataclass(frozen=True)
class FrequencyThresholds:
    """Minimum occurrences and minimum support an item needs to be frequent."""

    minimum_occurrences: int = 5
    frequency_threshold: float = 0.5

    def __post_init__(self) -> None:
        if isinstance(self.minimum_occurrences, bool) or not isinstance(self.minimum_occurrences, int) \
                or self.minimum_occurrences < 1:
            raise ValueError("minimum_occurrences must be a positive integer")
        if not 0 < self.frequency_threshold <= 1:
            raise ValueError("frequency_threshold must lie in (0, 1]")


class SpaceSavingSketch:
    """At most ``capacity`` counters; every monitored count over-estimates
    the true frequency by at most its recorded error.

    On overflow the oldest counter with the minimum count is replaced.
    """

    def __init__(self, capacity: int = 16) -> None:
        if isinstance(capacity, bool) or not isinstance(capacity, int) or capacity < 1:
            raise ValueError("capacity must be a positive integer")
        self.capacity = capacity
        self._counters: dict[str, MonitoredItem] = {}
        self.total = 0

    def observe(self, item: str) -> None:
        self.total += 1
        counter = self._counters.get(item)
        if counter is not None:
            counter.count += 1
            return
        if len(self._counters) < self.capacity:
            self._counters[item] = MonitoredItem(item, 1, 0)
            return
        victim = min(self._counters.values(), key=lambda c: c.count)
        del self._counters[victim.item]
        self._counters[item] = MonitoredItem(item, victim.count + 1, victim.count)

    def reset(self) -> None:
        self._counters.clear()
        self.total = 0

    def counters(self) -> list[MonitoredItem]:
        return [MonitoredItem(c.item, c.count, c.error) for c in self._counters.values()]

    def get(self, item: str) -> MonitoredItem | None:
        c = self._counters.get(item)
        return None if c is None else MonitoredItem(c.item, c.count, c.error)

    def estimate(self, item: str) -> int:
        c = self._counters.get(item)
        return 0 if c is None else c.count

    def __len__(self) -> int:
        return len(self._counters)

    def __contains__(self, item: object) -> bool:
        return item in self._counters


def frequent_items(sketch: SpaceSavingSketch, thresholds: FrequencyThresholds,
                   raw_counts: bool = False) -> list[tuple[str, int, float]]:
    """Items passing both the occurrence and the support threshold.

    Uses the guaranteed count ``count - error`` unless ``raw_counts`` is set.
    Sorted by count descending, then item.
    """
    n = sketch.total
    if n == 0:
        return []
    out = []
    for c in sketch.counters():
        g = c.count if raw_counts else c.guaranteed
        if g >= thresholds.minimum_occurrences and g / n >= thresholds.frequency_threshold:
            out.append((c.item, g, g / n))
    out.sort(key=lambda r: (-r[1], r[0]))
    return out
