"""Independent brute-force references used by the tests."""

from __future__ import annotations

import random
from collections import Counter


def exact_frequent(stream, minimum_occurrences, frequency_threshold):
    """Frequent items from exact counts, in (count desc, item) order."""
    n = len(stream)
    if n == 0:
        return []
    counts = Counter(stream)
    out = [(item, c, c / n) for item, c in counts.items()
           if c >= minimum_occurrences and c / n >= frequency_threshold]
    return sorted(out, key=lambda r: (-r[1], r[0]))


def random_streams(count, seed=1234, max_len=10_000, max_alphabet=64):
    """``count`` reproducible (stream, capacity) pairs, skewed so heavy hitters exist."""
    rng = random.Random(seed)
    for _ in range(count):
        alphabet = [f"s{i}" for i in range(rng.randint(1, max_alphabet))]
        length = rng.randint(0, max_len)
        weights = [1.0 / (rank + 1) ** rng.choice([0.0, 1.0, 2.0]) for rank in range(len(alphabet))]
        yield rng.choices(alphabet, weights, k=length), rng.choice([4, 8, 16]), len(alphabet)
