"""Wall-clock timing of pipeline stages."""

import time
from contextlib import contextmanager


class StageTimer:
    """Accumulates elapsed seconds per stage name."""

    def __init__(self):
        self.durations = {}
        self.prev_time = None

    @contextmanager
    def measure(self, stage):
        self.prev_time = time.perf_counter()
        try:
            yield self
        finally:
            elapsed = time.perf_counter() - self.prev_time
            self.durations[stage] = self.durations.get(stage, 0.0) + elapsed

    def elapsed(self, stage):
        return self.durations.get(stage, 0.0)

    def total(self):
        return sum(self.durations.values())
