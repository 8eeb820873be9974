"""Per-stage wall time and peak memory."""

from __future__ import annotations

import time
import tracemalloc
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field

try:
    import resource
except ImportError:  # pragma: no cover - non-POSIX
    resource = None


@dataclass
class StageRecord:
    name: str
    seconds: float
    peak_bytes: int | None = None


@dataclass
class Instrument:
    """Collects stage timings and named counters for one run.

    With ``trace_memory`` the Python-heap peak of each stage is sampled via
    tracemalloc (numpy buffers included). Without it, or when tracing cannot
    start, stages carry timings only and ``memory_sampling`` says why.
    """

    trace_memory: bool = False
    stages: list[StageRecord] = field(default_factory=list)
    counters: Counter = field(default_factory=Counter)
    memory_sampling: str = "off"
    _started_tracing: bool = field(default=False, repr=False)
    _origin: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.trace_memory:
            try:
                if not tracemalloc.is_tracing():
                    tracemalloc.start()
                    self._started_tracing = True
                self.memory_sampling = "tracemalloc"
                self._origin = tracemalloc.get_traced_memory()[0]
            except RuntimeError:  # pragma: no cover
                self.memory_sampling = "unavailable"

    @contextmanager
    def stage(self, name: str):
        sampling = self.memory_sampling == "tracemalloc"
        if sampling:
            tracemalloc.reset_peak()
        t0 = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - t0
            peak = None
            if sampling:
                # heap high-water mark above the level when the run began
                peak = max(tracemalloc.get_traced_memory()[1] - self._origin, 0)
            self.stages.append(StageRecord(name, elapsed, peak))

    def count(self, name: str, n: int = 1) -> None:
        self.counters[name] += n

    def close(self) -> None:
        if self._started_tracing:
            tracemalloc.stop()
            self._started_tracing = False

    @property
    def total_seconds(self) -> float:
        return sum(s.seconds for s in self.stages)

    @property
    def peak_bytes(self) -> int | None:
        peaks = [s.peak_bytes for s in self.stages if s.peak_bytes is not None]
        return max(peaks) if peaks else None

    def summary(self) -> dict:
        out = {
            "stages": [
                {"name": s.name, "seconds": s.seconds, "peak_bytes": s.peak_bytes} for s in self.stages
            ],
            "total_seconds": self.total_seconds,
            "peak_bytes": self.peak_bytes,
            "memory_sampling": self.memory_sampling,
            "counters": dict(sorted(self.counters.items())),
        }
        if resource is not None:
            # kilobytes on Linux; process lifetime, not per stage
            out["max_rss_kb"] = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
        return out
