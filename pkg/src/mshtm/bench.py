"""Paired hybrid-vs-monolithic clustering benchmark.

Timings come from runs without memory tracing; peak memory from a second
pair of runs under tracemalloc, since tracing slows pure-Python stages
unevenly and would distort the time ratio.
"""

from __future__ import annotations

import dataclasses
import gc
import time
from dataclasses import dataclass
from typing import Sequence

from .corpus import CleanDocument
from .pipeline import PipelineConfig, run_baseline, run_mshtm_detailed


@dataclass(frozen=True)
class EfficiencyReport:
    n_sentences: int
    hybrid_seconds: float
    monolithic_seconds: float
    hybrid_peak_bytes: int
    monolithic_peak_bytes: int
    hybrid_clusters: int
    monolithic_clusters: int

    @property
    def speedup(self) -> float:
        return self.monolithic_seconds / self.hybrid_seconds

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["speedup"] = self.speedup
        return out


def _timed(fn, repeats: int):
    best = float("inf")
    for _ in range(repeats):
        gc.collect()
        t0 = time.perf_counter()
        value = fn()
        best = min(best, time.perf_counter() - t0)
    return value, best


def compare_efficiency(
    cfg: PipelineConfig, documents: Sequence[CleanDocument], repeats: int = 1
) -> EfficiencyReport:
    """Time both paths (best of ``repeats``), then measure their peak memory."""
    plain = dataclasses.replace(cfg, out_dir=None, trace_memory=False)
    traced = dataclasses.replace(plain, trace_memory=True)

    hybrid, t_hybrid = _timed(lambda: run_mshtm_detailed(plain, documents), repeats)
    mono, t_mono = _timed(lambda: run_baseline(plain, documents), repeats)

    gc.collect()
    hybrid_mem = run_mshtm_detailed(traced, documents).instrument.peak_bytes or 0
    gc.collect()
    mono_mem = run_baseline(traced, documents).instrument.peak_bytes or 0

    return EfficiencyReport(
        n_sentences=mono.n_sentences,
        hybrid_seconds=t_hybrid,
        monolithic_seconds=t_mono,
        hybrid_peak_bytes=hybrid_mem,
        monolithic_peak_bytes=mono_mem,
        hybrid_clusters=len(hybrid.report.subtopics),
        monolithic_clusters=mono.labels.n_clusters,
    )
