"""Wall-clock profiler for the sampling pipeline: median latency at batch 1
and median throughput at batch 16."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field

EXCLUSIVE_NOTE = "timings assume exclusive use of the machine (no concurrent load)"


@dataclass
class ProfileReport:
    latency_s: float | None = None
    throughput_ips: float | None = None
    warmup_runs: int = 2
    timed_runs: int = 5
    batch_sizes: tuple = (1, 16)
    note: str = EXCLUSIVE_NOTE
    per_batch_seconds: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "latency_s": self.latency_s,
            "throughput_ips": self.throughput_ips,
            "warmup_runs": self.warmup_runs,
            "timed_runs": self.timed_runs,
            "batch_sizes": list(self.batch_sizes),
            "note": self.note,
            "per_batch_seconds": dict(self.per_batch_seconds),
        }


class ProfileError(RuntimeError):
    """Pipeline failure during profiling; carries whatever was measured."""

    def __init__(self, message: str, partial_report: ProfileReport):
        super().__init__(message)
        self.partial_report = partial_report


def profile(run, batch_sizes=(1, 16), warmup_runs: int = 2, timed_runs: int = 5) -> ProfileReport:
    """Time ``run(batch_size)`` for each batch size.

    Discards the warmup runs and reports medians of the timed runs.  Latency
    comes from batch size 1, throughput (images/s) from the largest batch.
    """
    if timed_runs < 3:
        raise ValueError("timed_runs must be >= 3")
    if warmup_runs < 2:
        raise ValueError("warmup_runs must be >= 2")
    report = ProfileReport(warmup_runs=warmup_runs, timed_runs=timed_runs,
                           batch_sizes=tuple(batch_sizes))
    for bs in batch_sizes:
        try:
            for _ in range(warmup_runs):
                run(bs)
            times = []
            for _ in range(timed_runs):
                start = time.perf_counter()
                run(bs)
                times.append(time.perf_counter() - start)
        except Exception as exc:
            raise ProfileError(f"pipeline failed at batch size {bs}: {exc}", report) from exc
        median = statistics.median(times)
        report.per_batch_seconds[bs] = median
        if bs == 1:
            report.latency_s = median
    largest = max(batch_sizes)
    report.throughput_ips = largest / report.per_batch_seconds[largest]
    return report
