"""Run metrics and the CSV row format shared with the benchmark tooling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

CSV_HEADER = ("scenario,engine,N,seed,throughput_tps,p50_ms,p95_ms,p99_ms,"
              "accepted,rejected,delayed")


def nearest_rank(samples: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest sample."""
    if not samples:
        return math.nan
    if not 0 < p <= 100:
        raise ValueError("percentile must be in (0, 100]")
    ordered = sorted(samples)
    k = max(1, math.ceil(p / 100 * len(ordered)))
    return ordered[k - 1]


@dataclass
class Metrics:
    scenario: str
    engine: str
    nodes: int
    seed: int
    measure_ms: float
    successes: int = 0
    failures: int = 0
    timeouts: int = 0
    latencies: list[float] = field(default_factory=list)
    accepted: int = 0
    rejected: int = 0
    delayed: int = 0
    busy_ms: list[float] = field(default_factory=list)
    end_time: float = 0.0
    max_in_flight: int = 0

    @property
    def throughput(self) -> float:
        """Successful responses per second inside the measurement window."""
        return self.successes / (self.measure_ms / 1000.0)

    def percentile(self, p: float) -> float:
        return nearest_rank(self.latencies, p)

    def csv_row(self) -> str:
        return ",".join([
            self.scenario, self.engine, str(self.nodes), str(self.seed),
            f"{self.throughput:.3f}", f"{self.percentile(50):.3f}",
            f"{self.percentile(95):.3f}", f"{self.percentile(99):.3f}",
            str(self.accepted), str(self.rejected), str(self.delayed),
        ])
