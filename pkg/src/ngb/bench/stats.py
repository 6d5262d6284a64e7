"""Distribution statistics with the nearest-rank percentile rule."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from ..errors import EmptyInputError

PERCENTILES = {"p5": 5, "p25": 25, "median": 50, "p75": 75, "p95": 95, "p99": 99}


def nearest_rank(sorted_values: Sequence[int], p) -> int:
    """Element at 1-based rank ``ceil(p/100 * n)`` of an ascending sequence (rank clamped to >= 1)."""
    n = len(sorted_values)
    if n == 0:
        raise EmptyInputError("percentile of an empty sample")
    if not 0 <= p <= 100:
        raise ValueError(f"percentile {p} outside [0, 100]")
    # exact rational arithmetic: 5/100 * 100 must give rank 5, not 6
    rank = math.ceil(Fraction(str(p)) * n / 100)
    return sorted_values[max(rank, 1) - 1]


@dataclass(frozen=True)
class Stats:
    count: int
    min: int
    p5: int
    p25: int
    median: int
    p75: int
    p95: int
    p99: int
    max: int
    mean: float
    stddev: float

    @property
    def iqr(self) -> int:
        return self.p75 - self.p25

    def to_dict(self) -> dict:
        return asdict(self)


def compute_stats(samples: Sequence[int]) -> Stats:
    """Summary of latency samples in ns. Standard deviation is the population one."""
    if len(samples) == 0:
        raise EmptyInputError("compute_stats needs at least one sample")
    ordered = sorted(int(v) for v in samples)
    arr = np.asarray(ordered, dtype=np.float64)
    return Stats(
        count=len(ordered),
        min=ordered[0],
        max=ordered[-1],
        mean=float(arr.mean()),
        stddev=float(arr.std()),
        **{name: nearest_rank(ordered, p) for name, p in PERCENTILES.items()},
    )
