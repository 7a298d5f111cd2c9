"""Quantitative metrics over eval results, as pure functions.

All reductions accumulate in double precision; the geometric mean works in
log space to avoid overflow. Threshold comparisons are strict throughout:
a speedup exactly equal to p does not count toward fast_p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence


@dataclass(frozen=True)
class MetricConfig:
    p_thresholds: list[float] = field(default_factory=lambda: [1.0])
    k: int = 10

    def __post_init__(self):
        if not self.p_thresholds:
            raise ValueError("p_thresholds must be non-empty")
        if any(p <= 0 for p in self.p_thresholds):
            raise ValueError("p_thresholds must be > 0")
        if sorted(self.p_thresholds) != list(self.p_thresholds):
            raise ValueError("p_thresholds must be sorted ascending")
        if self.k < 1:
            raise ValueError("k must be >= 1")


def speedup(t_ref_ms: float, t_kernel_ms: float, correct: bool) -> float:
    """Reference time over kernel time, gated to exactly 0 for incorrect results."""
    if t_ref_ms <= 0 or t_kernel_ms <= 0:
        raise ValueError(f"timings must be > 0, got ({t_ref_ms}, {t_kernel_ms})")
    if not correct:
        return 0.0
    return t_ref_ms / t_kernel_ms


def fast_p(speedups: Sequence[float], p: float) -> float:
    """Fraction of per-task speedups strictly greater than p."""
    if not speedups:
        raise ValueError("fast_p on empty speedup list")
    if p <= 0:
        raise ValueError("p must be > 0")
    return sum(1 for s in speedups if s > p) / len(speedups)


def exec_rate(statuses: Sequence[str]) -> float:
    """Fraction of statuses equal to "correct"."""
    if not statuses:
        raise ValueError("exec_rate on empty status list")
    return sum(1 for s in statuses if s == "correct") / len(statuses)


def pass_at_k_exec(group_statuses: Sequence[str], k: int) -> bool:
    """Whether any of the first k generations (by gen_index) is correct."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(group_statuses) < k:
        raise ValueError(f"group has {len(group_statuses)} entries, need >= {k}")
    return any(s == "correct" for s in group_statuses[:k])


def pass_at_k_fast1(group_speedups: Sequence[float], k: int) -> bool:
    """Whether any of the first k generations has speedup strictly greater than 1."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(group_speedups) < k:
        raise ValueError(f"group has {len(group_speedups)} entries, need >= {k}")
    return any(s > 1.0 for s in group_speedups[:k])


def arl(lengths: Sequence[Sequence[int]]) -> float:
    """Grand mean of a rectangular tasks-by-generations reasoning-length matrix."""
    if not lengths or not lengths[0]:
        raise ValueError("arl on empty matrix")
    width = len(lengths[0])
    total = 0.0
    for row in lengths:
        if len(row) != width:
            raise ValueError("arl on ragged matrix")
        total += float(sum(row))
    return total / (len(lengths) * width)


def geomean_speedup(speedups: Sequence[float], include_zeros: bool = False) -> float:
    """Geometric mean of speedups, computed as the exponential of the mean log.

    By default zero entries (incorrect samples) are excluded; with
    include_zeros=True any zero entry forces the result to 0.
    """
    if not speedups:
        raise ValueError("geomean_speedup on empty list")
    if any(s < 0 for s in speedups):
        raise ValueError("speedups must be >= 0")
    if include_zeros:
        if any(s == 0 for s in speedups):
            return 0.0
        positive = list(speedups)
    else:
        positive = [s for s in speedups if s > 0]
        if not positive:
            raise ValueError("no positive entries to average")
    return math.exp(math.fsum(math.log(s) for s in positive) / len(positive))
