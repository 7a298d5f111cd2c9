"""Statistical summaries: accuracy by reasoning-length bin, length box plots
split by correctness, and the length-vs-speedup correlation with significance.

Quartiles use type-7 linear interpolation (numpy's default) for cross-run
determinism. The Student-t tail probability is evaluated through the
regularized incomplete beta function with a continued fraction, so no
statistics library is needed at runtime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .records import TaskGroup

QUARTILE_METHOD = "linear_type7"


@dataclass
class BinStat:
    lo: int
    hi: int  # half-open [lo, hi)
    n: int
    n_correct: int
    accuracy: float | None


@dataclass
class BoxStat:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    whisker_lo: float
    whisker_hi: float
    n_outliers: int


@dataclass
class CorrStat:
    r: float
    n: int
    t_stat: float
    p_value: float


def accuracy_by_length_bins(
    pairs: Sequence[tuple[int, bool]], bin_width: int = 1000
) -> list[BinStat]:
    """Bin (reasoning_tokens, correct) pairs into contiguous half-open bins.

    Bins cover [0, max_length]; empty bins are emitted with accuracy None.
    """
    if not pairs:
        raise ValueError("accuracy_by_length_bins on empty input")
    if bin_width <= 0:
        raise ValueError("bin_width must be > 0")
    max_len = max(tokens for tokens, _ in pairs)
    n_bins = max_len // bin_width + 1
    counts = [0] * n_bins
    correct = [0] * n_bins
    for tokens, ok in pairs:
        if tokens < 0:
            raise ValueError(f"negative reasoning length {tokens}")
        idx = tokens // bin_width
        counts[idx] += 1
        if ok:
            correct[idx] += 1
    return [
        BinStat(
            lo=i * bin_width,
            hi=(i + 1) * bin_width,
            n=counts[i],
            n_correct=correct[i],
            accuracy=correct[i] / counts[i] if counts[i] else None,
        )
        for i in range(n_bins)
    ]


def box_stat(values: Sequence[float]) -> BoxStat:
    """Five-number summary with 1.5*IQR whiskers snapped to the data."""
    if len(values) == 0:
        raise ValueError("box_stat on empty group")
    arr = np.asarray(values, dtype=np.float64)
    q1, med, q3 = np.percentile(arr, [25.0, 50.0, 75.0], method="linear")
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = arr[(arr >= lo_fence) & (arr <= hi_fence)]
    # q1/q3 always lie within the fences, so inside is never empty
    whisker_lo = float(inside.min())
    whisker_hi = float(inside.max())
    n_outliers = int(((arr < lo_fence) | (arr > hi_fence)).sum())
    return BoxStat(
        min=float(arr.min()),
        q1=float(q1),
        median=float(med),
        q3=float(q3),
        max=float(arr.max()),
        whisker_lo=whisker_lo,
        whisker_hi=whisker_hi,
        n_outliers=n_outliers,
    )


def box_stats(values: Sequence[float], split: Sequence[bool]) -> tuple[BoxStat, BoxStat]:
    """Box statistics for the split=True group and the split=False group."""
    if len(values) != len(split):
        raise ValueError("values and split length mismatch")
    group_true = [v for v, s in zip(values, split) if s]
    group_false = [v for v, s in zip(values, split) if not s]
    if not group_true or not group_false:
        raise ValueError("each group must be non-empty")
    return box_stat(group_true), box_stat(group_false)


_FPMIN = 1e-300
_CF_EPS = 1e-15
_CF_MAXIT = 500


def _beta_cont_frac(a: float, b: float, x: float) -> float:
    # Modified Lentz evaluation of the continued fraction for I_x(a, b).
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta failed to converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # Use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) on the slow-converging side.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cont_frac(a, b, x) / a
    return 1.0 - front * _beta_cont_frac(b, a, 1.0 - x) / b


def student_t_two_sided_p(t_stat: float, dof: int) -> float:
    """P(|T| >= t) for T Student-t distributed with dof degrees of freedom."""
    if dof < 1:
        raise ValueError("dof must be >= 1")
    if math.isinf(t_stat):
        return 0.0
    x = dof / (dof + t_stat * t_stat)
    p = regularized_incomplete_beta(dof / 2.0, 0.5, x)
    return min(max(p, 0.0), 1.0)


def pearson(x: Sequence[float], y: Sequence[float]) -> CorrStat:
    """Product-moment correlation with a two-sided Student-t significance test."""
    n = len(x)
    if n != len(y):
        raise ValueError(f"length mismatch: {n} vs {len(y)}")
    if n < 3:
        raise ValueError("need at least 3 pairs")
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    sxx = math.fsum((xi - mx) ** 2 for xi in x)
    syy = math.fsum((yi - my) ** 2 for yi in y)
    if sxx == 0 or syy == 0:
        raise ValueError("zero variance input")
    sxy = math.fsum((xi - mx) * (yi - my) for xi, yi in zip(x, y))
    r = sxy / math.sqrt(sxx * syy)
    r = min(1.0, max(-1.0, r))
    if 1.0 - r * r <= 0.0:
        t_stat = math.inf if r > 0 else -math.inf
    else:
        t_stat = r * math.sqrt((n - 2) / (1.0 - r * r))
    p_value = student_t_two_sided_p(abs(t_stat), n - 2)
    return CorrStat(r=r, n=n, t_stat=t_stat, p_value=p_value)


def length_speedup_pairs(
    groups: Sequence[TaskGroup], include_incorrect: bool = False
) -> tuple[list[float], list[float]]:
    """(reasoning length, speedup) pairs per generation, correct-only by default."""
    lengths: list[float] = []
    speedups: list[float] = []
    for g in groups:
        for rec, ev in g.items:
            if ev is None:
                continue
            if not include_incorrect and ev.status != "correct":
                continue
            lengths.append(float(rec.reasoning_tokens))
            speedups.append(ev.speedup)
    return lengths, speedups


def _corr_obj(x: list[float], y: list[float]) -> dict[str, Any]:
    try:
        c = pearson(x, y)
    except ValueError as exc:
        return {"available": False, "reason": str(exc)}
    return {
        "available": True,
        "r": c.r,
        "n": c.n,
        "t_stat": c.t_stat,
        "p_value": c.p_value,
    }


def _box_obj(stat: BoxStat | None) -> dict[str, Any] | None:
    if stat is None:
        return None
    return {
        "min": stat.min,
        "q1": stat.q1,
        "median": stat.median,
        "q3": stat.q3,
        "max": stat.max,
        "whisker_lo": stat.whisker_lo,
        "whisker_hi": stat.whisker_hi,
        "n_outliers": stat.n_outliers,
    }


def analyze(
    groups: Sequence[TaskGroup],
    bin_width: int = 1000,
    include_incorrect: bool = False,
) -> dict[str, Any]:
    """Assemble the full analysis report as one JSON-serializable object."""
    pairs: list[tuple[int, bool]] = []
    for g in groups:
        for rec, ev in g.items:
            if ev is None:
                continue
            pairs.append((rec.reasoning_tokens, ev.status == "correct"))
    if not pairs:
        raise ValueError("no evaluated generations to analyze")

    bins = accuracy_by_length_bins(pairs, bin_width)
    lengths_correct = [float(t) for t, ok in pairs if ok]
    lengths_incorrect = [float(t) for t, ok in pairs if not ok]
    box_correct = box_stat(lengths_correct) if lengths_correct else None
    box_incorrect = box_stat(lengths_incorrect) if lengths_incorrect else None

    report: dict[str, Any] = {
        "config": {
            "bin_width": bin_width,
            "include_incorrect": include_incorrect,
            "quartile_method": QUARTILE_METHOD,
        },
        "n_pairs": len(pairs),
        "bins": [
            {"lo": b.lo, "hi": b.hi, "n": b.n, "n_correct": b.n_correct, "accuracy": b.accuracy}
            for b in bins
        ],
        "reasoning_length_box": {
            "correct": _box_obj(box_correct),
            "incorrect": _box_obj(box_incorrect),
        },
        "length_speedup_correlation": _corr_obj(*length_speedup_pairs(groups, False)),
    }
    if include_incorrect:
        report["length_speedup_correlation_including_incorrect"] = _corr_obj(
            *length_speedup_pairs(groups, True)
        )
    return report
