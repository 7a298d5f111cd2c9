"""Per-task average reasoning length and Easy/Medium/Hard tiers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

from . import metrics
from .records import EvalResult, TaskGroup

TIERS = ("easy", "medium", "hard")


@dataclass(frozen=True)
class DifficultyConfig:
    easy_max: float = 4000.0
    hard_min: float = 8500.0
    min_generations: int = 10

    def __post_init__(self):
        if self.easy_max >= self.hard_min:
            raise ValueError("easy_max must be < hard_min")
        if self.min_generations < 1:
            raise ValueError("min_generations must be >= 1")


@dataclass
class DifficultyLabel:
    task_id: str
    task_arl: float
    tier: str
    m_used: int
    low_confidence: bool = False


def task_arl(group: TaskGroup) -> float:
    """Mean reasoning length over all generations of one task, correct or not."""
    if not group.items:
        raise ValueError("task_arl on empty group")
    return sum(rec.reasoning_tokens for rec, _ in group.items) / len(group.items)


def _tier_for(value: float, cfg: DifficultyConfig) -> str:
    # The boundaries themselves fall in the middle band.
    if value < cfg.easy_max:
        return "easy"
    if value > cfg.hard_min:
        return "hard"
    return "medium"


def classify(groups: Sequence[TaskGroup], cfg: DifficultyConfig) -> list[DifficultyLabel]:
    """Label every task with its mean reasoning length and tier, sorted by task_id.

    Groups smaller than min_generations are still labeled, flagged low-confidence.
    """
    labels = []
    for g in sorted(groups, key=lambda g: g.task_id):
        value = task_arl(g)
        labels.append(
            DifficultyLabel(
                task_id=g.task_id,
                task_arl=value,
                tier=_tier_for(value, cfg),
                m_used=len(g.items),
                low_confidence=len(g.items) < cfg.min_generations,
            )
        )
    return labels


def label_to_obj(label: DifficultyLabel) -> dict[str, Any]:
    return {
        "version": 1,
        "task_id": label.task_id,
        "task_arl": label.task_arl,
        "tier": label.tier,
        "m_used": label.m_used,
        "low_confidence": label.low_confidence,
    }


def difficulty_summary(labels: Sequence[DifficultyLabel], cfg: DifficultyConfig) -> dict[str, Any]:
    """Summary object written as line 1 of a difficulty report file."""
    counts = {tier: 0 for tier in TIERS}
    for label in labels:
        counts[label.tier] += 1
    return {
        "version": 1,
        "config": {
            "easy_max": cfg.easy_max,
            "hard_min": cfg.hard_min,
            "min_generations": cfg.min_generations,
        },
        "tier_counts": counts,
        "n_low_confidence": sum(1 for l in labels if l.low_confidence),
    }


def tier_report(
    labels: Sequence[DifficultyLabel],
    evals_by_task: dict[str, list[EvalResult]],
    *,
    pass_at_k: int | None = None,
    include_zeros: bool = False,
) -> dict[str, dict[str, Any]]:
    """Per-tier correctness and geometric-mean speedup.

    With pass_at_k=None the rates are per generation. With pass_at_k=k each
    task contributes a single best-of-first-k indicator and speedup, so a tier's
    exec is the share of tasks with any correct generation among the first k.
    """
    out: dict[str, dict[str, Any]] = {}
    for tier in TIERS:
        tier_labels = [l for l in labels if l.tier == tier]
        if not tier_labels:
            out[tier] = {"n": 0, "exec_rate": None, "geomean_speedup": None, "n_zero_excluded": 0}
            continue

        statuses: list[str] = []
        speedups: list[float] = []
        for label in tier_labels:
            evals = sorted(evals_by_task.get(label.task_id, []), key=lambda e: e.gen_index)
            if not evals:
                raise ValueError(f"task {label.task_id!r} has no evals")
            if pass_at_k is None:
                statuses.extend(e.status for e in evals)
                speedups.extend(e.speedup for e in evals if e.status == "correct")
            else:
                ok = metrics.pass_at_k_exec([e.status for e in evals], pass_at_k)
                statuses.append("correct" if ok else "incorrect")
                speedups.append(max(e.speedup for e in evals[:pass_at_k]))

        n_zero = sum(1 for s in speedups if s == 0)
        if speedups and (include_zeros or any(s > 0 for s in speedups)):
            gm = metrics.geomean_speedup(speedups, include_zeros=include_zeros)
        else:
            gm = None
        out[tier] = {
            "n": len(tier_labels),
            "exec_rate": metrics.exec_rate(statuses),
            "geomean_speedup": gm,
            "n_zero_excluded": 0 if include_zeros else n_zero,
        }
    return out
