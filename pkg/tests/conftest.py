from __future__ import annotations

import sys
from pathlib import Path

import pytest

from kernelcur.records import EvalResult, GenerationRecord, group_by_task

STUBS = Path(__file__).parent / "stubs"


def stub_command(name: str) -> list[str]:
    return [sys.executable, str(STUBS / name)]


def make_record(
    task_id,
    gen_index,
    tokens=100,
    task_type="unknown",
    kernel=None,
    task_source=None,
    extra=None,
):
    return GenerationRecord(
        task_id=task_id,
        gen_index=gen_index,
        task_source=task_source or f"def task_{task_id}(): pass",
        kernel_source=kernel or f"kernel {task_id}/{gen_index}",
        reasoning_trace="step one; step two" if tokens else "",
        reasoning_tokens=tokens,
        task_type=task_type,
        extra=dict(extra or {}),
    )


def make_eval(task_id, gen_index, status="correct", speedup=2.0, config_hash="cfg"):
    if status == "correct":
        assert speedup > 0
        return EvalResult(
            task_id=task_id,
            gen_index=gen_index,
            status="correct",
            speedup=speedup,
            t_ref_ms=float(speedup),
            t_kernel_ms=1.0,
            config_hash=config_hash,
        )
    return EvalResult(
        task_id=task_id, gen_index=gen_index, status=status, speedup=0.0, config_hash=config_hash
    )


def build_corpus(spec):
    """spec: {task_id: (task_type, [(tokens, status, speedup), ...])}"""
    records, evals = [], []
    for task_id, (task_type, gens) in spec.items():
        for idx, (tokens, status, speedup) in enumerate(gens):
            records.append(make_record(task_id, idx, tokens=tokens, task_type=task_type))
            evals.append(make_eval(task_id, idx, status=status, speedup=speedup))
    return records, evals


def build_groups(spec):
    records, evals = build_corpus(spec)
    return group_by_task(records, evals)


FIVE_TASK_SPEC = {
    "t1": ("multi_op", [(3000, "correct", 2.1), (5000, "correct", 1.0), (7000, "incorrect", 0)]),
    "t2": ("multi_op", [(400, "correct", 1.5), (800, "correct", 1.2)]),
    "t3": ("multi_op", [(5000, "correct", 6.2), (1000, "incorrect", 0)]),
    "t4": ("single_op", [(2000, "correct", 1.4), (1500, "incorrect", 0)]),
    "t5": ("unknown", [(1200, "incorrect", 0), (3400, "runtime_error", 0)]),
}


@pytest.fixture
def five_task_groups():
    return build_groups(FIVE_TASK_SPEC)
