"""Reasoning-length statistics on a synthetic corpus: bins, boxes, correlation."""

import json
import random

from kernelcur import analysis
from kernelcur.records import EvalResult, GenerationRecord, group_by_task

rng = random.Random(7)

# synthetic corpus: longer reasoning is less often correct, speedup is noise
records, evals = [], []
for t in range(150):
    task_id = f"task{t:03d}"
    for j in range(5):
        tokens = rng.randrange(200, 12000)
        correct = rng.random() < (1.0 - 0.6 * tokens / 12000)
        records.append(
            GenerationRecord(
                task_id=task_id,
                gen_index=j,
                task_source="import torch  # reference model here",
                kernel_source="// candidate kernel here",
                reasoning_trace="plan; implement; check",
                reasoning_tokens=tokens,
            )
        )
        if correct:
            t_kernel = rng.uniform(0.5, 4.0)
            evals.append(
                EvalResult(task_id, j, "correct", 2.0 / t_kernel, t_ref_ms=2.0, t_kernel_ms=t_kernel)
            )
        else:
            evals.append(EvalResult(task_id, j, "incorrect", 0.0))

groups = group_by_task(records, evals)

report = analysis.analyze(groups, bin_width=2000, include_incorrect=True)

print("accuracy by reasoning-length bin:")
for b in report["bins"]:
    acc = "  n/a" if b["accuracy"] is None else f"{b['accuracy']:5.2f}"
    print(f"  [{b['lo']:>6}, {b['hi']:>6})  n={b['n']:<4} accuracy={acc}")

print("\nreasoning-length box stats:")
print(json.dumps(report["reasoning_length_box"], indent=2, sort_keys=True))

print("\nlength vs speedup correlation (correct samples only):")
print(json.dumps(report["length_speedup_correlation"], indent=2, sort_keys=True))
print("\nsame correlation including incorrect samples (speedup forced to 0):")
print(json.dumps(report["length_speedup_correlation_including_incorrect"], indent=2, sort_keys=True))
