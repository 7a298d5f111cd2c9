"""Classify tasks into difficulty tiers from their mean reasoning length."""

import random

from kernelcur import difficulty
from kernelcur.records import EvalResult, GenerationRecord, group_by_task

rng = random.Random(23)

records, evals = [], []
for t in range(40):
    task_id = f"task{t:03d}"
    base = rng.choice([1500, 3000, 5000, 7000, 9500, 11000])
    for j in range(10):
        tokens = max(0, int(rng.gauss(base, 600)))
        records.append(
            GenerationRecord(task_id, j, "# reference", "// kernel", "trace", tokens)
        )
        if rng.random() < 0.5:
            s = rng.uniform(0.3, 3.0)
            evals.append(EvalResult(task_id, j, "correct", s, t_ref_ms=s, t_kernel_ms=1.0))
        else:
            evals.append(EvalResult(task_id, j, "incorrect", 0.0))

groups = group_by_task(records, evals)

cfg = difficulty.DifficultyConfig()  # easy < 4000, hard > 8500
labels = difficulty.classify(groups, cfg)

print("first ten labels:")
for label in labels[:10]:
    print(f"  {label.task_id}  arl={label.task_arl:8.1f}  tier={label.tier}")

summary = difficulty.difficulty_summary(labels, cfg)
print("\ntier counts:", summary["tier_counts"])

evals_by_task = {g.task_id: g.evals() for g in groups}
report = difficulty.tier_report(labels, evals_by_task, pass_at_k=10)
print("\nper-tier report (best of 10 per task):")
for tier, row in report.items():
    if row["n"] == 0:
        print(f"  {tier:<7} empty")
        continue
    gm = "n/a" if row["geomean_speedup"] is None else f"{row['geomean_speedup']:.3f}"
    print(f"  {tier:<7} n={row['n']:<3} exec={row['exec_rate']:.2f}  G_speedup={gm}")
