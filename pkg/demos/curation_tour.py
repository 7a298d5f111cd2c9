"""Apply the combined selection rule and the four single-rule policies."""

import random

from kernelcur import curation
from kernelcur.records import EvalResult, GenerationRecord, group_by_task

rng = random.Random(11)

records, evals = [], []
for t in range(60):
    task_id = f"task{t:03d}"
    task_type = rng.choice(["single_op", "multi_op"])
    for j in range(5):
        tokens = rng.randrange(300, 10000)
        records.append(
            GenerationRecord(
                task_id=task_id,
                gen_index=j,
                task_source=f"# reference program for {task_id}",
                kernel_source=f"// kernel candidate {task_id}/{j}",
                reasoning_trace="think",
                reasoning_tokens=tokens,
                task_type=task_type,
            )
        )
        if rng.random() < 0.55:
            speedup = rng.uniform(0.2, 7.0)
            evals.append(
                EvalResult(task_id, j, "correct", speedup, t_ref_ms=speedup, t_kernel_ms=1.0)
            )
        else:
            evals.append(EvalResult(task_id, j, "incorrect", 0.0))

groups = group_by_task(records, evals)

cfg = curation.CurationConfig()  # combined policy, threshold 5
samples = curation.curate(groups, cfg)
print(f"combined policy selected {len(samples)} samples")
print("part tallies:", curation.part_tallies(samples))
print("first few picks:")
for s in samples[:5]:
    print(f"  {s.task_id} gen {s.gen_index}  part={s.part}  speedup={s.speedup:.2f} tokens={s.reasoning_tokens}")

print("\nsingle-rule policies at target_size=20:")
for policy in ("random", "max_len", "min_len", "speedup_first"):
    picked = curation.curate(groups, curation.CurationConfig(policy=policy, seed=3, target_size=20))
    tokens = [s.reasoning_tokens for s in picked]
    speeds = [s.speedup for s in picked]
    print(
        f"  {policy:<14} n={len(picked):<3} mean_tokens={sum(tokens)/len(tokens):7.1f} "
        f"mean_speedup={sum(speeds)/len(speeds):5.2f}"
    )

# render one curated sample into a training example
template = curation.default_template()
lookup = curation.record_lookup(records)
example = curation.export_sft(samples[:1], lookup, template)[0]
print("\nSFT example keys:", sorted(example))
print("prompt tail:", example["prompt"][-120:].strip())
print("response head:", example["response"][:60])
