"""End-to-end pipeline through the CLI: evaluate, curate, analyze, difficulty,
report, and SFT export, all inside a temporary directory."""

import json
import random
import tempfile
from pathlib import Path

from kernelcur.cli import main
from kernelcur.records import GenerationRecord, write_records

rng = random.Random(99)

records = []
for t in range(30):
    task_id = f"task{t:03d}"
    task_type = rng.choice(["single_op", "multi_op"])
    for j in range(5):
        records.append(
            GenerationRecord(
                task_id=task_id,
                gen_index=j,
                task_source=f"# torch reference for {task_id}",
                kernel_source=f"// candidate {task_id}/{j} body {rng.randrange(10**6)}",
                reasoning_trace="plan then code",
                reasoning_tokens=rng.randrange(300, 11000),
                task_type=task_type,
            )
        )

with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)
    rec_path = root / "records.jsonl"
    write_records(rec_path, records)

    def run(*argv):
        argv = [str(a) for a in argv]
        print(f"\n$ kernelcur {' '.join(argv)}")
        code = main(argv)
        assert code == 0, f"exit code {code}"

    run("evaluate", "--records", rec_path, "--runner", "mock:hashed",
        "--out", root / "evals.jsonl", "--cache-dir", root / "cache", "--workers", "4")

    run("curate", "--records", rec_path, "--evals", root / "evals.jsonl",
        "--out", root / "curated.jsonl")

    run("analyze", "--records", rec_path, "--evals", root / "evals.jsonl",
        "--out", root / "analysis.json", "--bin-width", "2000")

    run("difficulty", "--records", rec_path, "--evals", root / "evals.jsonl",
        "--out", root / "difficulty.jsonl", "--pass-at-k", "5")

    run("report", "--evals", root / "evals.jsonl", "--records", rec_path, "--k", "5")

    run("export-sft", "--curated", root / "curated.jsonl", "--records", rec_path,
        "--out", root / "sft.jsonl")

    print("\nanalysis correlation block:")
    analysis = json.loads((root / "analysis.json").read_text())
    print(json.dumps(analysis["length_speedup_correlation"], indent=2, sort_keys=True))

    print("\nfiles produced:")
    for path in sorted(root.iterdir()):
        if path.is_file():
            print(f"  {path.name}  ({path.stat().st_size} bytes)")
