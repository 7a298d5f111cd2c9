"""Evaluate a record batch with mock runners: caching, determinism, clamping."""

import tempfile
from pathlib import Path

from kernelcur import harness
from kernelcur.records import GenerationRecord, evals_to_text

records = [
    GenerationRecord(f"task{i:02d}", 0, "# reference", f"// kernel variant {i}", "trace", 100)
    for i in range(12)
]
cfg = harness.RunConfig(device="cpu")

# hashed mock: deterministic verdict from a digest of the kernel source
runner = harness.mock_runner("hashed")
results = harness.evaluate(records, runner, cfg, workers=4)
for r in results[:6]:
    print(f"{r.task_id}  {r.status:<14} speedup={r.speedup:.3f}")
print(f"... runner invocations: {runner.invocations}")

# identical output no matter how many workers
single = harness.evaluate(records, harness.mock_runner("hashed"), cfg, workers=1)
assert evals_to_text(single) == evals_to_text(results)
print("workers=1 and workers=4 outputs are byte-identical")

# the content-addressed cache short-circuits repeat evaluations
with tempfile.TemporaryDirectory() as tmp:
    cache = harness.ResultCache(Path(tmp) / "cache")
    harness.evaluate(records, harness.mock_runner("hashed"), cfg, cache=cache)
    print(f"\ncold cache: hits={cache.hits} misses={cache.misses}")

    warm = harness.ResultCache(Path(tmp) / "cache")
    rerun_runner = harness.mock_runner("hashed")
    harness.evaluate(records, rerun_runner, cfg, cache=warm)
    print(f"warm cache: hits={warm.hits} runner invocations={rerun_runner.invocations}")

# scripted mock: exact verdicts for chosen records
fixture = {
    ("task00", 0): harness.RunnerResponse(id="", status="correct", t_ref_ms=3.0, t_kernel_ms=1.5),
    ("task01", 0): harness.RunnerResponse(id="", status="compile_error", diagnostics="missing brace"),
}
scripted = harness.mock_runner("scripted", fixture)
verdicts = harness.evaluate(records[:2], scripted, cfg)
print("\nscripted verdicts:")
for r in verdicts:
    print(f"  {r.task_id}  {r.status}  speedup={r.speedup}  diag={r.diagnostics!r}")
