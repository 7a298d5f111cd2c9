"""Walk through the per-task metrics on a small hand-made eval set."""

from kernelcur import metrics

# speedup is reference time over kernel time, gated by correctness
print("speedup(2.0 ms, 1.0 ms, correct)   =", metrics.speedup(2.0, 1.0, True))
print("speedup(2.0 ms, 1.0 ms, incorrect) =", metrics.speedup(2.0, 1.0, False))

# one speedup per task; fast_p counts tasks strictly above the threshold
per_task = [2.0, 0.5, 0.0, 1.2, 1.0]
print("\nper-task speedups:", per_task)
for p in (0.5, 1.0, 2.0):
    print(f"fast_{p:g} =", metrics.fast_p(per_task, p))

# exec rate over raw generation statuses
statuses = ["correct", "incorrect", "correct", "compile_error", "timeout"]
print("\nexec_rate", statuses, "=", metrics.exec_rate(statuses))

# pass@k looks at the first k generations of one task
task_statuses = ["incorrect", "incorrect", "correct", "incorrect"]
print("pass@2 exec:", metrics.pass_at_k_exec(task_statuses, 2))
print("pass@4 exec:", metrics.pass_at_k_exec(task_statuses, 4))
print("pass@3 fast_1 over [0.0, 0.9, 1.3]:", metrics.pass_at_k_fast1([0.0, 0.9, 1.3], 3))

# average reasoning length over a tasks x generations matrix
lengths = [
    [1200, 3400, 2100],
    [5600, 4800, 5100],
]
print("\nreasoning length matrix:", lengths)
print("grand-mean reasoning length =", metrics.arl(lengths))

# geometric mean of speedups; zero entries are excluded by default
speedups = [2.0, 8.0, 0.0]
print("\ngeomean of", speedups, "excluding zeros =", metrics.geomean_speedup(speedups))
print("geomean of", speedups, "including zeros =", metrics.geomean_speedup(speedups, include_zeros=True))
