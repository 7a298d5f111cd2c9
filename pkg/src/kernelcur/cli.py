"""Command-line surface: evaluate, curate, analyze, difficulty, export-sft, report.

Payload outputs are deterministic for fixed inputs and flags; timestamps and
other run metadata live in a ``<out>.meta.json`` sidecar. Output files are
written to a temp file and renamed, so a failed command leaves nothing behind.
Exit codes: 0 success, 1 aborted batch, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import Any, Sequence

from . import analysis, curation, difficulty, harness, metrics, records

CACHE_ENV_VAR = "KERNELCUR_CACHE_DIR"


def _atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _write_sidecar(out_path: str | Path, meta: dict[str, Any]) -> None:
    sidecar = Path(str(out_path) + ".meta.json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _jsonl(objs) -> str:
    return "".join(records.canonical_json(o) + "\n" for o in objs)


class UsageError(Exception):
    pass


def _build_runner(spec: str, retries: int):
    if spec == "mock:hashed":
        return harness.mock_runner("hashed")
    if spec.startswith("mock:scripted:"):
        fixture_path = spec[len("mock:scripted:") :]
        fixture: dict[tuple[str, int], harness.RunnerResponse] = {}
        with open(fixture_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                obj = json.loads(line)
                key = (obj["task_id"], obj["gen_index"])
                fixture[key] = harness.RunnerResponse(
                    id="",
                    status=obj["status"],
                    t_ref_ms=obj.get("t_ref_ms"),
                    t_kernel_ms=obj.get("t_kernel_ms"),
                    diagnostics=obj.get("diagnostics", ""),
                )
        return harness.mock_runner("scripted", fixture)
    if spec.startswith("cmd:"):
        return harness.ExternalRunner(spec[len("cmd:") :], retries=retries)
    raise UsageError(
        f"unknown runner spec {spec!r}; expected mock:hashed, mock:scripted:<fixture>, or cmd:<command>"
    )


def _effective_cache_dir(flag_value: str | None) -> str | None:
    return os.environ.get(CACHE_ENV_VAR) or flag_value


def _run_config_from_args(args) -> harness.RunConfig:
    return harness.RunConfig(
        warmup_iters=args.warmup_iters,
        timed_iters=args.timed_iters,
        timing_agg=args.timing_agg,
        n_input_seeds=args.n_input_seeds,
        atol=args.atol,
        rtol=args.rtol,
        timeout_s=args.timeout_s,
        device=args.device,
    )


def cmd_evaluate(args) -> int:
    recs = records.read_records(args.records)
    cfg = _run_config_from_args(args)
    runner = _build_runner(args.runner, args.retries)
    cache_dir = _effective_cache_dir(args.cache_dir)
    cache = harness.ResultCache(cache_dir) if cache_dir else None

    started = time.time()
    try:
        evals = harness.evaluate(recs, runner, cfg, workers=args.workers, cache=cache)
    except harness.BatchAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        for result in exc.completed:
            print(f"completed: {result.task_id} gen {result.gen_index}: {result.status}", file=sys.stderr)
        return 1
    finally:
        runner.close()
    elapsed = time.time() - started

    _atomic_write_text(args.out, records.evals_to_text(evals))

    groups = records.group_by_task(recs, evals)
    summary: dict[str, Any] = dict(records.count_summary(groups))
    summary["exec_rate"] = metrics.exec_rate([e.status for e in evals]) if evals else None
    summary["runner_invocations"] = runner.invocations
    if cache is not None:
        summary["cache_hits"] = cache.hits
        summary["cache_misses"] = cache.misses
        summary["cache_hit_rate"] = cache.hits / len(recs) if recs else None
    print(json.dumps(summary, sort_keys=True))
    _write_sidecar(args.out, {"command": "evaluate", "elapsed_s": elapsed, "summary": summary})
    return 0


def cmd_curate(args) -> int:
    recs = records.read_records(args.records)
    evals = records.read_evals(args.evals)
    groups = records.group_by_task(recs, evals)
    cfg = curation.CurationConfig(
        speedup_threshold=args.speedup_threshold,
        single_op_target=args.single_op_target,
        policy=args.policy,
        seed=args.seed,
        target_size=args.target_size,
        infer_single_op=args.infer_single_op,
    )
    if cfg.infer_single_op:
        groups = curation.apply_task_type_heuristic(groups)
    samples = curation.curate(groups, cfg)
    header = curation.curation_header(cfg, samples, groups)
    lines = [header] + [records.curated_to_obj(s) for s in samples]
    _atomic_write_text(args.out, _jsonl(lines))
    print(json.dumps({"n_samples": len(samples), "tallies": header["tallies"]}, sort_keys=True))
    _write_sidecar(args.out, {"command": "curate", "header": header})
    return 0


def cmd_analyze(args) -> int:
    recs = records.read_records(args.records)
    evals = records.read_evals(args.evals)
    groups = records.group_by_task(recs, evals)
    report = analysis.analyze(
        groups, bin_width=args.bin_width, include_incorrect=args.include_incorrect
    )
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        _atomic_write_text(args.out, text)
        _write_sidecar(args.out, {"command": "analyze"})
    else:
        sys.stdout.write(text)
    return 0


def cmd_difficulty(args) -> int:
    recs = records.read_records(args.records)
    evals = records.read_evals(args.evals) if args.evals else []
    groups = records.group_by_task(recs, evals)
    cfg = difficulty.DifficultyConfig(
        easy_max=args.easy_max, hard_min=args.hard_min, min_generations=args.min_generations
    )
    labels = difficulty.classify(groups, cfg)
    summary = difficulty.difficulty_summary(labels, cfg)
    if args.evals:
        evals_by_task: dict[str, list] = {}
        for g in groups:
            evals_by_task[g.task_id] = g.evals()
        summary["tier_report"] = difficulty.tier_report(
            labels, evals_by_task, pass_at_k=args.pass_at_k
        )
    lines = [summary] + [difficulty.label_to_obj(l) for l in labels]
    _atomic_write_text(args.out, _jsonl(lines))
    print(json.dumps({"tier_counts": summary["tier_counts"]}, sort_keys=True))
    _write_sidecar(args.out, {"command": "difficulty", "summary": summary})
    return 0


def cmd_export_sft(args) -> int:
    _, samples = records.read_curated(args.curated)
    recs = records.read_records(args.records)
    if args.template:
        template = curation.PromptTemplate(Path(args.template).read_text(encoding="utf-8"))
    else:
        template = curation.default_template()
    kwargs: dict[str, Any] = {
        "think_open": args.think_open,
        "think_close": args.think_close,
    }
    if args.fewshot_torch:
        kwargs["fewshot_torch"] = Path(args.fewshot_torch).read_text(encoding="utf-8")
    if args.fewshot_kernel:
        kwargs["fewshot_kernel"] = Path(args.fewshot_kernel).read_text(encoding="utf-8")
    examples = curation.export_sft(samples, curation.record_lookup(recs), template, **kwargs)
    _atomic_write_text(args.out, _jsonl(examples))
    print(json.dumps({"n_examples": len(examples)}, sort_keys=True))
    _write_sidecar(args.out, {"command": "export-sft", "n_examples": len(examples)})
    return 0


def _report_rows(
    task_evals: list[list[records.EvalResult]],
    all_statuses: list[str],
    k: int,
    p_thresholds: list[float],
    include_zeros: bool,
) -> list[tuple[str, str]]:
    for evals in task_evals:
        if len(evals) < k:
            raise UsageError(
                f"task {evals[0].task_id!r} has {len(evals)} generations, need >= k={k}"
            )
    pass_exec = [metrics.pass_at_k_exec([e.status for e in evs], k) for evs in task_evals]
    pass_fast1 = [metrics.pass_at_k_fast1([e.speedup for e in evs], k) for evs in task_evals]
    best = [max(e.speedup for e in evs[:k]) for evs in task_evals]

    def pct(x: float) -> str:
        return f"{100.0 * x:.1f}%"

    rows = [
        ("exec_rate", pct(metrics.exec_rate(all_statuses))),
        (f"pass@{k} (exec)", pct(sum(pass_exec) / len(pass_exec))),
        (f"pass@{k} (fast_1)", pct(sum(pass_fast1) / len(pass_fast1))),
    ]
    for p in p_thresholds:
        rows.append((f"fast_{p:g}", pct(metrics.fast_p(best, p))))
    n_zero = sum(1 for s in best if s == 0)
    if include_zeros:
        gm = metrics.geomean_speedup(best, include_zeros=True)
        rows.append(("G_speedup", f"{gm:.3f} (zeros included)"))
    elif any(s > 0 for s in best):
        gm = metrics.geomean_speedup(best, include_zeros=False)
        rows.append(("G_speedup", f"{gm:.3f} (zeros excluded: {n_zero})"))
    else:
        rows.append(("G_speedup", "n/a (no positive speedups)"))
    return rows


def cmd_report(args) -> int:
    evals = records.read_evals(args.evals)
    level_by_task: dict[str, str] = {}
    if args.records:
        for rec in records.read_records(args.records):
            if "level" in rec.extra:
                level_by_task[rec.task_id] = str(rec.extra["level"])

    by_task: dict[str, list[records.EvalResult]] = {}
    for ev in evals:
        by_task.setdefault(ev.task_id, []).append(ev)
    for task_evals in by_task.values():
        task_evals.sort(key=lambda e: e.gen_index)

    levels: dict[str, list[str]] = {"all": sorted(by_task)}
    for task_id in sorted(by_task):
        tag = level_by_task.get(task_id)
        if tag is not None:
            levels.setdefault(f"level={tag}", []).append(task_id)

    lines = [
        f"# report k={args.k} p_thresholds={args.p} include_zeros={args.include_zeros}"
    ]
    for name in sorted(levels, key=lambda s: (s != "all", s)):
        tasks = levels[name]
        task_evals = [by_task[t] for t in tasks]
        statuses = [e.status for t in tasks for e in by_task[t]]
        lines.append(f"{name} tasks={len(tasks)} generations={len(statuses)}")
        for label, value in _report_rows(task_evals, statuses, args.k, args.p, args.include_zeros):
            lines.append(f"  {label:<18} {value}")
    text = "\n".join(lines) + "\n"
    if args.out:
        _atomic_write_text(args.out, text)
        _write_sidecar(args.out, {"command": "report"})
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kernelcur",
        description="Evaluate LLM-generated kernel candidates, curate training samples, "
        "and classify task difficulty by reasoning length.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.set_defaults(func=func)
        return p

    p = add("evaluate", cmd_evaluate, "run records through a runner and write an eval file")
    p.add_argument("--records", required=True, help="input record file (JSONL)")
    p.add_argument(
        "--runner",
        required=True,
        help="runner spec: mock:hashed, mock:scripted:<fixture.jsonl>, or cmd:<command>",
    )
    p.add_argument("--out", required=True, help="output eval file (JSONL)")
    p.add_argument("--cache-dir", default=None, help=f"result cache directory (overridden by ${CACHE_ENV_VAR})")
    p.add_argument("--workers", type=int, default=1, help="concurrent in-flight requests")
    p.add_argument("--retries", type=int, default=2, help="re-issues after a runner crash")
    p.add_argument("--warmup-iters", type=int, default=3, help="warmup iterations before timing")
    p.add_argument("--timed-iters", type=int, default=10, help="timed iterations")
    p.add_argument("--timing-agg", choices=["median", "mean"], default="median", help="timing aggregation")
    p.add_argument("--n-input-seeds", type=int, default=5, help="random inputs per correctness check")
    p.add_argument("--atol", type=float, default=1e-2, help="absolute tolerance for output comparison")
    p.add_argument("--rtol", type=float, default=1e-2, help="relative tolerance for output comparison")
    p.add_argument("--timeout-s", type=float, default=300.0, help="per-request timeout in seconds")
    p.add_argument("--device", choices=["gpu", "cpu"], default="gpu", help="device requested from the runner")

    p = add("curate", cmd_curate, "select high-quality samples from records + evals")
    p.add_argument("--records", required=True, help="input record file")
    p.add_argument("--evals", required=True, help="input eval file")
    p.add_argument("--out", required=True, help="output curated dataset file")
    p.add_argument("--policy", choices=list(curation.POLICIES), default="concur", help="selection policy")
    p.add_argument("--speedup-threshold", type=float, default=5.0, help="strict speedup cut for the high-speedup part")
    p.add_argument("--single-op-target", type=int, default=0, help="single-operator samples to keep (0 = all)")
    p.add_argument("--target-size", type=int, default=4892, help="task count for the single-rule policies")
    p.add_argument("--seed", type=int, default=0, help="seed for the random policy")
    p.add_argument(
        "--infer-single-op",
        action="store_true",
        help="tag untyped tasks single_op when the source has exactly one distinct operator call",
    )

    p = add("analyze", cmd_analyze, "accuracy-by-length bins, box stats, and length/speedup correlation")
    p.add_argument("--records", required=True, help="input record file")
    p.add_argument("--evals", required=True, help="input eval file")
    p.add_argument("--out", default=None, help="output report path (default: stdout)")
    p.add_argument("--bin-width", type=int, default=1000, help="reasoning-length bin width in tokens")
    p.add_argument(
        "--include-incorrect",
        action="store_true",
        help="also correlate over incorrect samples (speedup 0)",
    )

    p = add("difficulty", cmd_difficulty, "per-task reasoning-length tiers")
    p.add_argument("--records", required=True, help="input record file")
    p.add_argument("--evals", default=None, help="optional eval file for the per-tier report")
    p.add_argument("--out", required=True, help="output difficulty report file")
    p.add_argument("--easy-max", type=float, default=4000.0, help="tasks below this mean length are easy")
    p.add_argument("--hard-min", type=float, default=8500.0, help="tasks above this mean length are hard")
    p.add_argument("--min-generations", type=int, default=10, help="fewer generations flags low confidence")
    p.add_argument("--pass-at-k", type=int, default=None, help="per-tier rates use best-of-k per task")

    p = add("export-sft", cmd_export_sft, "render curated samples into prompt/response pairs")
    p.add_argument("--curated", required=True, help="curated dataset file")
    p.add_argument("--records", required=True, help="record file the samples reference")
    p.add_argument("--out", required=True, help="output SFT file (JSONL)")
    p.add_argument("--template", default=None, help="prompt template file (default: built-in)")
    p.add_argument("--think-open", default=curation.THINK_OPEN, help="delimiter before the reasoning trace")
    p.add_argument("--think-close", default=curation.THINK_CLOSE, help="delimiter after the reasoning trace")
    p.add_argument("--fewshot-torch", default=None, help="file overriding the example reference module")
    p.add_argument("--fewshot-kernel", default=None, help="file overriding the example optimized module")

    p = add("report", cmd_report, "metric tables over an eval file")
    p.add_argument("--evals", required=True, help="input eval file")
    p.add_argument("--records", default=None, help="optional record file supplying level tags")
    p.add_argument("--out", default=None, help="output report path (default: stdout)")
    p.add_argument("--k", type=int, default=1, help="trials per task for pass@k and best-of-k speedups")
    p.add_argument("--p", type=float, action="append", default=None, help="fast_p threshold (repeatable)")
    p.add_argument("--include-zeros", action="store_true", help="zero speedups zero out G_speedup")

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "p", None) is None and args.command == "report":
        args.p = [1.0]
    try:
        return args.func(args)
    except (UsageError, records.RecordError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except harness.HandshakeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
