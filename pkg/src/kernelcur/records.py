"""Canonical data model and line-delimited record file I/O.

Record and eval files are UTF-8 text, one JSON object per line, every line
carrying ``"version": 1``. Unknown fields round-trip verbatim. The canonical
on-disk form is compact JSON with sorted keys, so write(read(f)) is
byte-identical for canonically formatted input.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

log = logging.getLogger(__name__)

FORMAT_VERSION = 1

TASK_TYPES = ("single_op", "multi_op", "unknown")
STATUSES = ("correct", "incorrect", "compile_error", "runtime_error", "timeout")

_RECORD_FIELDS = (
    "task_id",
    "gen_index",
    "task_source",
    "kernel_source",
    "reasoning_trace",
    "reasoning_tokens",
    "task_type",
)
_EVAL_FIELDS = (
    "task_id",
    "gen_index",
    "status",
    "t_ref_ms",
    "t_kernel_ms",
    "speedup",
    "diagnostics",
    "config_hash",
)


class RecordError(ValueError):
    """Malformed record/eval file: parse failure, bad field, or duplicate key."""

    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        loc = ""
        if path is not None:
            loc = f"{path}: "
        if line is not None:
            loc += f"line {line}: "
        super().__init__(loc + message)
        self.path = str(path) if path is not None else None
        self.line = line


@dataclass
class GenerationRecord:
    """One candidate kernel with its reasoning trace."""

    task_id: str
    gen_index: int
    task_source: str
    kernel_source: str
    reasoning_trace: str
    reasoning_tokens: int
    task_type: str = "unknown"
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def key(self) -> tuple[str, int]:
        return (self.task_id, self.gen_index)


@dataclass
class EvalResult:
    """Verdict of one evaluation.

    speedup > 0 iff status == "correct"; timing fields are present (not None)
    only for correct results, where speedup == t_ref_ms / t_kernel_ms.
    """

    task_id: str
    gen_index: int
    status: str
    speedup: float
    t_ref_ms: float | None = None
    t_kernel_ms: float | None = None
    diagnostics: str = ""
    config_hash: str = ""
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def key(self) -> tuple[str, int]:
        return (self.task_id, self.gen_index)


@dataclass
class TaskGroup:
    """All generations for one task, paired with their evals (None when unevaluated)."""

    task_id: str
    task_type: str
    items: list[tuple[GenerationRecord, EvalResult | None]]

    def records(self) -> list[GenerationRecord]:
        return [r for r, _ in self.items]

    def evals(self) -> list[EvalResult]:
        return [e for _, e in self.items if e is not None]


@dataclass
class CuratedSample:
    """A selected (task, reasoning, kernel) triple with selection provenance.

    part is one of the three selection-rule tags for the combined policy and
    None for the single-rule policies.
    """

    task_id: str
    gen_index: int
    part: str | None
    policy: str
    speedup: float
    reasoning_tokens: int

    @property
    def key(self) -> tuple[str, int]:
        return (self.task_id, self.gen_index)


def canonical_json(obj: dict[str, Any]) -> str:
    """Canonical one-line form: compact separators, sorted keys, raw UTF-8."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def approximate_reasoning_tokens(trace: str) -> int:
    """Whitespace-split fallback count; only a stand-in for the producer's tokenizer."""
    return len(trace.split())


def record_to_obj(rec: GenerationRecord) -> dict[str, Any]:
    obj: dict[str, Any] = {"version": FORMAT_VERSION}
    for name in _RECORD_FIELDS:
        obj[name] = getattr(rec, name)
    obj.update(rec.extra)
    return obj


def eval_to_obj(ev: EvalResult) -> dict[str, Any]:
    obj: dict[str, Any] = {"version": FORMAT_VERSION}
    for name in _EVAL_FIELDS:
        value = getattr(ev, name)
        if name in ("t_ref_ms", "t_kernel_ms") and value is None:
            continue  # absent, not null
        obj[name] = value
    obj.update(ev.extra)
    return obj


def curated_to_obj(sample: CuratedSample) -> dict[str, Any]:
    return {
        "version": FORMAT_VERSION,
        "task_id": sample.task_id,
        "gen_index": sample.gen_index,
        "part": sample.part,
        "policy": sample.policy,
        "speedup": sample.speedup,
        "reasoning_tokens": sample.reasoning_tokens,
    }


def _check_version(obj: dict[str, Any], path, lineno) -> None:
    if "version" not in obj:
        raise RecordError("missing required field 'version'", path, lineno)
    if obj["version"] != FORMAT_VERSION:
        raise RecordError(f"unsupported version {obj['version']!r}", path, lineno)


def _require(obj: dict[str, Any], name: str, types, path, lineno):
    if name not in obj:
        raise RecordError(f"missing required field '{name}'", path, lineno)
    value = obj[name]
    if not isinstance(value, types) or isinstance(value, bool):
        raise RecordError(f"field '{name}' has wrong type {type(value).__name__}", path, lineno)
    return value


def record_from_obj(
    obj: dict[str, Any],
    path=None,
    lineno: int | None = None,
    *,
    allow_approximate_tokens: bool = False,
) -> GenerationRecord:
    _check_version(obj, path, lineno)
    task_id = _require(obj, "task_id", str, path, lineno)
    gen_index = _require(obj, "gen_index", int, path, lineno)
    if gen_index < 0:
        raise RecordError(f"gen_index must be >= 0, got {gen_index}", path, lineno)
    task_source = _require(obj, "task_source", str, path, lineno)
    kernel_source = _require(obj, "kernel_source", str, path, lineno)
    if not task_source:
        raise RecordError("task_source must be non-empty", path, lineno)
    if not kernel_source:
        raise RecordError("kernel_source must be non-empty", path, lineno)
    reasoning_trace = _require(obj, "reasoning_trace", str, path, lineno)

    extra = {k: v for k, v in obj.items() if k not in _RECORD_FIELDS and k != "version"}

    if "reasoning_tokens" in obj:
        reasoning_tokens = _require(obj, "reasoning_tokens", int, path, lineno)
    elif allow_approximate_tokens:
        reasoning_tokens = approximate_reasoning_tokens(reasoning_trace)
        extra["reasoning_tokens_approximate"] = True
    else:
        raise RecordError("missing required field 'reasoning_tokens'", path, lineno)
    if reasoning_tokens < 0:
        raise RecordError(f"reasoning_tokens must be >= 0, got {reasoning_tokens}", path, lineno)
    if not reasoning_trace and reasoning_tokens != 0:
        raise RecordError("empty reasoning_trace requires reasoning_tokens == 0", path, lineno)

    task_type = obj.get("task_type", "unknown")
    if task_type not in TASK_TYPES:
        raise RecordError(f"unknown task_type {task_type!r}", path, lineno)

    return GenerationRecord(
        task_id=task_id,
        gen_index=gen_index,
        task_source=task_source,
        kernel_source=kernel_source,
        reasoning_trace=reasoning_trace,
        reasoning_tokens=reasoning_tokens,
        task_type=task_type,
        extra=extra,
    )


def eval_from_obj(obj: dict[str, Any], path=None, lineno: int | None = None) -> EvalResult:
    _check_version(obj, path, lineno)
    task_id = _require(obj, "task_id", str, path, lineno)
    gen_index = _require(obj, "gen_index", int, path, lineno)
    status = _require(obj, "status", str, path, lineno)
    if status not in STATUSES:
        raise RecordError(f"unknown status {status!r}", path, lineno)
    speedup = _require(obj, "speedup", (int, float), path, lineno)
    diagnostics = obj.get("diagnostics", "")
    config_hash = obj.get("config_hash", "")

    t_ref_ms = obj.get("t_ref_ms")
    t_kernel_ms = obj.get("t_kernel_ms")
    if status == "correct":
        if t_ref_ms is None or t_kernel_ms is None:
            raise RecordError("correct result requires t_ref_ms and t_kernel_ms", path, lineno)
        if t_ref_ms <= 0 or t_kernel_ms <= 0:
            raise RecordError("timings must be strictly positive", path, lineno)
        expect = t_ref_ms / t_kernel_ms
        if not (speedup > 0) or abs(speedup - expect) > 1e-9 * max(1.0, abs(expect)):
            raise RecordError(
                f"speedup {speedup} inconsistent with t_ref_ms/t_kernel_ms = {expect}", path, lineno
            )
    else:
        if speedup != 0:
            raise RecordError(f"status {status!r} requires speedup == 0, got {speedup}", path, lineno)

    extra = {k: v for k, v in obj.items() if k not in _EVAL_FIELDS and k != "version"}
    return EvalResult(
        task_id=task_id,
        gen_index=gen_index,
        status=status,
        speedup=float(speedup),
        t_ref_ms=t_ref_ms,
        t_kernel_ms=t_kernel_ms,
        diagnostics=diagnostics,
        config_hash=config_hash,
        extra=extra,
    )


def _read_lines(path: str | Path) -> Iterable[tuple[int, dict[str, Any]]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"invalid JSON: {exc.msg}", path, lineno) from exc
            if not isinstance(obj, dict):
                raise RecordError("line is not a JSON object", path, lineno)
            yield lineno, obj


def read_records(path: str | Path, *, allow_approximate_tokens: bool = False) -> list[GenerationRecord]:
    """Read a record file in order, rejecting duplicate (task_id, gen_index) keys."""
    records: list[GenerationRecord] = []
    seen: dict[tuple[str, int], int] = {}
    for lineno, obj in _read_lines(path):
        rec = record_from_obj(obj, path, lineno, allow_approximate_tokens=allow_approximate_tokens)
        if rec.key in seen:
            raise RecordError(
                f"duplicate record key {rec.key!r} (first seen on line {seen[rec.key]})", path, lineno
            )
        seen[rec.key] = lineno
        records.append(rec)
    return records


def read_evals(path: str | Path) -> list[EvalResult]:
    evals: list[EvalResult] = []
    seen: dict[tuple[str, int], int] = {}
    for lineno, obj in _read_lines(path):
        ev = eval_from_obj(obj, path, lineno)
        if ev.key in seen:
            raise RecordError(
                f"duplicate eval key {ev.key!r} (first seen on line {seen[ev.key]})", path, lineno
            )
        seen[ev.key] = lineno
        evals.append(ev)
    return evals


def records_to_text(records: Iterable[GenerationRecord]) -> str:
    return "".join(canonical_json(record_to_obj(r)) + "\n" for r in records)


def evals_to_text(evals: Iterable[EvalResult]) -> str:
    return "".join(canonical_json(eval_to_obj(e)) + "\n" for e in evals)


def write_records(path: str | Path, records: Iterable[GenerationRecord]) -> None:
    Path(path).write_text(records_to_text(records), encoding="utf-8")


def write_evals(path: str | Path, evals: Iterable[EvalResult]) -> None:
    Path(path).write_text(evals_to_text(evals), encoding="utf-8")


def curated_from_obj(obj: dict[str, Any], path=None, lineno: int | None = None) -> CuratedSample:
    _check_version(obj, path, lineno)
    part = obj.get("part")
    if part is not None and not isinstance(part, str):
        raise RecordError(f"field 'part' has wrong type {type(part).__name__}", path, lineno)
    return CuratedSample(
        task_id=_require(obj, "task_id", str, path, lineno),
        gen_index=_require(obj, "gen_index", int, path, lineno),
        part=part,
        policy=_require(obj, "policy", str, path, lineno),
        speedup=float(_require(obj, "speedup", (int, float), path, lineno)),
        reasoning_tokens=_require(obj, "reasoning_tokens", int, path, lineno),
    )


def read_curated(path: str | Path) -> tuple[dict[str, Any], list[CuratedSample]]:
    """Read a curated dataset file: header object on line 1, then sample lines."""
    header: dict[str, Any] | None = None
    samples: list[CuratedSample] = []
    seen: dict[tuple[str, int], int] = {}
    for lineno, obj in _read_lines(path):
        if header is None:
            if "config" not in obj or "tallies" not in obj:
                raise RecordError("first line must be the curation header object", path, lineno)
            header = obj
            continue
        sample = curated_from_obj(obj, path, lineno)
        if sample.key in seen:
            raise RecordError(
                f"duplicate curated key {sample.key!r} (first seen on line {seen[sample.key]})",
                path,
                lineno,
            )
        seen[sample.key] = lineno
        samples.append(sample)
    if header is None:
        raise RecordError("empty curated dataset file", path)
    return header, samples


def _group_task_type(task_id: str, records: list[GenerationRecord]) -> str:
    tagged = {r.task_type for r in records} - {"unknown"}
    if len(tagged) > 1:
        raise RecordError(f"task {task_id!r} carries conflicting task_type tags {sorted(tagged)}")
    return tagged.pop() if tagged else "unknown"


def group_by_task(
    records: list[GenerationRecord], evals: list[EvalResult]
) -> list[TaskGroup]:
    """Join records with their evals into one TaskGroup per task, sorted by task_id.

    Records lacking an eval stay in the group with eval None (and are counted in
    a warning); an eval without a record, or two evals for one record, is an error.
    """
    by_key: dict[tuple[str, int], EvalResult] = {}
    for ev in evals:
        if ev.key in by_key:
            prev = by_key[ev.key]
            if prev.config_hash != ev.config_hash:
                raise RecordError(
                    f"record {ev.key!r} evaluated twice with differing config_hash "
                    f"({prev.config_hash!r} vs {ev.config_hash!r})"
                )
            raise RecordError(f"duplicate eval for record {ev.key!r}")
        by_key[ev.key] = ev

    by_task: dict[str, list[GenerationRecord]] = {}
    record_keys: set[tuple[str, int]] = set()
    for rec in records:
        if rec.key in record_keys:
            raise RecordError(f"duplicate record key {rec.key!r}")
        record_keys.add(rec.key)
        by_task.setdefault(rec.task_id, []).append(rec)

    orphans = sorted(k for k in by_key if k not in record_keys)
    if orphans:
        raise RecordError(f"eval keyed {orphans[0]!r} has no matching record")

    groups: list[TaskGroup] = []
    n_missing = 0
    for task_id in sorted(by_task):
        recs = sorted(by_task[task_id], key=lambda r: r.gen_index)
        items: list[tuple[GenerationRecord, EvalResult | None]] = []
        for rec in recs:
            ev = by_key.get(rec.key)
            if ev is None:
                n_missing += 1
            items.append((rec, ev))
        groups.append(TaskGroup(task_id=task_id, task_type=_group_task_type(task_id, recs), items=items))
    if n_missing:
        log.warning("%d record(s) have no eval; kept in groups with eval=None", n_missing)
    return groups


def count_summary(groups: list[TaskGroup]) -> dict[str, int]:
    """Totals over groups: tasks, generations, correct evals, tasks with >= 1 correct."""
    n_tasks = len(groups)
    n_generations = sum(len(g.items) for g in groups)
    n_correct = 0
    n_tasks_with_correct = 0
    for g in groups:
        correct = sum(1 for e in g.evals() if e.status == "correct")
        n_correct += correct
        if correct:
            n_tasks_with_correct += 1
    return {
        "n_tasks": n_tasks,
        "n_generations": n_generations,
        "n_correct": n_correct,
        "n_tasks_with_correct": n_tasks_with_correct,
    }
