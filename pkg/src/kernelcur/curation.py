"""Curated-dataset selection and SFT export.

The combined policy ("concur") unions three rules with A > B > C dedup
priority: (a) per task, the generation with the shortest reasoning, kept only
when it is correct and no other generation of that task beats its speedup;
(b) every correct generation whose speedup strictly exceeds a threshold;
(c) a balancing pass over single-operator tasks not yet represented. The four
single-rule policies (random / max_len / min_len / speedup_first) pick one
correct generation per task and then keep a fixed number of tasks.
"""

from __future__ import annotations

import logging
import random
import re
import string
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Sequence

from .records import CuratedSample, GenerationRecord, TaskGroup

log = logging.getLogger(__name__)

POLICIES = ("concur", "random", "max_len", "min_len", "speedup_first")

PART_A = "A_short_and_fast"
PART_B = "B_high_speedup"
PART_C = "C_single_op_balance"

Key = tuple[str, int]


@dataclass(frozen=True)
class CurationConfig:
    speedup_threshold: float = 5.0
    single_op_target: int = 0  # 0 = take all available
    policy: str = "concur"
    seed: int = 0
    target_size: int = 4892
    infer_single_op: bool = False  # heuristic task typing for untagged tasks

    def __post_init__(self):
        if self.speedup_threshold <= 0:
            raise ValueError("speedup_threshold must be > 0")
        if self.single_op_target < 0:
            raise ValueError("single_op_target must be >= 0")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.target_size < 1:
            raise ValueError("target_size must be >= 1")


_OP_CALL = re.compile(r"\b(?:torch|F|nn\.functional)\.(\w+)\s*\(|\bnn\.([A-Z]\w*)\s*\(")
_NON_OPS = {"randn", "rand", "randint", "zeros", "ones", "empty", "tensor", "manual_seed", "Module"}


def infer_task_type(task_source: str) -> str:
    """Heuristic tag: exactly one distinct operator call means single_op."""
    ops = set()
    for m in _OP_CALL.finditer(task_source):
        name = m.group(1) or m.group(2)
        if name not in _NON_OPS:
            ops.add(name)
    if not ops:
        return "unknown"
    return "single_op" if len(ops) == 1 else "multi_op"


def apply_task_type_heuristic(groups: Sequence[TaskGroup]) -> list[TaskGroup]:
    """Retag unknown-type groups from their task source; tagged groups pass through."""
    out = []
    for g in groups:
        if g.task_type == "unknown" and g.items:
            inferred = infer_task_type(g.items[0][0].task_source)
            if inferred != "unknown":
                g = TaskGroup(task_id=g.task_id, task_type=inferred, items=g.items)
        out.append(g)
    return out


def _is_correct(ev) -> bool:
    return ev is not None and ev.status == "correct"


def _speedup_of(ev) -> float:
    return ev.speedup if ev is not None else 0.0


def _sample(rec: GenerationRecord, ev, part: str | None, policy: str) -> CuratedSample:
    return CuratedSample(
        task_id=rec.task_id,
        gen_index=rec.gen_index,
        part=part,
        policy=policy,
        speedup=_speedup_of(ev),
        reasoning_tokens=rec.reasoning_tokens,
    )


def select_part_a(group: TaskGroup, policy: str = "concur") -> CuratedSample | None:
    """Emit the shortest-reasoning generation iff it is correct and its speedup
    is at least every other generation's speedup (and positive)."""
    if not group.items:
        raise ValueError("select_part_a on empty group")
    shortest_rec, shortest_ev = min(
        group.items, key=lambda item: (item[0].reasoning_tokens, item[0].gen_index)
    )
    if not _is_correct(shortest_ev):
        return None
    s = _speedup_of(shortest_ev)
    if s <= 0:
        return None
    if any(_speedup_of(ev) > s for rec, ev in group.items if rec.gen_index != shortest_rec.gen_index):
        return None
    return _sample(shortest_rec, shortest_ev, PART_A, policy)


def select_part_b(
    groups: Sequence[TaskGroup],
    threshold: float,
    already: set[Key] | None = None,
    policy: str = "concur",
) -> list[CuratedSample]:
    """Every correct generation with speedup strictly above the threshold,
    excluding keys already chosen by the shortest-and-fastest rule."""
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    if already is None:
        already = set()
        for g in groups:
            chosen = select_part_a(g)
            if chosen is not None:
                already.add(chosen.key)
    out = []
    for g in groups:
        for rec, ev in g.items:
            if not _is_correct(ev) or ev.speedup <= threshold:
                continue
            if (rec.task_id, rec.gen_index) in already:
                continue
            out.append(_sample(rec, ev, PART_B, policy))
    out.sort(key=lambda s: (s.task_id, s.gen_index))
    return out


def _best_correct(group: TaskGroup):
    """Highest speedup; ties go to shorter reasoning, then lower gen_index."""
    correct = [(rec, ev) for rec, ev in group.items if _is_correct(ev)]
    if not correct:
        return None
    return min(correct, key=lambda item: (-item[1].speedup, item[0].reasoning_tokens, item[0].gen_index))


def select_part_c(
    groups: Sequence[TaskGroup],
    already: set[Key],
    target: int,
    policy: str = "concur",
) -> list[CuratedSample]:
    """Best correct generation per single-operator task not yet represented,
    sorted by descending speedup and truncated to target (0 = all)."""
    if target < 0:
        raise ValueError("target must be >= 0")
    represented = {task_id for task_id, _ in already}
    picks: list[CuratedSample] = []
    for g in groups:
        if g.task_type != "single_op" or g.task_id in represented:
            continue
        best = _best_correct(g)
        if best is None:
            continue
        picks.append(_sample(best[0], best[1], PART_C, policy))
    picks.sort(key=lambda s: (-s.speedup, s.task_id))
    if target:
        picks = picks[:target]
    return picks


def count_unknown_type_tasks(groups: Sequence[TaskGroup]) -> int:
    """Tasks the balancing rule cannot consider because their type is untagged."""
    return sum(1 for g in groups if g.task_type == "unknown")


def _clamp_target(n_available: int, target: int, policy: str) -> int:
    if target > n_available:
        log.warning(
            "policy %s: target_size %d exceeds %d available tasks; clamping",
            policy,
            target,
            n_available,
        )
        return n_available
    return target


def _per_task_pick(
    groups: Sequence[TaskGroup],
    pick: Callable[[list[tuple[GenerationRecord, Any]]], tuple[GenerationRecord, Any]],
) -> list[tuple[GenerationRecord, Any]]:
    picks = []
    for g in sorted(groups, key=lambda g: g.task_id):
        correct = [(rec, ev) for rec, ev in g.items if _is_correct(ev)]
        if not correct:
            continue  # tasks with no correct generation are skipped
        picks.append(pick(correct))
    return picks


def curate(groups: Sequence[TaskGroup], cfg: CurationConfig) -> list[CuratedSample]:
    """Run the configured selection policy; output sorted by (part, task_id, gen_index)."""
    if cfg.infer_single_op:
        groups = apply_task_type_heuristic(groups)
    if cfg.policy == "concur":
        part_a: list[CuratedSample] = []
        for g in sorted(groups, key=lambda g: g.task_id):
            chosen = select_part_a(g)
            if chosen is not None:
                part_a.append(chosen)
        keys_a = {s.key for s in part_a}
        part_b = select_part_b(groups, cfg.speedup_threshold, already=keys_a)
        keys_ab = keys_a | {s.key for s in part_b}
        part_c = select_part_c(groups, keys_ab, cfg.single_op_target)
        samples = part_a + part_b + part_c
    else:
        if cfg.policy == "random":
            rng = random.Random(cfg.seed)
            picks = _per_task_pick(
                groups,
                lambda correct: rng.choice(sorted(correct, key=lambda it: it[0].gen_index)),
            )
            keep = _clamp_target(len(picks), cfg.target_size, cfg.policy)
            picks = rng.sample(picks, keep)
        elif cfg.policy in ("max_len", "min_len"):
            sign = -1 if cfg.policy == "max_len" else 1
            picks = _per_task_pick(
                groups,
                lambda correct: min(
                    correct, key=lambda it: (sign * it[0].reasoning_tokens, it[0].gen_index)
                ),
            )
            picks.sort(key=lambda it: (sign * it[0].reasoning_tokens, it[0].task_id))
            picks = picks[: _clamp_target(len(picks), cfg.target_size, cfg.policy)]
        elif cfg.policy == "speedup_first":
            picks = _per_task_pick(
                groups,
                lambda correct: min(correct, key=lambda it: (-it[1].speedup, it[0].gen_index)),
            )
            picks.sort(key=lambda it: (-it[1].speedup, it[0].task_id))
            picks = picks[: _clamp_target(len(picks), cfg.target_size, cfg.policy)]
        else:  # pragma: no cover - CurationConfig already validates
            raise ValueError(f"unknown policy {cfg.policy!r}")
        samples = [_sample(rec, ev, None, cfg.policy) for rec, ev in picks]

    samples.sort(key=lambda s: (s.part or "", s.task_id, s.gen_index))
    return samples


def part_tallies(samples: Iterable[CuratedSample]) -> dict[str, int]:
    tallies = {PART_A: 0, PART_B: 0, PART_C: 0}
    for s in samples:
        if s.part is not None:
            tallies[s.part] += 1
    return tallies


def curation_header(
    cfg: CurationConfig, samples: Sequence[CuratedSample], groups: Sequence[TaskGroup]
) -> dict[str, Any]:
    """Header object written as line 1 of a curated dataset file."""
    return {
        "version": 1,
        "config": {
            "speedup_threshold": cfg.speedup_threshold,
            "single_op_target": cfg.single_op_target,
            "policy": cfg.policy,
            "seed": cfg.seed,
            "target_size": cfg.target_size,
            "infer_single_op": cfg.infer_single_op,
        },
        "tallies": part_tallies(samples),
        "n_samples": len(samples),
        "n_unknown_type_tasks": count_unknown_type_tasks(groups),
    }


# --- SFT export ------------------------------------------------------------

PLACEHOLDERS = ("ref_arch_torch", "ref_arch_kernel", "code")

THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"

DEFAULT_FEWSHOT_TORCH = '''import torch
import torch.nn as nn


class Model(nn.Module):
    """Element-wise sum of two tensors."""

    def __init__(self):
        super().__init__()

    def forward(self, a, b):
        return a + b


def get_inputs():
    return [torch.randn(1, 128).cuda(), torch.randn(1, 128).cuda()]


def get_init_inputs():
    return []
'''

DEFAULT_FEWSHOT_KERNEL = '''import torch
import torch.nn as nn
from torch.utils.cpp_extension import load_inline

elementwise_add_source = """
#include <torch/extension.h>
#include <cuda_runtime.h>

__global__ void elementwise_add_kernel(const float* a, const float* b, float* out, int size) {
    int idx = blockIdx.x * blockDim.x + threadIdx.x;
    if (idx < size) {
        out[idx] = a[idx] + b[idx];
    }
}

torch::Tensor elementwise_add_cuda(torch::Tensor a, torch::Tensor b) {
    auto size = a.numel();
    auto out = torch::zeros_like(a);
    const int block_size = 256;
    const int num_blocks = (size + block_size - 1) / block_size;
    elementwise_add_kernel<<<num_blocks, block_size>>>(
        a.data_ptr<float>(), b.data_ptr<float>(), out.data_ptr<float>(), size);
    return out;
}
"""

elementwise_add_decl = "torch::Tensor elementwise_add_cuda(torch::Tensor a, torch::Tensor b);"

elementwise_add = load_inline(
    name="elementwise_add",
    cpp_sources=elementwise_add_decl,
    cuda_sources=elementwise_add_source,
    functions=["elementwise_add_cuda"],
    verbose=False,
)


class ModelNew(nn.Module):
    def __init__(self):
        super().__init__()
        self.elementwise_add = elementwise_add

    def forward(self, a, b):
        return self.elementwise_add.elementwise_add_cuda(a, b)
'''

DEFAULT_PROMPT_TEMPLATE = '''You are a machine learning engineer writing custom CUDA kernels to replace the PyTorch operators in a given architecture and obtain speedups.
You are free to choose which operators to replace: swap some for custom CUDA kernels and leave others unchanged, fuse several operators into a single kernel (for example matmul+relu), or make algorithmic changes (such as online softmax) whenever that helps.

For [Imports], you will likely need but are not limited to the following libraries:
```
import torch
import torch.nn as nn
import torch.nn.functional as F
import math
```

Here is an example showing the syntax for inline-embedding custom CUDA operators in torch.
The PyTorch module to optimize is:
```
$ref_arch_torch
```

The example new architecture with custom CUDA kernels looks like this:
```
$ref_arch_kernel
```

And the PyTorch code you need to optimize is:
```
$code
```
Optimize the architecture named Model with custom CUDA kernels! Name your optimized output architecture ModelNew. Output the new code in code blocks. Please generate real code, NOT pseudocode, and make sure it compiles and is fully functional. Just output the new model code, no other text, and NO testing code!
'''


@dataclass(frozen=True)
class PromptTemplate:
    """Prompt text carrying $ref_arch_torch, $ref_arch_kernel, and $code exactly once each."""

    text: str

    def validate(self) -> None:
        counts = {name: 0 for name in PLACEHOLDERS}
        unknown = []
        for mo in re.finditer(string.Template.pattern, self.text):
            name = mo.group("named") or mo.group("braced")
            if name is None:
                continue
            if name in counts:
                counts[name] += 1
            else:
                unknown.append(name)
        for name, n in counts.items():
            if n == 0:
                raise ValueError(f"template is missing placeholder ${name}")
            if n > 1:
                raise ValueError(f"template repeats placeholder ${name} ({n} times)")
        if unknown:
            raise ValueError(f"template has unknown placeholder ${unknown[0]}")

    def render(self, *, ref_arch_torch: str, ref_arch_kernel: str, code: str) -> str:
        self.validate()
        return string.Template(self.text).substitute(
            ref_arch_torch=ref_arch_torch, ref_arch_kernel=ref_arch_kernel, code=code
        )


def default_template() -> PromptTemplate:
    return PromptTemplate(DEFAULT_PROMPT_TEMPLATE)


def record_lookup(records: Iterable[GenerationRecord]) -> dict[Key, GenerationRecord]:
    return {r.key: r for r in records}


def export_sft(
    samples: Sequence[CuratedSample],
    records: dict[Key, GenerationRecord],
    template: PromptTemplate,
    *,
    fewshot_torch: str = DEFAULT_FEWSHOT_TORCH,
    fewshot_kernel: str = DEFAULT_FEWSHOT_KERNEL,
    think_open: str = THINK_OPEN,
    think_close: str = THINK_CLOSE,
) -> list[dict[str, str]]:
    """Render curated samples into {prompt, response, loss_on} training examples.

    The response is the reasoning trace wrapped in the think delimiters followed
    by the kernel source; with an empty trace the delimiters are omitted and the
    response is the kernel alone.
    """
    template.validate()
    examples = []
    for sample in samples:
        rec = records.get(sample.key)
        if rec is None:
            raise KeyError(f"curated sample {sample.key!r} has no matching record")
        prompt = template.render(
            ref_arch_torch=fewshot_torch, ref_arch_kernel=fewshot_kernel, code=rec.task_source
        )
        if rec.reasoning_trace:
            response = f"{think_open}\n{rec.reasoning_trace}\n{think_close}\n{rec.kernel_source}"
        else:
            response = rec.kernel_source
        examples.append({"prompt": prompt, "response": response, "loss_on": "response"})
    return examples
