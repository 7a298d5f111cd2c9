"""Materialize reference and candidate modules, check output equality, time both.

The reference source must define ``Model`` (a torch.nn.Module), ``get_inputs()``
and optionally ``get_init_inputs()``; the candidate source must define
``ModelNew``. Verdicts are deterministic for fixed seeds and tolerances;
timings are not.
"""

from __future__ import annotations

import contextlib
import copy
import os
import shutil
import statistics
import sys
import tempfile
import time
import types
from dataclasses import dataclass

import torch


@dataclass
class RunSettings:
    warmup_iters: int = 3
    timed_iters: int = 10
    timing_agg: str = "median"
    n_input_seeds: int = 5
    atol: float = 1e-2
    rtol: float = 1e-2
    timeout_s: float = 300.0
    device: str = "cpu"

    @classmethod
    def from_obj(cls, obj: dict) -> "RunSettings":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in obj.items() if k in known})


@dataclass
class Verdict:
    status: str  # correct | incorrect | compile_error | runtime_error
    t_ref_ms: float | None = None
    t_kernel_ms: float | None = None
    diagnostics: str = ""


class _Failure(Exception):
    def __init__(self, status: str, diagnostics: str):
        super().__init__(diagnostics)
        self.status = status
        self.diagnostics = diagnostics


def _load_module(source: str, name: str, required_attr: str) -> types.ModuleType:
    module = types.ModuleType(name)
    module.__dict__["__name__"] = name
    try:
        code = compile(source, f"<{name}>", "exec")
        exec(code, module.__dict__)
    except Exception as exc:
        raise _Failure("compile_error", f"{name} failed to build: {type(exc).__name__}: {exc}")
    if not hasattr(module, required_attr):
        raise _Failure("compile_error", f"{name} does not define {required_attr}")
    return module


def _instantiate(module_cls, init_inputs, device: str):
    torch.manual_seed(0)  # both sides get identical random init
    model = module_cls(*init_inputs)
    model = model.cuda() if device == "gpu" else model
    model.eval()
    return model


def _to_device(value, device: str):
    if isinstance(value, torch.Tensor):
        return value.cuda() if device == "gpu" else value
    if isinstance(value, (list, tuple)):
        return type(value)(_to_device(v, device) for v in value)
    return value


def _clone(value):
    if isinstance(value, torch.Tensor):
        return value.detach().clone()
    if isinstance(value, (list, tuple)):
        return type(value)(_clone(v) for v in value)
    return copy.deepcopy(value)


def compare_outputs(ref, cand, atol: float, rtol: float, path: str = "output") -> str | None:
    """None when outputs match; otherwise a diagnostic naming the first mismatch."""
    if isinstance(ref, torch.Tensor):
        if not isinstance(cand, torch.Tensor):
            return f"{path}: expected a tensor, got {type(cand).__name__}"
        if tuple(ref.shape) != tuple(cand.shape):
            return f"{path}: shape mismatch: expected {tuple(ref.shape)}, got {tuple(cand.shape)}"
        if not torch.allclose(
            ref, cand.to(device=ref.device, dtype=ref.dtype), atol=atol, rtol=rtol, equal_nan=True
        ):
            delta = (ref.double() - cand.to(device=ref.device).double()).abs().max().item()
            return f"{path}: values differ (max abs diff {delta:.6g}, atol={atol}, rtol={rtol})"
        return None
    if isinstance(ref, (list, tuple)):
        if not isinstance(cand, (list, tuple)) or len(cand) != len(ref):
            return f"{path}: expected a sequence of {len(ref)} outputs"
        for i, (r, c) in enumerate(zip(ref, cand)):
            mismatch = compare_outputs(r, c, atol, rtol, f"{path}[{i}]")
            if mismatch:
                return mismatch
        return None
    if isinstance(ref, dict):
        if not isinstance(cand, dict) or set(cand) != set(ref):
            return f"{path}: dict keys differ"
        for key in sorted(ref):
            mismatch = compare_outputs(ref[key], cand[key], atol, rtol, f"{path}[{key!r}]")
            if mismatch:
                return mismatch
        return None
    if isinstance(ref, (int, float)):
        if not isinstance(cand, (int, float)) or abs(float(ref) - float(cand)) > atol + rtol * abs(float(ref)):
            return f"{path}: scalar mismatch: expected {ref!r}, got {cand!r}"
        return None
    if ref != cand:
        return f"{path}: value mismatch: expected {ref!r}, got {cand!r}"
    return None


def _time_forward(model, inputs, settings: RunSettings) -> float:
    def call():
        with torch.no_grad():
            model(*inputs)
        if settings.device == "gpu":
            torch.cuda.synchronize()

    for _ in range(settings.warmup_iters):
        call()
    samples = []
    for _ in range(settings.timed_iters):
        start = time.perf_counter()
        call()
        samples.append((time.perf_counter() - start) * 1000.0)
    value = statistics.mean(samples) if settings.timing_agg == "mean" else statistics.median(samples)
    return max(value, 1e-6)  # timings must stay strictly positive


def run_request(
    task_source: str, kernel_source: str, settings: RunSettings, workdir: str | None = None
) -> Verdict:
    """Full check-then-benchmark path for one candidate.

    A caller-provided workdir is used as the compile scratch space and left for
    the caller to clean up; otherwise a private temp dir is made and removed.
    """
    if settings.device == "gpu" and not torch.cuda.is_available():
        return Verdict(
            status="compile_error",
            diagnostics="gpu requested but this runner has no CUDA capability",
        )

    own_workdir = workdir is None
    if own_workdir:
        workdir = tempfile.mkdtemp(prefix="kernel-runner-")
    previous_ext_dir = os.environ.get("TORCH_EXTENSIONS_DIR")
    os.environ["TORCH_EXTENSIONS_DIR"] = workdir
    try:
        # candidate code must never write to the protocol stream
        with contextlib.redirect_stdout(sys.stderr):
            return _run_inner(task_source, kernel_source, settings)
    except _Failure as failure:
        return Verdict(status=failure.status, diagnostics=failure.diagnostics)
    except Exception as exc:  # anything unexpected maps to runtime_error
        return Verdict(status="runtime_error", diagnostics=f"{type(exc).__name__}: {exc}")
    finally:
        if previous_ext_dir is None:
            os.environ.pop("TORCH_EXTENSIONS_DIR", None)
        else:
            os.environ["TORCH_EXTENSIONS_DIR"] = previous_ext_dir
        if own_workdir:
            shutil.rmtree(workdir, ignore_errors=True)


def _run_inner(task_source: str, kernel_source: str, settings: RunSettings) -> Verdict:
    reference = _load_module(task_source, "reference_module", "Model")
    candidate = _load_module(kernel_source, "candidate_module", "ModelNew")
    if not hasattr(reference, "get_inputs"):
        raise _Failure("compile_error", "reference_module does not define get_inputs")

    init_inputs = list(reference.get_init_inputs()) if hasattr(reference, "get_init_inputs") else []

    try:
        ref_model = _instantiate(reference.Model, init_inputs, settings.device)
    except Exception as exc:
        raise _Failure("runtime_error", f"reference model failed to build: {type(exc).__name__}: {exc}")
    try:
        cand_model = _instantiate(candidate.ModelNew, init_inputs, settings.device)
    except Exception as exc:
        raise _Failure("runtime_error", f"candidate model failed to build: {type(exc).__name__}: {exc}")

    for seed in range(settings.n_input_seeds):
        torch.manual_seed(seed)
        inputs = _to_device(list(reference.get_inputs()), settings.device)
        try:
            with torch.no_grad():
                ref_out = ref_model(*_clone(inputs))
        except Exception as exc:
            raise _Failure("runtime_error", f"reference raised on seed {seed}: {type(exc).__name__}: {exc}")
        try:
            with torch.no_grad():
                cand_out = cand_model(*_clone(inputs))
        except Exception as exc:
            raise _Failure("runtime_error", f"candidate raised on seed {seed}: {type(exc).__name__}: {exc}")
        mismatch = compare_outputs(ref_out, cand_out, settings.atol, settings.rtol)
        if mismatch:
            return Verdict(status="incorrect", diagnostics=f"seed {seed}: {mismatch}")

    torch.manual_seed(1234)
    timing_inputs = _to_device(list(reference.get_inputs()), settings.device)
    try:
        t_ref = _time_forward(ref_model, _clone(timing_inputs), settings)
        t_kernel = _time_forward(cand_model, _clone(timing_inputs), settings)
    except Exception as exc:
        raise _Failure("runtime_error", f"benchmarking failed: {type(exc).__name__}: {exc}")
    return Verdict(status="correct", t_ref_ms=t_ref, t_kernel_ms=t_kernel)
