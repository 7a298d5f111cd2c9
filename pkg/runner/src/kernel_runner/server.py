"""Serve the evaluation wire protocol on stdin/stdout, one request at a time.

Frames are newline-delimited JSON. The first frame must be the handshake
{"type":"hello","protocol":1}; the reply carries this runner's capability.
Result frames include t_ref_ms/t_kernel_ms only for status "correct".
Everything the runner or candidate code prints goes to stderr.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
import tempfile
from dataclasses import dataclass

PROTOCOL_VERSION = 1


@dataclass
class RunnerSession:
    """Serial request processor: one request at a time, workdir cleaned per request."""

    protocol_version: int = PROTOCOL_VERSION
    device: str = "cpu"
    compile_workdir: str | None = None


def _emit(stdout, frame: dict) -> None:
    stdout.write(json.dumps(frame, ensure_ascii=False, separators=(",", ":")) + "\n")
    stdout.flush()


def _capabilities(device: str) -> list[str]:
    if device == "gpu":
        import torch

        if torch.cuda.is_available():
            return ["gpu"]
        print("kernel-runner: gpu requested but CUDA is unavailable; serving cpu", file=sys.stderr)
    return ["cpu"]


def _handle_eval(frame: dict, session: RunnerSession) -> dict:
    # imported lazily so the handshake does not wait on torch
    from .executor import RunSettings, run_request

    settings = RunSettings.from_obj(frame.get("config") or {})
    session.compile_workdir = tempfile.mkdtemp(prefix="kernel-runner-")
    try:
        verdict = run_request(
            frame["task_source"], frame["kernel_source"], settings, workdir=session.compile_workdir
        )
    finally:
        shutil.rmtree(session.compile_workdir, ignore_errors=True)
        session.compile_workdir = None
    response: dict = {"type": "result", "id": frame["id"], "status": verdict.status}
    if verdict.status == "correct":
        response["t_ref_ms"] = verdict.t_ref_ms
        response["t_kernel_ms"] = verdict.t_kernel_ms
    response["diagnostics"] = verdict.diagnostics
    return response


def serve(device: str = "cpu", stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    session = RunnerSession(device=device)
    handshook = False
    while True:
        line = stdin.readline()
        if not line:
            return 0
        if not line.strip():
            continue
        try:
            frame = json.loads(line)
            if not isinstance(frame, dict):
                raise ValueError("frame is not an object")
        except ValueError as exc:
            _emit(stdout, {"type": "error", "error": f"malformed frame: {exc}"})
            continue

        kind = frame.get("type")
        if kind == "hello":
            if frame.get("protocol") != session.protocol_version:
                _emit(stdout, {"type": "error", "error": f"unsupported protocol {frame.get('protocol')!r}"})
                return 1
            _emit(
                stdout,
                {
                    "type": "hello",
                    "protocol": session.protocol_version,
                    "capabilities": _capabilities(session.device),
                },
            )
            handshook = True
            continue
        if kind == "eval":
            if not handshook:
                _emit(stdout, {"type": "error", "error": "eval before handshake"})
                continue
            if not all(isinstance(frame.get(k), str) for k in ("id", "task_source", "kernel_source")):
                _emit(stdout, {"type": "error", "error": "eval frame missing id/task_source/kernel_source"})
                continue
            _emit(stdout, _handle_eval(frame, session))
            continue
        _emit(stdout, {"type": "error", "error": f"unknown frame type {kind!r}"})


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kernel-runner",
        description="Compile, check, and time candidate kernels against their reference "
        "programs over the stdio evaluation protocol.",
    )
    parser.add_argument("--device", choices=["cpu", "gpu"], default="cpu", help="execution device")
    args = parser.parse_args(argv)
    return serve(device=args.device)


if __name__ == "__main__":
    sys.exit(main())
