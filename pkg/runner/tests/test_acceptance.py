"""Acceptance gate for the runner: protocol conformance against golden
transcripts, and the CPU round-trip through the pipeline's evaluate command.
Run with ``pytest -s`` to see the per-criterion lines. CPU only.
"""

from __future__ import annotations

import contextlib
import json
import shlex
import subprocess
import sys

from conftest import (
    FAST_CONFIG,
    GOOD_KERNEL,
    RAISING_KERNEL,
    TASK_SOURCE,
    WRONG_KERNEL,
    RunnerProcess,
)

STATUS_ENUM = {"correct", "incorrect", "compile_error", "runtime_error", "timeout"}


@contextlib.contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {name}: FAIL", flush=True)
        raise
    print(f"\nACCEPTANCE {name}: PASS", flush=True)


def golden_request(req_id: str, kernel_source: str) -> dict:
    return {
        "type": "eval",
        "id": req_id,
        "task_source": TASK_SOURCE,
        "kernel_source": kernel_source,
        "config": dict(FAST_CONFIG),
    }


def test_protocol_conformance(runner_process: RunnerProcess):
    with criterion("protocol-conformance"):
        rp = runner_process

        # golden handshake
        rp.send({"type": "hello", "protocol": 1})
        reply = rp.recv()
        assert reply == {"type": "hello", "protocol": 1, "capabilities": ["cpu"]}

        # golden requests: exactly one response per request, in order
        requests = [
            golden_request("req-0", GOOD_KERNEL),
            golden_request("req-1", WRONG_KERNEL),
            golden_request("req-2", RAISING_KERNEL),
        ]
        expected_status = ["correct", "incorrect", "runtime_error"]
        for req in requests:
            rp.send(req)
        for req, want in zip(requests, expected_status):
            frame = rp.recv()
            assert frame["type"] == "result"
            assert frame["id"] == req["id"]
            assert frame["status"] == want
            assert frame["status"] in STATUS_ENUM
            if frame["status"] == "correct":
                assert set(frame) == {"type", "id", "status", "t_ref_ms", "t_kernel_ms", "diagnostics"}
                assert frame["t_ref_ms"] > 0 and frame["t_kernel_ms"] > 0
            else:
                # timing fields present iff correct
                assert set(frame) == {"type", "id", "status", "diagnostics"}

        # verdict determinism: re-issuing a request repeats the status
        rp.send(golden_request("req-3", WRONG_KERNEL))
        assert rp.recv()["status"] == "incorrect"

        assert rp.close() == 0  # clean exit, no unsolicited frames


def record_line(task_id: str, kernel_source: str) -> str:
    return json.dumps(
        {
            "version": 1,
            "task_id": task_id,
            "gen_index": 0,
            "task_source": TASK_SOURCE,
            "kernel_source": kernel_source,
            "reasoning_trace": "direct translation",
            "reasoning_tokens": 3,
            "task_type": "single_op",
        }
    )


def test_cpu_round_trip(tmp_path):
    with criterion("cpu-round-trip"):
        records_path = tmp_path / "records.jsonl"
        records_path.write_text(
            record_line("identity", GOOD_KERNEL) + "\n"
            + record_line("wrong-output", WRONG_KERNEL) + "\n"
            + record_line("raises", RAISING_KERNEL) + "\n",
            encoding="utf-8",
        )
        out_path = tmp_path / "evals.jsonl"
        runner_cmd = f"{shlex.quote(sys.executable)} -m kernel_runner --device cpu"

        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "kernelcur",
                "evaluate",
                "--records",
                str(records_path),
                "--runner",
                f"cmd:{runner_cmd}",
                "--out",
                str(out_path),
                "--device",
                "cpu",
                "--n-input-seeds",
                "3",
                "--timed-iters",
                "10",
                "--timeout-s",
                "300",
            ],
            capture_output=True,
            text=True,
            timeout=600,
        )
        assert proc.returncode == 0, proc.stderr

        by_task = {}
        for line in out_path.read_text(encoding="utf-8").splitlines():
            obj = json.loads(line)
            by_task[obj["task_id"]] = obj

        assert by_task["identity"]["status"] == "correct"
        assert 0.5 <= by_task["identity"]["speedup"] <= 2.0
        assert by_task["wrong-output"]["status"] == "incorrect"
        assert by_task["wrong-output"]["speedup"] == 0
        assert by_task["raises"]["status"] == "runtime_error"
        assert by_task["raises"]["speedup"] == 0
