from __future__ import annotations

import json
import subprocess
import sys

import pytest

TASK_SOURCE = """import torch
import torch.nn as nn


class Model(nn.Module):
    def forward(self, a, b):
        return a * b + a


def get_inputs():
    return [torch.randn(1 << 20), torch.randn(1 << 20)]


def get_init_inputs():
    return []
"""

# semantically identical candidate
GOOD_KERNEL = TASK_SOURCE.replace("class Model", "class ModelNew")

# same shapes, wrong values
WRONG_KERNEL = GOOD_KERNEL.replace("a * b + a", "a * b - a")

# raises on first call
RAISING_KERNEL = """import torch
import torch.nn as nn


class ModelNew(nn.Module):
    def forward(self, a, b):
        raise RuntimeError("deliberate failure")
"""

# returns the wrong shape
WRONG_SHAPE_KERNEL = GOOD_KERNEL.replace("a * b + a", "(a * b + a)[:16]")

FAST_CONFIG = {
    "warmup_iters": 0,
    "timed_iters": 2,
    "timing_agg": "median",
    "n_input_seeds": 2,
    "atol": 1e-2,
    "rtol": 1e-2,
    "timeout_s": 300.0,
    "device": "cpu",
}


class RunnerProcess:
    def __init__(self):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "kernel_runner", "--device", "cpu"],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )

    def send(self, frame: dict) -> None:
        self.proc.stdin.write(json.dumps(frame) + "\n")
        self.proc.stdin.flush()

    def recv(self, timeout_s: float = 120.0) -> dict:
        line = self.proc.stdout.readline()
        assert line, "runner closed its output stream"
        return json.loads(line)

    def close(self) -> int:
        self.proc.stdin.close()
        leftovers = self.proc.stdout.read()
        self.proc.wait(timeout=30)
        assert leftovers == "", f"unsolicited frames after close: {leftovers!r}"
        return self.proc.returncode


@pytest.fixture
def runner_process():
    rp = RunnerProcess()
    yield rp
    if rp.proc.poll() is None:
        rp.proc.kill()
        rp.proc.wait()
