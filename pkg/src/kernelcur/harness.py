"""Evaluation orchestrator over pluggable runners.

Runners are either in-process mocks or external processes speaking a
newline-delimited JSON protocol on stdin/stdout:

  handshake  ->  {"type":"hello","protocol":1}
             <-  {"type":"hello","protocol":1,"capabilities":["gpu"|"cpu"]}
  request    ->  {"type":"eval","id":...,"task_source":...,"kernel_source":...,"config":{...}}
  response   <-  {"type":"result","id":...,"status":...,"t_ref_ms":...,"t_kernel_ms":...,"diagnostics":...}

Runner logs belong on stderr. The orchestrator enforces per-request timeouts,
restarts crashed processes within a bounded re-issue budget, caches results by
content, and produces output that depends only on the inputs and the runner's
behavior, never on worker count or scheduling.
"""

from __future__ import annotations

import hashlib
import json
import os
import select
import shlex
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from . import metrics
from .records import STATUSES, EvalResult, GenerationRecord, canonical_json

PROTOCOL_VERSION = 1

Key = tuple[str, int]


class HandshakeError(RuntimeError):
    pass


class ProtocolViolation(RuntimeError):
    """Unknown id, malformed frame, or a fixture hole; aborts the batch."""


class RunnerCrash(RuntimeError):
    """Runner process died and the re-issue budget is exhausted."""


class RunnerTimeout(RuntimeError):
    """No response within the configured per-request timeout."""


class BatchAborted(RuntimeError):
    """Raised by evaluate() on protocol violation; carries the completed work."""

    def __init__(self, message: str, completed: list[EvalResult]):
        super().__init__(message)
        self.completed = completed


@dataclass(frozen=True)
class RunConfig:
    warmup_iters: int = 3
    timed_iters: int = 10
    timing_agg: str = "median"
    n_input_seeds: int = 5
    atol: float = 1e-2
    rtol: float = 1e-2
    timeout_s: float = 300.0
    device: str = "gpu"

    def __post_init__(self):
        if self.warmup_iters < 0:
            raise ValueError("warmup_iters must be >= 0")
        if self.timed_iters < 1:
            raise ValueError("timed_iters must be >= 1")
        if self.timing_agg not in ("median", "mean"):
            raise ValueError(f"unknown timing_agg {self.timing_agg!r}")
        if self.n_input_seeds < 1:
            raise ValueError("n_input_seeds must be >= 1")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be > 0")
        if self.device not in ("gpu", "cpu"):
            raise ValueError(f"unknown device {self.device!r}")

    def to_obj(self) -> dict[str, Any]:
        return {
            "warmup_iters": self.warmup_iters,
            "timed_iters": self.timed_iters,
            "timing_agg": self.timing_agg,
            "n_input_seeds": self.n_input_seeds,
            "atol": self.atol,
            "rtol": self.rtol,
            "timeout_s": self.timeout_s,
            "device": self.device,
        }

    def config_hash(self) -> str:
        digest = hashlib.sha256(canonical_json(self.to_obj()).encode("utf-8"))
        return digest.hexdigest()[:16]


@dataclass(frozen=True)
class RunnerRequest:
    id: str
    task_source: str
    kernel_source: str
    run_config: RunConfig

    def to_frame(self) -> dict[str, Any]:
        return {
            "type": "eval",
            "id": self.id,
            "task_source": self.task_source,
            "kernel_source": self.kernel_source,
            "config": self.run_config.to_obj(),
        }


@dataclass
class RunnerResponse:
    id: str
    status: str
    t_ref_ms: float | None = None
    t_kernel_ms: float | None = None
    diagnostics: str = ""


# --- result cache ------------------------------------------------------------


def cache_key(task_source: str, kernel_source: str, config_hash: str) -> str:
    payload = canonical_json(
        {"task_source": task_source, "kernel_source": kernel_source, "config_hash": config_hash}
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


class ResultCache:
    """Content-addressed result store: one JSON file per entry plus an index.

    A corrupt entry file behaves as a miss and is dropped; the other entries
    are untouched.
    """

    _ENTRY_FIELDS = ("status", "speedup", "diagnostics", "config_hash")

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.index_path = self.root / "index.json"
        self.hits = 0
        self.misses = 0
        self._index: dict[str, str] | None = None

    def _entry_path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> dict[str, Any] | None:
        path = self._entry_path(key)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            self.misses += 1
            return None
        except (json.JSONDecodeError, OSError):
            path.unlink(missing_ok=True)
            self.misses += 1
            return None
        if not isinstance(obj, dict) or any(f not in obj for f in self._ENTRY_FIELDS):
            path.unlink(missing_ok=True)
            self.misses += 1
            return None
        self.hits += 1
        return obj

    def put(self, key: str, payload: dict[str, Any]) -> None:
        path = self._entry_path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write_text(path, canonical_json(payload) + "\n")
        if self._index is None:
            self._load_index()
        assert self._index is not None
        self._index[key] = str(path.relative_to(self.root))

    def _load_index(self) -> None:
        try:
            obj = json.loads(self.index_path.read_text(encoding="utf-8"))
            entries = obj.get("entries", {})
            self._index = dict(entries) if isinstance(entries, dict) else {}
        except (FileNotFoundError, json.JSONDecodeError, OSError):
            self._index = {}

    def flush_index(self) -> None:
        if self._index is None:
            return
        obj = {"version": 1, "entries": dict(sorted(self._index.items()))}
        _atomic_write_text(self.index_path, canonical_json(obj) + "\n")


# --- mock runners -------------------------------------------------------------

_HASHED_STATUSES = ("correct", "incorrect", "compile_error", "runtime_error")


class _MockRunnerBase:
    capabilities = ["cpu"]

    def __init__(self):
        self.invocations = 0
        self._lock = threading.Lock()

    def start(self) -> None:
        pass

    def close(self) -> None:
        pass

    def _count(self) -> None:
        with self._lock:
            self.invocations += 1


class ScriptedMockRunner(_MockRunnerBase):
    """Returns fixture verdicts keyed by (task_id, gen_index)."""

    def __init__(self, fixture: dict[Key, RunnerResponse]):
        super().__init__()
        self.fixture = fixture

    def run(self, key: Key, request: RunnerRequest) -> RunnerResponse:
        self._count()
        verdict = self.fixture.get(key)
        if verdict is None:
            raise ProtocolViolation(f"scripted fixture has no entry for {key!r}")
        return RunnerResponse(
            id=request.id,
            status=verdict.status,
            t_ref_ms=verdict.t_ref_ms,
            t_kernel_ms=verdict.t_kernel_ms,
            diagnostics=verdict.diagnostics,
        )


class HashedMockRunner(_MockRunnerBase):
    """Deterministic verdicts derived from a digest of the kernel source."""

    def run(self, key: Key, request: RunnerRequest) -> RunnerResponse:
        self._count()
        digest = hashlib.sha256(request.kernel_source.encode("utf-8")).digest()
        status = _HASHED_STATUSES[digest[0] % 4]
        t_ref = t_kernel = None
        if status == "correct":
            # strictly positive timings in [0.5, 10.0], derived from digest bytes
            t_ref = 0.5 + int.from_bytes(digest[1:3], "big") / 65535.0 * 9.5
            t_kernel = 0.5 + int.from_bytes(digest[3:5], "big") / 65535.0 * 9.5
        return RunnerResponse(
            id=request.id, status=status, t_ref_ms=t_ref, t_kernel_ms=t_kernel, diagnostics=""
        )


def mock_runner(mode: str, fixture: dict[Key, RunnerResponse] | None = None):
    if mode == "scripted":
        if fixture is None:
            raise ValueError("scripted mode requires a fixture map")
        return ScriptedMockRunner(fixture)
    if mode == "hashed":
        return HashedMockRunner()
    raise ValueError(f"unknown mock mode {mode!r}")


# --- external runner ----------------------------------------------------------


class _SessionDead(RuntimeError):
    pass


class _Session:
    """One runner process with buffered newline-delimited frame I/O."""

    def __init__(self, argv: list[str], serial: int):
        self.serial = serial
        try:
            self.proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0
            )
        except OSError as exc:
            raise HandshakeError(f"cannot spawn runner {argv!r}: {exc}") from exc
        self._buf = bytearray()

    def send(self, frame: dict[str, Any]) -> None:
        data = (json.dumps(frame, ensure_ascii=False, separators=(",", ":")) + "\n").encode("utf-8")
        try:
            self.proc.stdin.write(data)
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise _SessionDead(f"write to runner failed: {exc}") from exc

    def recv(self, timeout_s: float) -> dict[str, Any]:
        deadline = time.monotonic() + timeout_s
        fd = self.proc.stdout.fileno()
        while True:
            nl = self._buf.find(b"\n")
            if nl >= 0:
                line = bytes(self._buf[:nl])
                del self._buf[: nl + 1]
                if not line.strip():
                    continue
                try:
                    frame = json.loads(line.decode("utf-8"))
                except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                    raise ProtocolViolation(f"malformed frame from runner: {exc}") from exc
                if not isinstance(frame, dict):
                    raise ProtocolViolation("runner frame is not a JSON object")
                return frame
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise RunnerTimeout(f"no response within {timeout_s}s")
            ready, _, _ = select.select([fd], [], [], min(remaining, 1.0))
            if not ready:
                continue
            chunk = os.read(fd, 65536)
            if not chunk:
                raise _SessionDead("runner closed its output stream")
            self._buf.extend(chunk)

    def kill(self) -> None:
        if self.proc.poll() is None:
            self.proc.kill()
        self.proc.wait()
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                stream.close()
            except OSError:
                pass


class ExternalRunner:
    """Handle over one or more processes launched from a command line.

    Each concurrent run() call holds its own process; crashed processes are
    replaced and the in-flight request re-issued up to `retries` times.
    """

    HANDSHAKE_TIMEOUT_S = 60.0

    def __init__(self, command: str | list[str], retries: int = 2, transcript: list | None = None):
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.retries = retries
        self.transcript = transcript
        self.capabilities: list[str] = []
        self.invocations = 0
        self._idle: list[_Session] = []
        self._lock = threading.Lock()
        self._serial = 0
        self._started = False

    def _log(self, event: dict[str, Any]) -> None:
        if self.transcript is not None:
            with self._lock:
                self.transcript.append(event)

    def _spawn(self) -> _Session:
        with self._lock:
            self._serial += 1
            serial = self._serial
        self._log({"event": "spawn", "session": serial})
        session = _Session(self.argv, serial)
        hello = {"type": "hello", "protocol": PROTOCOL_VERSION}
        self._log({"event": "send", "session": serial, "frame": hello})
        try:
            session.send(hello)
            reply = session.recv(self.HANDSHAKE_TIMEOUT_S)
        except (_SessionDead, RunnerTimeout, ProtocolViolation) as exc:
            session.kill()
            raise HandshakeError(f"handshake failed: {exc}") from exc
        if reply.get("type") != "hello" or reply.get("protocol") != PROTOCOL_VERSION:
            session.kill()
            raise HandshakeError(f"unexpected handshake reply: {reply!r}")
        self._log({"event": "recv", "session": serial, "frame": reply})
        caps = reply.get("capabilities", [])
        if isinstance(caps, list):
            self.capabilities = caps
        return session

    def start(self) -> None:
        if self._started:
            return
        session = self._spawn()
        with self._lock:
            self._idle.append(session)
            self._started = True

    def _acquire(self) -> _Session:
        with self._lock:
            if self._idle:
                return self._idle.pop()
        return self._spawn()

    def _release(self, session: _Session) -> None:
        with self._lock:
            self._idle.append(session)

    def run(self, key: Key, request: RunnerRequest) -> RunnerResponse:
        with self._lock:
            self.invocations += 1
        frame = request.to_frame()
        last_crash = ""
        for attempt in range(self.retries + 1):
            session = self._acquire()
            self._log({"event": "send", "session": session.serial, "frame": frame})
            try:
                session.send(frame)
                reply = session.recv(request.run_config.timeout_s)
            except _SessionDead as exc:
                self._log({"event": "crash", "session": session.serial, "id": request.id})
                session.kill()
                last_crash = str(exc)
                continue
            except RunnerTimeout:
                self._log({"event": "timeout", "session": session.serial, "id": request.id})
                session.kill()
                raise
            except ProtocolViolation:
                session.kill()
                raise

            if reply.get("type") != "result" or reply.get("id") != request.id:
                session.kill()
                raise ProtocolViolation(f"expected result for {request.id!r}, got {reply!r}")
            status = reply.get("status")
            if status not in STATUSES:
                session.kill()
                raise ProtocolViolation(f"unknown status {status!r} in frame {reply!r}")
            self._log({"event": "recv", "session": session.serial, "frame": reply})
            self._release(session)
            return RunnerResponse(
                id=request.id,
                status=status,
                t_ref_ms=reply.get("t_ref_ms"),
                t_kernel_ms=reply.get("t_kernel_ms"),
                diagnostics=reply.get("diagnostics", ""),
            )
        raise RunnerCrash(
            f"runner crashed {self.retries + 1} times on request {request.id!r}: {last_crash}"
        )

    def close(self) -> None:
        with self._lock:
            sessions, self._idle = self._idle, []
            self._started = False
        for session in sessions:
            session.kill()


def spawn_external_runner(
    command: str | list[str], retries: int = 2, transcript: list | None = None
) -> ExternalRunner:
    runner = ExternalRunner(command, retries=retries, transcript=transcript)
    runner.start()
    return runner


# --- orchestration -------------------------------------------------------------


def _normalize(rec: GenerationRecord, outcome: tuple[str, Any], config_hash: str) -> EvalResult:
    """Clamp a runner outcome into an EvalResult that honors the invariants."""
    kind, payload = outcome
    if kind == "timeout":
        return EvalResult(
            task_id=rec.task_id,
            gen_index=rec.gen_index,
            status="timeout",
            speedup=0.0,
            diagnostics=str(payload),
            config_hash=config_hash,
        )
    if kind == "crash":
        return EvalResult(
            task_id=rec.task_id,
            gen_index=rec.gen_index,
            status="runtime_error",
            speedup=0.0,
            diagnostics=str(payload),
            config_hash=config_hash,
        )

    resp: RunnerResponse = payload
    status = resp.status
    diagnostics = resp.diagnostics or ""
    t_ref = resp.t_ref_ms
    t_kernel = resp.t_kernel_ms
    if status == "correct":
        valid = (
            isinstance(t_ref, (int, float))
            and isinstance(t_kernel, (int, float))
            and t_ref > 0
            and t_kernel > 0
        )
        if valid:
            value = metrics.speedup(float(t_ref), float(t_kernel), True)
            return EvalResult(
                task_id=rec.task_id,
                gen_index=rec.gen_index,
                status="correct",
                speedup=value,
                t_ref_ms=float(t_ref),
                t_kernel_ms=float(t_kernel),
                diagnostics=diagnostics,
                config_hash=config_hash,
            )
        status = "runtime_error"
        note = "runner reported correct without positive timings"
        diagnostics = f"{diagnostics}; {note}" if diagnostics else note
    elif t_ref is not None or t_kernel is not None:
        note = "runner reported timings for a non-correct status; dropped"
        diagnostics = f"{diagnostics}; {note}" if diagnostics else note
    return EvalResult(
        task_id=rec.task_id,
        gen_index=rec.gen_index,
        status=status,
        speedup=0.0,
        diagnostics=diagnostics,
        config_hash=config_hash,
    )


def _result_from_cache(rec: GenerationRecord, entry: dict[str, Any]) -> EvalResult:
    return EvalResult(
        task_id=rec.task_id,
        gen_index=rec.gen_index,
        status=entry["status"],
        speedup=entry["speedup"],
        t_ref_ms=entry.get("t_ref_ms"),
        t_kernel_ms=entry.get("t_kernel_ms"),
        diagnostics=entry.get("diagnostics", ""),
        config_hash=entry["config_hash"],
    )


def _cache_payload(result: EvalResult) -> dict[str, Any]:
    payload: dict[str, Any] = {
        "status": result.status,
        "speedup": result.speedup,
        "diagnostics": result.diagnostics,
        "config_hash": result.config_hash,
    }
    if result.t_ref_ms is not None:
        payload["t_ref_ms"] = result.t_ref_ms
    if result.t_kernel_ms is not None:
        payload["t_kernel_ms"] = result.t_kernel_ms
    return payload


def evaluate(
    records: Sequence[GenerationRecord],
    runner,
    cfg: RunConfig,
    workers: int = 1,
    cache: ResultCache | None = None,
) -> list[EvalResult]:
    """Evaluate every record through the runner; output order matches input order.

    Cache hits skip the runner entirely. Runner crashes and timeouts become
    per-record statuses; a protocol violation aborts the whole batch with the
    completed work attached to the exception.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    runner.start()
    config_hash = cfg.config_hash()

    results: list[EvalResult | None] = [None] * len(records)
    pending: list[int] = []
    keys: list[str] = []
    for i, rec in enumerate(records):
        keys.append(cache_key(rec.task_source, rec.kernel_source, config_hash))
        entry = cache.get(keys[i]) if cache is not None else None
        if entry is not None:
            results[i] = _result_from_cache(records[i], entry)
        else:
            pending.append(i)

    def _run_one(i: int) -> tuple[str, Any]:
        rec = records[i]
        request = RunnerRequest(
            id=f"r{i}",
            task_source=rec.task_source,
            kernel_source=rec.kernel_source,
            run_config=cfg,
        )
        try:
            return ("ok", runner.run(rec.key, request))
        except RunnerTimeout as exc:
            return ("timeout", str(exc))
        except RunnerCrash as exc:
            return ("crash", str(exc))

    violation: ProtocolViolation | None = None
    if pending:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_run_one, i): i for i in pending}
            # single collector: metric derivation and cache writes stay serialized
            for fut in as_completed(futures):
                i = futures[fut]
                try:
                    outcome = fut.result()
                except ProtocolViolation as exc:
                    if violation is None:
                        violation = exc
                    continue
                result = _normalize(records[i], outcome, config_hash)
                results[i] = result
                if cache is not None:
                    cache.put(keys[i], _cache_payload(result))
    if cache is not None:
        cache.flush_index()
    if violation is not None:
        completed = [r for r in results if r is not None]
        raise BatchAborted(
            f"batch aborted after protocol violation: {violation}; "
            f"{len(completed)}/{len(records)} records completed",
            completed,
        )
    return [r for r in results if r is not None]
