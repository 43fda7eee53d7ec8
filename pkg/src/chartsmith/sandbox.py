"""Clients for the render sandbox.

The sandbox speaks newline-delimited JSON frames: one request object per
line in, one response object per line out. Requests carry
{op, program, figure, timeout_ms, seed}; responses carry
{ok, diagnostics, image_png_b64, log, wall_ms}.

Three client flavors are provided: a process client that spawns the sandbox
executable and talks over its stdio, a TCP client, and two offline stand-ins
used by tests and replayable runs (a scripted queue and a fixture directory
keyed by program digest).
"""

from __future__ import annotations

import hashlib
import json
import select
import socket
import subprocess
import time
from dataclasses import dataclass
from pathlib import Path

from .attributes import VisualAttributes
from .errors import (
    MissingSandboxFixture, SandboxProtocolError, SandboxTimeout, SandboxUnavailable,
)
from .bundle import RenderProgram
from .table import DataTable

DEFAULT_SEED = 12345
DEFAULT_TIMEOUT_MS = 20000


@dataclass(frozen=True)
class FigureConfig:
    width_px: int = 800
    height_px: int = 600
    dpi: int = 96

    def to_json_obj(self) -> dict:
        return {"width_px": self.width_px, "height_px": self.height_px, "dpi": self.dpi}


@dataclass(frozen=True)
class Diagnostic:
    line: int
    kind: str  # syntax | policy | runtime | timeout | protocol
    message: str

    def to_json_obj(self) -> dict:
        return {"line": self.line, "kind": self.kind, "message": self.message}


@dataclass(frozen=True)
class SandboxResult:
    ok: bool
    diagnostics: tuple[Diagnostic, ...] = ()
    image_png_b64: str | None = None
    log: tuple[str, ...] = ()
    wall_ms: int = 0

    def to_json_obj(self) -> dict:
        return {
            "ok": self.ok,
            "diagnostics": [d.to_json_obj() for d in self.diagnostics],
            "image_png_b64": self.image_png_b64,
            "log": list(self.log),
            "wall_ms": self.wall_ms,
        }

    @classmethod
    def from_json_obj(cls, obj: object) -> "SandboxResult":
        if not isinstance(obj, dict) or "ok" not in obj:
            raise SandboxProtocolError(f"malformed sandbox frame: {obj!r}")
        try:
            return cls(
                ok=bool(obj["ok"]),
                diagnostics=tuple(
                    Diagnostic(int(d.get("line", 0)), str(d.get("kind", "runtime")), str(d.get("message", "")))
                    for d in obj.get("diagnostics", [])
                ),
                image_png_b64=obj.get("image_png_b64"),
                log=tuple(str(x) for x in obj.get("log", [])),
                wall_ms=int(obj.get("wall_ms", 0)),
            )
        except (TypeError, ValueError, AttributeError) as e:
            raise SandboxProtocolError(f"malformed sandbox frame: {e}") from e


def make_request_obj(op: str, program: str, figure: FigureConfig,
                     timeout_ms: int, seed: int) -> dict:
    return {"op": op, "program": program, "figure": figure.to_json_obj(),
            "timeout_ms": timeout_ms, "seed": seed}


class SandboxClient:
    """Interface: validate() parses only, execute() renders headlessly."""

    def request(self, op: str, program: str, figure: FigureConfig = FigureConfig(),
                timeout_ms: int = DEFAULT_TIMEOUT_MS, seed: int = DEFAULT_SEED) -> SandboxResult:
        raise NotImplementedError

    def validate(self, program: str, **kwargs) -> SandboxResult:
        return self.request("validate", program, **kwargs)

    def execute(self, program: str, **kwargs) -> SandboxResult:
        return self.request("execute", program, **kwargs)


class ScriptedSandbox(SandboxClient):
    """Pops queued results per op; for unit tests."""

    def __init__(self, validate_results: list[SandboxResult] | None = None,
                 execute_results: list[SandboxResult] | None = None):
        self._queues = {"validate": list(validate_results or []),
                        "execute": list(execute_results or [])}
        self.requests: list[tuple[str, str]] = []  # (op, program) log

    def push(self, op: str, *results: SandboxResult) -> None:
        self._queues[op].extend(results)

    def request(self, op: str, program: str, figure: FigureConfig = FigureConfig(),
                timeout_ms: int = DEFAULT_TIMEOUT_MS, seed: int = DEFAULT_SEED) -> SandboxResult:
        self.requests.append((op, program))
        queue = self._queues.get(op)
        if not queue:
            raise SandboxUnavailable(f"scripted sandbox exhausted for op {op!r}")
        return queue.pop(0)


def fixture_key(op: str, program: str) -> str:
    return hashlib.sha256((op + "\x1f" + program).encode("utf-8")).hexdigest()[:16]


class FixtureSandbox(SandboxClient):
    """Replays stored responses keyed by a digest of (op, program)."""

    def __init__(self, dir: str | Path):
        self.dir = Path(dir)

    def request(self, op: str, program: str, figure: FigureConfig = FigureConfig(),
                timeout_ms: int = DEFAULT_TIMEOUT_MS, seed: int = DEFAULT_SEED) -> SandboxResult:
        key = fixture_key(op, program)
        path = self.dir / f"{key}.json"
        if not path.is_file():
            raise MissingSandboxFixture(key)
        return SandboxResult.from_json_obj(json.loads(path.read_text("utf-8")))

    @staticmethod
    def store(dir: str | Path, op: str, program: str, result: SandboxResult) -> Path:
        root = Path(dir)
        root.mkdir(parents=True, exist_ok=True)
        path = root / f"{fixture_key(op, program)}.json"
        path.write_text(json.dumps(result.to_json_obj(), indent=2) + "\n", "utf-8")
        return path


class RecordingSandbox(SandboxClient):
    """Wraps another client and stores every response as a fixture."""

    def __init__(self, inner: SandboxClient, dir: str | Path):
        self.inner = inner
        self.dir = Path(dir)

    def request(self, op: str, program: str, figure: FigureConfig = FigureConfig(),
                timeout_ms: int = DEFAULT_TIMEOUT_MS, seed: int = DEFAULT_SEED) -> SandboxResult:
        result = self.inner.request(op, program, figure=figure, timeout_ms=timeout_ms, seed=seed)
        FixtureSandbox.store(self.dir, op, program, result)
        return result


class ProcessSandboxClient(SandboxClient):
    """Talks to a spawned sandbox process over stdio, one frame per line."""

    def __init__(self, command: list[str] | None = None, grace_ms: int = 10000):
        self.command = command or ["render-sandbox"]
        self.grace_ms = grace_ms
        self._proc: subprocess.Popen | None = None

    def _ensure_process(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                    stderr=subprocess.DEVNULL, text=True, bufsize=1,
                )
            except OSError as e:
                raise SandboxUnavailable(f"cannot spawn {self.command!r}: {e}") from e
        return self._proc

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        self._proc = None

    def _read_line(self, proc: subprocess.Popen, deadline: float) -> str:
        # The sandbox answers one line per request; poll its stdout until then.
        buf = []
        stream = proc.stdout
        assert stream is not None
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                self.close()
                raise SandboxTimeout(int(self.grace_ms))
            ready, _, _ = select.select([stream], [], [], min(remaining, 0.25))
            if not ready:
                if proc.poll() is not None:
                    raise SandboxProtocolError("sandbox process exited mid-request")
                continue
            ch = stream.readline()
            if ch == "":
                raise SandboxProtocolError("sandbox closed its stdout")
            buf.append(ch)
            if ch.endswith("\n"):
                return "".join(buf)

    def request(self, op: str, program: str, figure: FigureConfig = FigureConfig(),
                timeout_ms: int = DEFAULT_TIMEOUT_MS, seed: int = DEFAULT_SEED) -> SandboxResult:
        proc = self._ensure_process()
        frame = json.dumps(make_request_obj(op, program, figure, timeout_ms, seed))
        try:
            assert proc.stdin is not None
            proc.stdin.write(frame + "\n")
            proc.stdin.flush()
        except (OSError, ValueError) as e:
            self.close()
            raise SandboxUnavailable(f"sandbox stdin write failed: {e}") from e
        deadline = time.monotonic() + (timeout_ms + self.grace_ms) / 1000.0
        line = self._read_line(proc, deadline)
        try:
            return SandboxResult.from_json_obj(json.loads(line))
        except json.JSONDecodeError as e:
            raise SandboxProtocolError(f"bad frame from sandbox: {e}") from e


class TcpSandboxClient(SandboxClient):
    """One connection per request against `render-sandbox --listen host:port`."""

    def __init__(self, host: str, port: int, grace_ms: int = 10000):
        self.host = host
        self.port = port
        self.grace_ms = grace_ms

    def request(self, op: str, program: str, figure: FigureConfig = FigureConfig(),
                timeout_ms: int = DEFAULT_TIMEOUT_MS, seed: int = DEFAULT_SEED) -> SandboxResult:
        frame = json.dumps(make_request_obj(op, program, figure, timeout_ms, seed))
        budget = (timeout_ms + self.grace_ms) / 1000.0
        try:
            with socket.create_connection((self.host, self.port), timeout=budget) as conn:
                conn.settimeout(budget)
                conn.sendall(frame.encode("utf-8") + b"\n")
                chunks = []
                while True:
                    data = conn.recv(65536)
                    if not data:
                        break
                    chunks.append(data)
                    if data.endswith(b"\n"):
                        break
        except socket.timeout as e:
            raise SandboxTimeout(timeout_ms + self.grace_ms) from e
        except OSError as e:
            raise SandboxUnavailable(f"cannot reach sandbox at {self.host}:{self.port}: {e}") from e
        try:
            return SandboxResult.from_json_obj(json.loads(b"".join(chunks).decode("utf-8")))
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            raise SandboxProtocolError(f"bad frame from sandbox: {e}") from e


# --- program composition --------------------------------------------------------

def table_to_data_obj(table: DataTable) -> dict:
    columns: dict[str, list] = {}
    for j, header in enumerate(table.col_headers):
        columns[header] = [
            row[j].numeric if row[j].numeric is not None else row[j].raw
            for row in table.cells
        ]
    rows = [[c.numeric if c.numeric is not None else c.raw for c in row] for row in table.cells]
    return {"headers": list(table.col_headers), "rows": rows, "columns": columns}


def compose_render_source(table: DataTable, attrs: VisualAttributes,
                          program: RenderProgram) -> tuple[str, int]:
    """Prefix the program with its `data` and `style` bindings.

    Returns (source, prelude_line_count) so diagnostics can be mapped back to
    program-relative line numbers.
    """
    # repr() emits valid python literals (json booleans would not parse)
    prelude = (
        "data = " + repr(table_to_data_obj(table)) + "\n"
        "style = " + repr(attrs.to_json_obj()) + "\n"
    )
    return prelude + program.text, 2
