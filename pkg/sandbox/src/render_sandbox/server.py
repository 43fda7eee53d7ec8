"""The line-delimited JSON request loop, over stdio or TCP.

One JSON object per line in, one per line out. Malformed input produces an
error frame (kind "protocol"); the server never crashes on bad frames.
"""

from __future__ import annotations

import json
import socketserver
import sys

from .executor import execute_program
from .policy import MAX_PROGRAM_BYTES, validate_program

MIN_TIMEOUT_MS = 100
MAX_TIMEOUT_MS = 60000


def _protocol_error(message: str) -> dict:
    return {"ok": False,
            "diagnostics": [{"line": 0, "kind": "protocol", "message": message}],
            "image_png_b64": None, "log": [], "wall_ms": 0}


def _static_failure(diagnostics: list[dict]) -> dict:
    return {"ok": False, "diagnostics": diagnostics, "image_png_b64": None,
            "log": [], "wall_ms": 0}


def handle_request_obj(req: object, allowlist) -> dict:
    if not isinstance(req, dict):
        return _protocol_error("request must be a JSON object")
    op = req.get("op")
    if op not in ("validate", "execute"):
        return _protocol_error(f"unknown op {op!r}")
    program = req.get("program")
    if not isinstance(program, str):
        return _protocol_error("request has no program text")
    if len(program.encode("utf-8")) > MAX_PROGRAM_BYTES:
        return _protocol_error(f"program exceeds {MAX_PROGRAM_BYTES} bytes")
    timeout_ms = req.get("timeout_ms", 20000)
    if not isinstance(timeout_ms, int) or not MIN_TIMEOUT_MS <= timeout_ms <= MAX_TIMEOUT_MS:
        return _protocol_error(
            f"timeout_ms must be an integer in [{MIN_TIMEOUT_MS}, {MAX_TIMEOUT_MS}]")

    diagnostics = validate_program(program, allowlist)
    if op == "validate":
        return {"ok": not diagnostics, "diagnostics": diagnostics,
                "image_png_b64": None, "log": [], "wall_ms": 0}
    # execute re-validates defensively: every execute-ok program is validate-ok
    if diagnostics:
        return _static_failure(diagnostics)
    return execute_program(req)


def handle_line(line: str, allowlist) -> str:
    try:
        req = json.loads(line)
    except json.JSONDecodeError as e:
        return json.dumps(_protocol_error(f"malformed JSON frame: {e}"))
    try:
        return json.dumps(handle_request_obj(req, allowlist))
    except Exception as e:  # last-resort guard: the loop must survive anything
        return json.dumps(_protocol_error(f"internal error: {type(e).__name__}: {e}"))


def serve_stdio(allowlist) -> None:
    for line in sys.stdin:
        if not line.strip():
            continue
        sys.stdout.write(handle_line(line, allowlist) + "\n")
        sys.stdout.flush()


def make_tcp_server(host: str, port: int, allowlist) -> socketserver.ThreadingTCPServer:
    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            for raw in self.rfile:
                line = raw.decode("utf-8", errors="replace")
                if not line.strip():
                    continue
                self.wfile.write((handle_line(line, allowlist) + "\n").encode("utf-8"))
                self.wfile.flush()

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    return Server((host, port), Handler)


def serve_tcp(host: str, port: int, allowlist) -> None:
    with make_tcp_server(host, port, allowlist) as server:
        server.serve_forever()
