import json
import socket
import subprocess
import sys
import threading

import pytest

from render_sandbox.policy import DEFAULT_ALLOWLIST
from render_sandbox.server import handle_line, make_tcp_server

from conftest import request


def send(line: str) -> dict:
    return json.loads(handle_line(line, DEFAULT_ALLOWLIST))


class TestFrameHandling:
    def test_malformed_json_gets_error_frame(self):
        frame = send("this is not json{{{")
        assert frame["ok"] is False
        assert frame["diagnostics"][0]["kind"] == "protocol"
        assert set(frame) == {"ok", "diagnostics", "image_png_b64", "log", "wall_ms"}

    def test_non_object_frame(self):
        assert send("[1, 2, 3]")["diagnostics"][0]["kind"] == "protocol"
        assert send('"just a string"')["diagnostics"][0]["kind"] == "protocol"

    def test_unknown_op(self):
        frame = send(json.dumps({"op": "transmogrify", "program": "x = 1"}))
        assert frame["diagnostics"][0]["kind"] == "protocol"

    def test_missing_program(self):
        frame = send(json.dumps({"op": "validate"}))
        assert frame["diagnostics"][0]["kind"] == "protocol"

    def test_timeout_out_of_range(self):
        frame = send(json.dumps({"op": "validate", "program": "x=1", "timeout_ms": 5}))
        assert frame["diagnostics"][0]["kind"] == "protocol"
        frame = send(json.dumps({"op": "validate", "program": "x=1", "timeout_ms": 90000}))
        assert frame["diagnostics"][0]["kind"] == "protocol"

    def test_validate_frame_shape(self):
        frame = send(json.dumps(request("validate", "x = 1")))
        assert frame == {"ok": True, "diagnostics": [], "image_png_b64": None,
                         "log": [], "wall_ms": 0}


class TestStdioServer:
    def run_server(self, lines: list[str]) -> list[dict]:
        proc = subprocess.run(
            [sys.executable, "-m", "render_sandbox"],
            input="\n".join(lines) + "\n",
            capture_output=True, text=True, timeout=120,
        )
        assert proc.returncode == 0
        return [json.loads(line) for line in proc.stdout.strip().splitlines()]

    def test_mixed_good_and_bad_frames(self):
        frames = self.run_server([
            json.dumps(request("validate", "import matplotlib.pyplot as plt")),
            "garbage garbage",
            json.dumps(request("validate", "import socket")),
        ])
        assert len(frames) == 3
        assert frames[0]["ok"] is True
        assert frames[1]["diagnostics"][0]["kind"] == "protocol"
        assert frames[2]["ok"] is False
        assert frames[2]["diagnostics"][0]["kind"] == "policy"

    def test_blank_lines_skipped(self):
        frames = self.run_server(["", json.dumps(request("validate", "x=1")), ""])
        assert len(frames) == 1


class TestTcpServer:
    @pytest.fixture
    def server(self):
        srv = make_tcp_server("127.0.0.1", 0, DEFAULT_ALLOWLIST)
        thread = threading.Thread(target=srv.serve_forever, daemon=True)
        thread.start()
        yield srv.server_address
        srv.shutdown()
        srv.server_close()

    def test_round_trip(self, server):
        host, port = server
        with socket.create_connection((host, port), timeout=10) as conn:
            conn.sendall((json.dumps(request("validate", "x = 1")) + "\n").encode())
            data = b""
            while not data.endswith(b"\n"):
                data += conn.recv(4096)
        frame = json.loads(data.decode())
        assert frame["ok"] is True

    def test_two_requests_one_connection(self, server):
        host, port = server
        with socket.create_connection((host, port), timeout=10) as conn:
            f = conn.makefile("rw", encoding="utf-8")
            f.write(json.dumps(request("validate", "x = 1")) + "\n")
            f.write("not json\n")
            f.flush()
            first = json.loads(f.readline())
            second = json.loads(f.readline())
        assert first["ok"] is True
        assert second["diagnostics"][0]["kind"] == "protocol"
