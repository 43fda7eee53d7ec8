"""Dynamic phase: one worker process per request, hard-killed as backstop."""

from __future__ import annotations

import json
import shutil
import subprocess
import sys
import tempfile
import time
from pathlib import Path

# worker startup (interpreter + matplotlib import) is excluded from the
# program's own deadline but bounded here
STARTUP_GRACE_S = 30.0


def execute_program(req: dict) -> dict:
    """Run the request in a fresh worker process and per-request directory."""
    timeout_ms = int(req.get("timeout_ms", 20000))
    workdir = Path(tempfile.mkdtemp(prefix="render-sandbox-"))
    started = time.monotonic()
    try:
        proc = subprocess.run(
            [sys.executable, "-m", "render_sandbox.worker"],
            input=json.dumps(req),
            capture_output=True,
            text=True,
            cwd=workdir,
            timeout=timeout_ms / 1000.0 + STARTUP_GRACE_S,
        )
    except subprocess.TimeoutExpired:
        wall_ms = int((time.monotonic() - started) * 1000)
        return {"ok": False,
                "diagnostics": [{"line": 0, "kind": "timeout",
                                 "message": f"worker killed after {wall_ms} ms"}],
                "image_png_b64": None, "log": [], "wall_ms": wall_ms}
    finally:
        shutil.rmtree(workdir, ignore_errors=True)

    line = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else ""
    try:
        frame = json.loads(line)
        if not isinstance(frame, dict) or "ok" not in frame:
            raise ValueError("not a frame")
        return frame
    except (json.JSONDecodeError, ValueError):
        wall_ms = int((time.monotonic() - started) * 1000)
        tail = proc.stderr.strip().splitlines()[-3:]
        return {"ok": False,
                "diagnostics": [{"line": 0, "kind": "runtime",
                                 "message": f"worker exited with code {proc.returncode}"}],
                "image_png_b64": None, "log": tail, "wall_ms": wall_ms}
