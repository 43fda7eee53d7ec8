"""Per-request worker: runs one program headlessly and emits one JSON frame.

The worker reads the request object on stdin, executes the program with a
fixed seed and figure configuration in the current working directory (the
parent points cwd at a fresh per-request dir), and prints the response frame
on stdout. A real-time interval timer aborts the program at timeout_ms; the
parent process holds a hard kill as backstop.
"""

from __future__ import annotations

import base64
import io
import json
import signal
import sys
import time
import traceback
import warnings


class _ProgramTimeout(Exception):
    pass


def _on_timer(signum, frame):
    raise _ProgramTimeout()


def run_request(req: dict) -> dict:
    program = req["program"]
    figure = req.get("figure") or {}
    width = int(figure.get("width_px", 800))
    height = int(figure.get("height_px", 600))
    dpi = int(figure.get("dpi", 96))
    timeout_ms = int(req.get("timeout_ms", 20000))
    seed = int(req.get("seed", 12345))

    import random as _random
    _random.seed(seed)
    try:
        import numpy as _np
        _np.random.seed(seed % (2**32))
    except ImportError:
        pass

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.figure(figsize=(width / dpi, height / dpi), dpi=dpi)

    log: list[str] = []
    diagnostics: list[dict] = []
    captured = io.StringIO()
    started = time.monotonic()
    ok = True
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        signal.signal(signal.SIGALRM, _on_timer)
        signal.setitimer(signal.ITIMER_REAL, timeout_ms / 1000.0)
        try:
            stdout, sys.stdout = sys.stdout, captured
            try:
                exec(compile(program, "<program>", "exec"), {"__name__": "__main__"})
            finally:
                sys.stdout = stdout
                signal.setitimer(signal.ITIMER_REAL, 0.0)
        except _ProgramTimeout:
            ok = False
            diagnostics.append({"line": 0, "kind": "timeout",
                                "message": f"program exceeded {timeout_ms} ms"})
        except BaseException as e:  # noqa: BLE001 - every program fault becomes a frame
            ok = False
            tb = traceback.extract_tb(e.__traceback__)
            line = next((f.lineno for f in reversed(tb) if f.filename == "<program>"), 0)
            diagnostics.append({"line": int(line or 0), "kind": "runtime",
                                "message": f"{type(e).__name__}: {e}"})
            log.append(traceback.format_exc(limit=5))
    wall_ms = int((time.monotonic() - started) * 1000)

    printed = captured.getvalue()
    if printed:
        log.extend(printed.rstrip("\n").split("\n"))
    for w in caught:
        log.append(f"{w.category.__name__}: {w.message}")

    image_b64 = None
    if ok:
        try:
            fig = plt.gcf()
            fig.set_size_inches(width / dpi, height / dpi)
            buf = io.BytesIO()
            fig.savefig(buf, format="png", dpi=dpi, metadata={"Software": None})
            image_b64 = base64.b64encode(buf.getvalue()).decode("ascii")
        except Exception as e:  # rendering itself failed
            ok = False
            diagnostics.append({"line": 0, "kind": "runtime",
                                "message": f"figure rendering failed: {type(e).__name__}: {e}"})
    plt.close("all")

    return {"ok": ok, "diagnostics": diagnostics, "image_png_b64": image_b64,
            "log": log, "wall_ms": wall_ms}


def main() -> None:
    req = json.loads(sys.stdin.read())
    frame = run_request(req)
    sys.stdout.write(json.dumps(frame) + "\n")
    sys.stdout.flush()


if __name__ == "__main__":
    main()
