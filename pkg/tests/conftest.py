from __future__ import annotations

import base64
import json

import numpy as np
import pytest

from chartsmith.images import ChartImage, to_png_bytes
from chartsmith.sandbox import Diagnostic, SandboxResult
from chartsmith.table import DataTable


def random_image(rng: np.random.Generator, w: int = 64, h: int = 64) -> ChartImage:
    return ChartImage(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


def random_gray(rng: np.random.Generator, w: int = 64, h: int = 64) -> np.ndarray:
    return rng.random((h, w))


def solid_image(r: int, g: int, b: int, w: int = 64, h: int = 64) -> ChartImage:
    px = np.zeros((h, w, 3), dtype=np.uint8)
    px[:, :] = (r, g, b)
    return ChartImage(px)


def table_of(headers, rows, row_headers=None) -> DataTable:
    return DataTable.from_rows(headers, rows, row_headers)


def ok_validate() -> SandboxResult:
    return SandboxResult(ok=True, wall_ms=1)


def failed_validate(line: int = 3, kind: str = "syntax", message: str = "unbalanced bracket") -> SandboxResult:
    return SandboxResult(ok=False, diagnostics=(Diagnostic(line, kind, message),), wall_ms=1)


def ok_execute(image: ChartImage, log: tuple[str, ...] = ()) -> SandboxResult:
    b64 = base64.b64encode(to_png_bytes(image)).decode("ascii")
    return SandboxResult(ok=True, image_png_b64=b64, log=log, wall_ms=5)


def failed_execute(message: str = "ZeroDivisionError: division by zero",
                   kind: str = "runtime") -> SandboxResult:
    return SandboxResult(ok=False, diagnostics=(Diagnostic(0, kind, message),),
                         log=(message,), wall_ms=5)


# --- canned model responses for the agent pipelines ---------------------------

def staged_table_text(headers: list[str], rows: list[list[str]],
                      declared: tuple[int, int] | None = None) -> str:
    n_rows, n_cols = declared if declared else (len(rows), len(headers))
    lines = [f"ROWS: {n_rows}", f"COLS: {n_cols}", "HEADERS: " + " | ".join(headers)]
    lines += ["ROW: " + " | ".join(str(c) for c in row) for row in rows]
    return "\n".join(lines)


def attrs_json_text(chart_type: str = "line", series: dict | None = None, **extra) -> str:
    obj = {
        "chart_type": chart_type,
        "series_styles": series if series is not None else {"sales": {"color": "#1F77B4"}},
    }
    obj.update(extra)
    return json.dumps(obj)


def code_response_text(body: str = "import matplotlib.pyplot as plt\n"
                                   "plt.plot(data['columns'][data['headers'][0]])",
                       layout: dict | None = None) -> str:
    text = "```python\n" + body + "\n```"
    if layout is not None:
        text += "\nLAYOUT: " + json.dumps(layout)
    return text


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260810)
