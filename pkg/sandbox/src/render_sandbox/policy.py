"""Static validation: AST parsing plus an import/capability policy.

Programs may import plotting, numeric, and standard data modules only.
Network, process-spawning, and filesystem-escape capabilities are flagged as
policy diagnostics; the dynamic phase provides the hard isolation boundary,
this pass provides the actionable feedback.
"""

from __future__ import annotations

import ast
from pathlib import Path

DEFAULT_ALLOWLIST = frozenset({
    "matplotlib", "numpy", "pandas",
    "math", "cmath", "random", "statistics", "decimal", "fractions",
    "itertools", "functools", "collections", "datetime", "json", "re",
    "string", "textwrap", "bisect", "heapq", "enum", "dataclasses", "typing",
    "warnings",
})

# escape hatches around the import policy
BANNED_CALLS = frozenset({"eval", "exec", "compile", "__import__", "breakpoint", "input"})

MAX_PROGRAM_BYTES = 256 * 1024


def load_allowlist(path: str | Path | None) -> frozenset[str]:
    if path is None:
        return DEFAULT_ALLOWLIST
    names = {line.strip() for line in Path(path).read_text("utf-8").splitlines()}
    return frozenset(n for n in names if n and not n.startswith("#"))


def _diag(line: int, kind: str, message: str) -> dict:
    return {"line": line, "kind": kind, "message": message}


def _check_open_call(node: ast.Call, diagnostics: list[dict]) -> None:
    if node.args and isinstance(node.args[0], ast.Constant) and isinstance(node.args[0].value, str):
        target = node.args[0].value
        if target.startswith(("/", "~", "..")):
            diagnostics.append(_diag(
                node.lineno, "policy",
                f"open() may not leave the working directory: {target!r}"))


def validate_program(program: str, allowlist: frozenset[str] = DEFAULT_ALLOWLIST) -> list[dict]:
    """Returns diagnostics; empty means the program passes static validation."""
    if len(program.encode("utf-8")) > MAX_PROGRAM_BYTES:
        return [_diag(0, "policy", f"program exceeds {MAX_PROGRAM_BYTES} bytes")]
    try:
        tree = ast.parse(program)
    except SyntaxError as e:
        return [_diag(e.lineno or 0, "syntax", e.msg or "syntax error")]

    diagnostics: list[dict] = []
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            for alias in node.names:
                root = alias.name.split(".")[0]
                if root not in allowlist:
                    diagnostics.append(_diag(
                        node.lineno, "policy", f"import of {alias.name!r} is not allowed"))
        elif isinstance(node, ast.ImportFrom):
            if node.level:
                diagnostics.append(_diag(node.lineno, "policy", "relative imports are not allowed"))
                continue
            root = (node.module or "").split(".")[0]
            if root not in allowlist:
                diagnostics.append(_diag(
                    node.lineno, "policy", f"import from {node.module!r} is not allowed"))
        elif isinstance(node, ast.Call):
            func = node.func
            if isinstance(func, ast.Name):
                if func.id in BANNED_CALLS:
                    diagnostics.append(_diag(
                        node.lineno, "policy", f"call to {func.id}() is not allowed"))
                elif func.id == "open":
                    _check_open_call(node, diagnostics)
        elif isinstance(node, ast.Attribute) and node.attr in ("__subclasses__", "__globals__"):
            diagnostics.append(_diag(
                node.lineno, "policy", f"access to {node.attr} is not allowed"))
    return diagnostics
