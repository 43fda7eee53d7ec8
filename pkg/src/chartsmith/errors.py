"""Exception hierarchy shared across the package.

Every error raised on a contract boundary derives from ChartsmithError so
callers (and the CLI) can distinguish pipeline failures from bugs.
"""

from __future__ import annotations


class ChartsmithError(Exception):
    """Base class for all expected failures."""


# --- table / edit-script errors -------------------------------------------

class ScriptError(ChartsmithError):
    """Raised when an edit script cannot be applied. Carries the op index."""

    def __init__(self, message: str, op_index: int | None = None):
        super().__init__(message)
        self.op_index = op_index


class OutOfBounds(ScriptError):
    pass


class UnknownHeader(ScriptError):
    def __init__(self, name: str, op_index: int | None = None):
        super().__init__(f"unknown header: {name!r}", op_index)
        self.name = name


class DuplicateHeader(ScriptError):
    def __init__(self, name: str, op_index: int | None = None):
        super().__init__(f"duplicate header: {name!r}", op_index)
        self.name = name


class TypeMismatch(ScriptError):
    """Numeric operation attempted on a non-numeric column or cell."""


# --- attribute canonicalization -------------------------------------------

class MissingChartType(ChartsmithError):
    pass


class InvalidColor(ChartsmithError):
    def __init__(self, value: object):
        super().__init__(f"invalid color: {value!r}")
        self.value = value


# --- bundle persistence ----------------------------------------------------

class BundleIoError(ChartsmithError):
    pass


class CorruptBundle(ChartsmithError):
    def __init__(self, field: str, detail: str = ""):
        msg = f"corrupt bundle field: {field}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.field = field


# --- gateway ----------------------------------------------------------------

class GatewayError(ChartsmithError):
    pass


class UnknownTemplate(GatewayError):
    def __init__(self, template_id: str):
        super().__init__(f"unknown template: {template_id!r}")
        self.template_id = template_id


class UnboundPlaceholder(GatewayError):
    def __init__(self, name: str):
        super().__init__(f"unbound placeholder: {name!r}")
        self.name = name


class MissingFixture(GatewayError):
    def __init__(self, fingerprint: str):
        super().__init__(f"no fixture for fingerprint {fingerprint}")
        self.fingerprint = fingerprint


class ProviderError(GatewayError):
    def __init__(self, status: int, body: str):
        super().__init__(f"provider error {status}: {body[:200]}")
        self.status = status
        self.body = body


class EmptyScript(GatewayError):
    def __init__(self, template_id: str):
        super().__init__(f"scripted provider exhausted for template {template_id!r}")
        self.template_id = template_id


# --- metrics ----------------------------------------------------------------

class DimensionMismatch(ChartsmithError):
    pass


class TooSmall(ChartsmithError):
    pass


class EmptyTable(ChartsmithError):
    pass


class NoNumericSeries(ChartsmithError):
    pass


# --- agents / parsing -------------------------------------------------------

class ParseError(ChartsmithError):
    """Model response could not be parsed after the self-repair budget."""

    def __init__(self, message: str, diagnostics: tuple[str, ...] = ()):
        super().__init__(message)
        self.diagnostics = diagnostics


class NoCodeBlock(ChartsmithError):
    pass


class MultipleCodeBlocks(ChartsmithError):
    pass


class EmptyRequest(ChartsmithError):
    pass


class UnknownTarget(ChartsmithError):
    def __init__(self, step_index: int, target: str):
        super().__init__(f"step {step_index}: unknown edit target {target!r}")
        self.step_index = step_index
        self.target = target


# --- edit application -------------------------------------------------------

class ScriptRejected(ChartsmithError):
    def __init__(self, reason: str):
        super().__init__(f"edit script rejected: {reason}")
        self.reason = reason


class PatchRejected(ChartsmithError):
    def __init__(self, path: str, reason: str = ""):
        msg = f"attribute patch rejected at {path!r}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)
        self.path = path


class CodeRejected(ChartsmithError):
    def __init__(self, diagnostics: tuple[str, ...]):
        super().__init__("program rejected: " + "; ".join(diagnostics))
        self.diagnostics = diagnostics


# --- sandbox ----------------------------------------------------------------

class SandboxError(ChartsmithError):
    pass


class SandboxUnavailable(SandboxError):
    pass


class SandboxTimeout(SandboxError):
    def __init__(self, ms: int):
        super().__init__(f"sandbox timed out after {ms} ms")
        self.ms = ms


class SandboxProtocolError(SandboxError):
    pass


class MissingSandboxFixture(SandboxError):
    def __init__(self, key: str):
        super().__init__(f"no sandbox fixture for key {key}")
        self.key = key


class RenderFailed(ChartsmithError):
    def __init__(self, log: tuple[str, ...]):
        super().__init__("render failed: " + (log[-1] if log else "no output"))
        self.log = log


# --- evaluation --------------------------------------------------------------

class EmptyDataset(ChartsmithError):
    pass
