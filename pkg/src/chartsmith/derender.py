"""The three retrieval agents and the self-reflection loop that drives them.

Extraction agents parse model responses into core types, re-prompting up to
twice with the parse diagnostic when a response is malformed. The derender
loop then runs the feedback channels in fixed order (code, numeric, visual)
for at most max_trials rounds; each failing channel re-prompts exactly its
owning agent with the feedback text appended. On exhaustion the round with
the best composite score is kept rather than the last one.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from dataclasses import replace as dc_replace

from .attributes import CanonWarning, VisualAttributes, canonicalize_attributes
from .bundle import ChartBundle, FeedbackReport, ProgramLayout, RenderProgram
from .errors import (
    DimensionMismatch, MultipleCodeBlocks, NoCodeBlock, ParseError,
)
from .feedback import code_feedback, numeric_feedback, visual_feedback
from .gateway import Gateway, ModelRequest
from .images import ChartImage
from .sandbox import DEFAULT_SEED, FigureConfig, SandboxClient
from .table import DataTable
from .table_metrics import rms

SELF_REPAIR_BUDGET = 2  # reprompts per extraction on malformed responses

_FENCE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)
_LAYOUT_LINE = re.compile(r"^LAYOUT:\s*(\{.*\})\s*$", re.MULTILINE)


@dataclass(frozen=True)
class DerenderConfig:
    max_trials: int = 3
    ssim_threshold: float = 0.90
    rms_threshold: float = 0.90
    roi_grid: tuple[int, int] = (4, 4)

    def __post_init__(self):
        if self.max_trials < 1:
            raise ValueError("max_trials must be at least 1")
        for name in ("ssim_threshold", "rms_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be within [0, 1], got {v}")


# --- response parsing ----------------------------------------------------------

class _Malformed(ValueError):
    """Internal: response shape problems that are worth a self-repair reprompt."""


def _parse_staged_table(text: str) -> DataTable:
    """Parse the staged table format: ROWS/COLS, then HEADERS, then ROW lines."""
    declared_rows: int | None = None
    declared_cols: int | None = None
    headers: list[str] | None = None
    rows: list[list[str]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if line.startswith("ROWS:"):
            try:
                declared_rows = int(line[5:].strip())
            except ValueError:
                raise _Malformed(f"line {lineno}: ROWS is not an integer")
        elif line.startswith("COLS:"):
            try:
                declared_cols = int(line[5:].strip())
            except ValueError:
                raise _Malformed(f"line {lineno}: COLS is not an integer")
        elif line.startswith("HEADERS:"):
            if declared_rows is None or declared_cols is None:
                raise _Malformed(f"line {lineno}: HEADERS before ROWS/COLS declaration")
            headers = [h.strip() for h in line[8:].split("|")]
        elif line.startswith("ROW:"):
            if headers is None:
                raise _Malformed(f"line {lineno}: ROW before HEADERS")
            rows.append([c.strip() for c in line[4:].split("|")])
    if declared_rows is None or declared_cols is None:
        raise _Malformed("missing ROWS/COLS declaration")
    if headers is None:
        raise _Malformed("missing HEADERS line")
    if any(not h for h in headers):
        raise _Malformed("empty header field")
    for row in rows:
        if len(row) != len(headers):
            raise _Malformed(f"ragged row: {len(row)} cells under {len(headers)} headers")
    actual = (len(rows), len(headers))
    if actual != (declared_rows, declared_cols):
        raise DimensionMismatch(
            f"declared {declared_rows}x{declared_cols} but parsed {actual[0]}x{actual[1]}")
    return DataTable.from_rows(headers, rows)


def parse_json_response(text: str):
    """JSON from a model response; tolerates a fenced block around it."""
    body = text.strip()
    try:
        return json.loads(body)
    except json.JSONDecodeError:
        pass
    blocks = _FENCE.findall(text)
    if len(blocks) == 1:
        try:
            return json.loads(blocks[0])
        except json.JSONDecodeError as e:
            raise _Malformed(f"fenced block is not valid JSON: {e}")
    start = min((i for i in (body.find("{"), body.find("[")) if i >= 0), default=-1)
    if start >= 0:
        closer = "}" if body[start] == "{" else "]"
        end = body.rfind(closer)
        if end > start:
            try:
                return json.loads(body[start:end + 1])
            except json.JSONDecodeError as e:
                raise _Malformed(f"embedded JSON does not parse: {e}")
    raise _Malformed("response contains no JSON document")


def extract_code_response(text: str) -> tuple[str, dict | None]:
    """The single fenced program block, plus the optional LAYOUT stanza."""
    blocks = _FENCE.findall(text)
    if not blocks:
        raise NoCodeBlock("response contains no fenced code block")
    if len(blocks) > 1:
        raise MultipleCodeBlocks(f"response contains {len(blocks)} fenced code blocks")
    remainder = _FENCE.sub("", text)
    layout_obj: dict | None = None
    m = _LAYOUT_LINE.search(remainder)
    if m:
        try:
            parsed = json.loads(m.group(1))
            if isinstance(parsed, dict):
                layout_obj = parsed
        except json.JSONDecodeError:
            layout_obj = None  # malformed stanza falls back to defaults
    return blocks[0].strip("\n"), layout_obj


# --- retrieval agents -------------------------------------------------------------

def extract_table(image: ChartImage, gateway: Gateway, *, feedback: str = "") -> DataTable:
    """Extract the data table via the staged format, cross-checking dimensions."""
    diagnostic = ""
    failures: list[str] = []
    for _ in range(1 + SELF_REPAIR_BUDGET):
        req = ModelRequest.make(
            "chart2table", {"feedback": feedback, "diagnostic": diagnostic}, images=(image,))
        try:
            return _parse_staged_table(gateway.complete(req).text)
        except _Malformed as e:
            failures.append(str(e))
            diagnostic = f"Your previous answer could not be parsed: {e}. Answer again in the exact format."
    raise ParseError("table extraction failed after self-repair", tuple(failures))


def extract_attributes(image: ChartImage, gateway: Gateway, *, feedback: str = ""
                       ) -> tuple[VisualAttributes, list[CanonWarning]]:
    """Extract visual attributes as a JSON record and canonicalize them."""
    diagnostic = ""
    failures: list[str] = []
    for _ in range(1 + SELF_REPAIR_BUDGET):
        req = ModelRequest.make(
            "chart2vision", {"feedback": feedback, "diagnostic": diagnostic}, images=(image,))
        try:
            obj = parse_json_response(gateway.complete(req).text)
            if not isinstance(obj, dict):
                raise _Malformed("attribute record must be a JSON object")
            return canonicalize_attributes(obj)
        except _Malformed as e:
            failures.append(str(e))
            diagnostic = f"Your previous answer could not be parsed: {e}. Answer with one JSON object."
    raise ParseError("attribute extraction failed after self-repair", tuple(failures))


def _layout_from(obj: dict | None, attrs: VisualAttributes) -> ProgramLayout:
    labels = tuple(t for t in (attrs.title, attrs.x_label, attrs.y_label) if t)
    if obj is None:
        return ProgramLayout(axes_grid=False, legend=attrs.legend.visible, text_labels=labels)
    raw_labels = obj.get("text_labels")
    return ProgramLayout(
        axes_grid=bool(obj.get("axes_grid", False)),
        legend=bool(obj.get("legend", attrs.legend.visible)),
        text_labels=tuple(str(t) for t in raw_labels) if isinstance(raw_labels, list) else labels,
    )


def generate_program(image: ChartImage, table: DataTable, attrs: VisualAttributes,
                     gateway: Gateway, *, feedback: str = "") -> RenderProgram:
    """Generate the render program: one fenced block plus an optional layout stanza."""
    req = ModelRequest.make(
        "chart2code",
        {"table": table.to_csv_text(), "attributes": json.dumps(attrs.to_json_obj(), indent=2),
         "feedback": feedback},
        images=(image,))
    code, layout_obj = extract_code_response(gateway.complete(req).text)
    return RenderProgram(text=code, declared_chart_type=attrs.chart_type,
                         layout=_layout_from(layout_obj, attrs))


# --- the self-reflection loop --------------------------------------------------------

def derender(image: ChartImage, cfg: DerenderConfig, gateway: Gateway,
             sandbox: SandboxClient, *, figure: FigureConfig = FigureConfig(),
             seed: int = DEFAULT_SEED) -> ChartBundle:
    """De-render a chart image into a bundle, reflecting until convergence.

    Convergence requires the code channel to pass, global MS-SSIM >= the
    ssim threshold, and the RMS f1 between the extracted table and a fresh
    probe extraction >= the rms threshold. A failing channel re-prompts only
    its owning agent, and only while another round remains to use the result.
    """
    table = extract_table(image, gateway)
    attrs, warnings = extract_attributes(image, gateway)
    program = generate_program(image, table, attrs, gateway)

    history: list[FeedbackReport] = []
    best_score = -1.0
    best_round = 0
    best_state: tuple[DataTable, VisualAttributes, RenderProgram, ChartImage] | None = None

    for rnd in range(1, cfg.max_trials + 1):
        has_next = rnd < cfg.max_trials
        code_fb = code_feedback(program, sandbox, table=table, attrs=attrs,
                                figure=figure, seed=seed)
        if not code_fb.passed:
            history.append(FeedbackReport(rnd, "code", False, code_fb.to_json_obj(),
                                          "chart2code" if has_next else None))
            if has_next:
                program = generate_program(image, table, attrs, gateway,
                                           feedback=code_fb.describe())
            continue
        history.append(FeedbackReport(rnd, "code", True, code_fb.to_json_obj()))
        replot = code_fb.image
        assert replot is not None

        probe = extract_table(image, gateway)
        num_fb = numeric_feedback(probe, table, image, replot, gateway)
        rms_f1 = rms(table, probe).f1
        numeric_pass = num_fb.verdict == "consistent" and rms_f1 >= cfg.rms_threshold
        numeric_payload = num_fb.to_json_obj()
        numeric_payload["rms_f1"] = rms_f1

        vis_fb = visual_feedback(image, replot, cfg.roi_grid, gateway)
        visual_pass = vis_fb.global_ms_ssim >= cfg.ssim_threshold
        visual_payload = vis_fb.to_json_obj()
        visual_payload["canonicalization_warnings"] = [
            {"code": w.code, "path": w.path, "detail": w.detail} for w in warnings]

        composite = (vis_fb.global_ms_ssim + rms_f1) / 2.0
        if composite > best_score:
            best_score, best_round, best_state = composite, rnd, (table, attrs, program, replot)

        if numeric_pass and visual_pass:
            history.append(FeedbackReport(rnd, "numeric", True, numeric_payload))
            history.append(FeedbackReport(rnd, "visual", True, visual_payload))
            return ChartBundle(image=image, table=table, attrs=attrs, program=program,
                               replot=replot, history=tuple(history), status="converged")

        numeric_reprompt = not numeric_pass and has_next
        visual_reprompt = not visual_pass and has_next
        history.append(FeedbackReport(rnd, "numeric", numeric_pass, numeric_payload,
                                      "chart2table" if numeric_reprompt else None))
        history.append(FeedbackReport(rnd, "visual", visual_pass, visual_payload,
                                      "chart2vision" if visual_reprompt else None))
        if numeric_reprompt:
            table = extract_table(
                image, gateway,
                feedback=num_fb.describe() + f"\nrms f1 {rms_f1:.4f} below {cfg.rms_threshold}")
        if visual_reprompt:
            attrs, warnings = extract_attributes(image, gateway, feedback=vis_fb.describe())

    if best_state is not None:
        table, attrs, program, replot = best_state
        history = [dc_replace(r, best_round=(r.round == best_round)) for r in history]
        return ChartBundle(image=image, table=table, attrs=attrs, program=program,
                           replot=replot, history=tuple(history), status="exhausted")
    return ChartBundle(image=image, table=table, attrs=attrs, program=program,
                       replot=None, history=tuple(history), status="exhausted")
