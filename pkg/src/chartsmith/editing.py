"""Instruction decomposition, the editing agent, fidelity verification, and
re-plotting: the end-to-end path from (bundle, request) to an edited image.

A request decomposes into typed steps, each targeting exactly one of the
data table (via an edit script), the visual attributes (via structured
patches), or the render program (via full replacement gated on code
feedback). After applying the steps and re-plotting, undeclared chart regions
must still match the original; violations re-prompt the editing agent for up
to max_trials fidelity rounds, keeping the highest-fidelity round on
exhaustion.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

from .attributes import canonicalize_attributes
from .bundle import ChartBundle, EditRequest, FeedbackReport, RenderProgram
from .derender import (
    SELF_REPAIR_BUDGET, DerenderConfig, _layout_from, extract_code_response,
    parse_json_response, _Malformed,
)
from .editscript import EditScript, script_from_json_obj
from .errors import (
    CodeRejected, EmptyRequest, MultipleCodeBlocks, NoCodeBlock, ParseError,
    PatchRejected, RenderFailed, SandboxTimeout, ScriptError, ScriptRejected,
    UnknownTarget,
)
from .feedback import code_feedback
from .gateway import Gateway, ModelRequest
from .image_metrics import Roi, SsimParams, crop, segment_rois, semantic_rois, ssim_gray, to_luma
from .images import ChartImage, from_png_bytes, resize
from .sandbox import (
    DEFAULT_SEED, DEFAULT_TIMEOUT_MS, FigureConfig, SandboxClient, compose_render_source,
)

EDIT_TARGETS = ("data", "style", "code")
FIDELITY_THRESHOLD = 0.90
SEMANTIC_REGION_NAMES = ("title", "legend", "plot_area")

AttributePatches = tuple[tuple[str, object], ...]


@dataclass(frozen=True)
class EditStep:
    index: int
    target: str  # data | style | code
    instruction: str
    declared_regions: tuple[str, ...] = ()
    payload: EditScript | AttributePatches | str | None = None  # None until resolved


@dataclass(frozen=True)
class FidelityReport:
    roi_scores: dict[str, float]
    violations: tuple[tuple[str, float], ...]
    verdict: str  # pass | violation
    declared_expanded: tuple[str, ...] = ()
    critique: str = ""

    def to_json_obj(self) -> dict:
        return {
            "roi_scores": dict(self.roi_scores),
            "violations": [{"roi_id": rid, "score": s} for rid, s in self.violations],
            "verdict": self.verdict,
            "declared_expanded": list(self.declared_expanded),
            "critique": self.critique,
        }

    def describe(self) -> str:
        items = ", ".join(f"{rid} (ssim {s:.3f})" for rid, s in self.violations)
        return (f"fidelity violation: undeclared regions changed: {items}. "
                f"Preserve these regions; only the requested edit may alter the chart.")


@dataclass(frozen=True)
class EditedResult:
    bundle: ChartBundle
    image: ChartImage
    rounds_used: int
    status: str  # ok | best_effort


# --- decomposition ------------------------------------------------------------------

def _parse_steps(obj: object) -> list[EditStep]:
    if not isinstance(obj, list) or not obj:
        raise _Malformed("decomposition must be a non-empty JSON array of steps")
    steps: list[EditStep] = []
    for i, item in enumerate(obj):
        if not isinstance(item, dict):
            raise _Malformed(f"step {i} is not an object")
        target = str(item.get("target", ""))
        if target not in EDIT_TARGETS:
            raise UnknownTarget(i, target)
        instruction = str(item.get("instruction", "")).strip()
        if not instruction:
            raise _Malformed(f"step {i} has no instruction")
        regions = item.get("declared_regions") or []
        if not isinstance(regions, list):
            raise _Malformed(f"step {i}: declared_regions must be a list")
        payload = _parse_payload(item, target, i)
        steps.append(EditStep(i, target, instruction,
                              tuple(str(r) for r in regions), payload))
    return steps


def _parse_payload(item: dict, target: str, index: int):
    if target == "data" and "ops" in item:
        try:
            return script_from_json_obj(item["ops"])
        except ValueError as e:
            raise _Malformed(f"step {index}: bad ops: {e}")
    if target == "style" and "patches" in item:
        return _parse_patches(item["patches"], index)
    if target == "code" and "program" in item:
        return str(item["program"])
    return None


def _parse_patches(raw: object, index: int) -> AttributePatches:
    if not isinstance(raw, list):
        raise _Malformed(f"step {index}: patches must be a list")
    patches: list[tuple[str, object]] = []
    for p in raw:
        if isinstance(p, dict) and "path" in p:
            patches.append((str(p["path"]), p.get("value")))
        elif isinstance(p, (list, tuple)) and len(p) == 2:
            patches.append((str(p[0]), p[1]))
        else:
            raise _Malformed(f"step {index}: bad patch {p!r}")
    return tuple(patches)


def decompose(request: EditRequest, gateway: Gateway) -> list[EditStep]:
    """Break a user request into ordered typed steps."""
    if not request.text.strip():
        raise EmptyRequest("edit request is empty")
    diagnostic = ""
    failures: list[str] = []
    for _ in range(1 + SELF_REPAIR_BUDGET):
        req = ModelRequest.make(
            "decompose", {"request": request.text, "diagnostic": diagnostic}, model_class="text")
        try:
            return _parse_steps(parse_json_response(gateway.complete(req).text))
        except _Malformed as e:
            failures.append(str(e))
            diagnostic = f"Your previous answer could not be parsed: {e}. Answer with the JSON array only."
    raise ParseError("decomposition failed after self-repair", tuple(failures))


# --- step application -----------------------------------------------------------------

def _edit_agent_call(bundle: ChartBundle, step: EditStep, gateway: Gateway,
                     feedback: str) -> str:
    req = ModelRequest.make(
        "edit_agent",
        {
            "target": step.target,
            "instruction": step.instruction,
            "table": bundle.table.to_csv_text(),
            "attributes": json.dumps(bundle.attrs.to_json_obj(), indent=2),
            "program": bundle.program.text,
            "feedback": feedback,
        },
        images=(bundle.image,))
    return gateway.complete(req).text


def _patch_attrs_obj(obj: dict, path: str, value: object) -> None:
    parts = path.split(".")
    try:
        if len(parts) == 1 and parts[0] in ("title", "x_label", "y_label", "chart_type"):
            obj[parts[0]] = value
        elif parts[0] == "fonts" and len(parts) == 2 and parts[1] in ("family", "title_size", "label_size"):
            obj.setdefault("fonts", {})[parts[1]] = value
        elif parts[0] == "legend" and len(parts) == 2 and parts[1] in ("visible", "position", "entries"):
            obj.setdefault("legend", {})[parts[1]] = value
        elif parts[0] == "series_styles" and len(parts) == 3 and parts[2] in ("color", "line_style", "marker", "bar_pattern"):
            obj.setdefault("series_styles", {}).setdefault(parts[1], {})[parts[2]] = value
        elif parts[0] == "series_styles" and len(parts) == 2 and isinstance(value, dict):
            obj.setdefault("series_styles", {})[parts[1]] = dict(value)
        else:
            raise PatchRejected(path, "no such attribute path")
    except (TypeError, AttributeError) as e:
        raise PatchRejected(path, str(e)) from e


def _apply_data_step(bundle: ChartBundle, step: EditStep, gateway: Gateway,
                     feedback: str) -> ChartBundle:
    script = step.payload
    if not isinstance(script, EditScript):
        text = _edit_agent_call(bundle, step, gateway, feedback)
        try:
            obj = parse_json_response(text)
            if not isinstance(obj, dict) or "ops" not in obj:
                raise _Malformed('data edit must be {"ops": [...]}')
            script = script_from_json_obj(obj["ops"])
        except (_Malformed, ValueError) as e:
            raise ScriptRejected(str(e)) from e
    try:
        from .editscript import apply_edit_script
        new_table = apply_edit_script(bundle.table, script)
    except ScriptError as e:
        raise ScriptRejected(str(e)) from e
    return bundle.evolve(table=new_table)


def _apply_style_step(bundle: ChartBundle, step: EditStep, gateway: Gateway,
                      feedback: str) -> ChartBundle:
    patches = step.payload
    if not isinstance(patches, tuple):
        text = _edit_agent_call(bundle, step, gateway, feedback)
        try:
            obj = parse_json_response(text)
            if not isinstance(obj, dict) or "patches" not in obj:
                raise _Malformed('style edit must be {"patches": [...]}')
            patches = _parse_patches(obj["patches"], step.index)
        except (_Malformed, ValueError) as e:
            raise PatchRejected("<response>", str(e)) from e
    obj = bundle.attrs.to_json_obj()
    attrs = bundle.attrs
    for path, value in patches:
        _patch_attrs_obj(obj, path, value)
        try:
            attrs, _ = canonicalize_attributes(obj)
        except Exception as e:
            raise PatchRejected(path, str(e)) from e
    return bundle.evolve(attrs=attrs)


def _apply_code_step(bundle: ChartBundle, step: EditStep, gateway: Gateway,
                     sandbox: SandboxClient, feedback: str,
                     figure: FigureConfig, seed: int) -> ChartBundle:
    last_diags: tuple[str, ...] = ()
    candidate_text: str | None = step.payload if isinstance(step.payload, str) else None
    layout_obj: dict | None = None
    repair_feedback = feedback
    for _ in range(1 + SELF_REPAIR_BUDGET):
        if candidate_text is None:
            text = _edit_agent_call(bundle, step, gateway, repair_feedback)
            try:
                candidate_text, layout_obj = extract_code_response(text)
            except (NoCodeBlock, MultipleCodeBlocks) as e:
                last_diags = (str(e),)
                repair_feedback = (feedback + "\n" if feedback else "") + \
                    f"Previous answer rejected: {e}. Reply with exactly one fenced code block."
                continue
        program = RenderProgram(
            text=candidate_text,
            declared_chart_type=bundle.attrs.chart_type,
            layout=_layout_from(layout_obj, bundle.attrs) if layout_obj is not None else bundle.program.layout,
        )
        fb = code_feedback(program, sandbox, table=bundle.table, attrs=bundle.attrs,
                           figure=figure, seed=seed)
        if fb.passed:
            return bundle.evolve(program=program)
        last_diags = tuple(f"line {d.line} [{d.kind}] {d.message}" for d in fb.diagnostics) \
            or tuple(fb.runtime_log)
        repair_feedback = (feedback + "\n" if feedback else "") + fb.describe()
        candidate_text = None  # force a fresh fetch on the next attempt
    raise CodeRejected(last_diags or ("no acceptable program produced",))


def apply_step(bundle: ChartBundle, step: EditStep, gateway: Gateway,
               sandbox: SandboxClient, *, feedback: str = "",
               figure: FigureConfig = FigureConfig(), seed: int = DEFAULT_SEED) -> ChartBundle:
    """Apply one edit step, returning a new bundle; the input is untouched.

    A step without a payload asks the editing agent for one. Code steps must
    pass dual-phase code feedback, with up to two repair re-prompts.
    """
    if bundle.status not in ("converged", "exhausted"):
        raise ScriptRejected(f"bundle must be de-rendered first (status {bundle.status!r})")
    if step.target == "data":
        return _apply_data_step(bundle, step, gateway, feedback)
    if step.target == "style":
        return _apply_style_step(bundle, step, gateway, feedback)
    if step.target == "code":
        return _apply_code_step(bundle, step, gateway, sandbox, feedback, figure, seed)
    raise UnknownTarget(step.index, step.target)


# --- re-plotting ------------------------------------------------------------------------

def replot(bundle: ChartBundle, sandbox: SandboxClient, *,
           figure: FigureConfig = FigureConfig(),
           timeout_ms: int = DEFAULT_TIMEOUT_MS, seed: int = DEFAULT_SEED) -> ChartImage:
    """Render the bundle's program with its table and attributes embedded."""
    source, _ = compose_render_source(bundle.table, bundle.attrs, bundle.program)
    result = sandbox.execute(source, figure=figure, timeout_ms=timeout_ms, seed=seed)
    if not result.ok or result.image_png_b64 is None:
        if any(d.kind == "timeout" for d in result.diagnostics):
            raise SandboxTimeout(timeout_ms)
        log = result.log or tuple(d.message for d in result.diagnostics)
        raise RenderFailed(log)
    return from_png_bytes(base64.b64decode(result.image_png_b64))


# --- perceptual fidelity -----------------------------------------------------------------

def _expand_declared(declared: tuple[str, ...], grid_rois: list[Roi],
                     width: int, height: int, legend_position: str) -> set[str]:
    declared_set = set(declared)
    expanded = {roi.id for roi in grid_rois if roi.id in declared_set}
    semantic = {r.id: r for r in semantic_rois(width, height, legend_position)}
    for name in declared_set:
        region = semantic.get(name)
        if region is not None:
            expanded.update(roi.id for roi in grid_rois if roi.intersects(region))
    return expanded


def fidelity_check(original: ChartImage, edited: ChartImage, declared: list[str] | tuple[str, ...],
                   grid: tuple[int, int], *, threshold: float = FIDELITY_THRESHOLD,
                   gateway: Gateway | None = None, legend_position: str = "best",
                   params: SsimParams = SsimParams()) -> FidelityReport:
    """Verify that only declared regions changed.

    Declared region ids may be grid tiles ("r1c2") or the semantic names
    title/legend/plot_area, which expand to every overlapping grid tile.
    Violations are exactly the undeclared tiles scoring below the threshold.
    """
    edited = resize(edited, original.width, original.height)
    grid_rois = segment_rois(original, grid)
    declared_ids = _expand_declared(tuple(declared), grid_rois,
                                    original.width, original.height, legend_position)
    luma_a, luma_b = to_luma(original), to_luma(edited)
    scores: dict[str, float] = {}
    violations: list[tuple[str, float]] = []
    for roi in grid_rois:
        ys, xs = roi.slices
        score = ssim_gray(luma_a[ys, xs], luma_b[ys, xs], params)
        scores[roi.id] = score
        if roi.id not in declared_ids and score < threshold:
            violations.append((roi.id, score))
    verdict = "pass" if not violations else "violation"
    critique = ""
    if violations and gateway is not None:
        worst_id, worst_score = min(violations, key=lambda v: v[1])
        roi = next(r for r in grid_rois if r.id == worst_id)
        req = ModelRequest.make(
            "visual_critique",
            {"roi_id": worst_id, "bounds": f"{roi.x},{roi.y},{roi.w},{roi.h}",
             "score": f"{worst_score:.4f}"},
            images=(crop(original, roi), crop(edited, roi)))
        critique = gateway.complete(req).text
    return FidelityReport(scores, tuple(violations), verdict,
                          tuple(sorted(declared_ids)), critique)


# --- the end-to-end edit ----------------------------------------------------------------

def edit(bundle: ChartBundle, request: EditRequest, cfg: DerenderConfig,
         gateway: Gateway, sandbox: SandboxClient, *,
         figure: FigureConfig = FigureConfig(), seed: int = DEFAULT_SEED) -> EditedResult:
    """Decompose, apply steps, re-plot, and verify perceptual fidelity.

    On violation the editing agent is re-prompted with the violation report
    (the decomposer is never re-run); after max_trials fidelity rounds the
    highest-fidelity round is returned as best effort.
    """
    steps = decompose(request, gateway)
    declared: tuple[str, ...] = tuple(dict.fromkeys(
        r for s in steps for r in s.declared_regions)) or ("plot_area",)
    feedback = ""
    best: tuple[float, int, ChartBundle, ChartImage] | None = None
    for rnd in range(1, cfg.max_trials + 1):
        working = bundle
        for step in steps:
            working = apply_step(working, step, gateway, sandbox,
                                 feedback=feedback, figure=figure, seed=seed)
        image = replot(working, sandbox, figure=figure, seed=seed)
        report = fidelity_check(bundle.image, image, declared, cfg.roi_grid,
                                gateway=gateway,
                                legend_position=working.attrs.legend.position)
        passed = report.verdict == "pass"
        working = working.evolve(
            replot=image,
            history=working.history + (FeedbackReport(rnd, "fidelity", passed, report.to_json_obj()),))
        undeclared = [s for rid, s in report.roi_scores.items()
                      if rid not in report.declared_expanded]
        retention = sum(undeclared) / len(undeclared) if undeclared else 1.0
        if best is None or retention > best[0]:
            best = (retention, rnd, working, image)
        if passed:
            return EditedResult(working, image, rnd, "ok")
        feedback = report.describe()
    assert best is not None
    return EditedResult(best[2], best[3], cfg.max_trials, "best_effort")
