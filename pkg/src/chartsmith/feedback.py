"""The three self-reflection feedback channels.

Each channel is a pure pipeline from (original, replot, bundle pieces) to a
structured report; none of them mutates the bundle. The code channel drives
the sandbox (static then dynamic phase), the visual channel scores ROI tiles
with SSIM and asks the vision model to critique the flagged ones, and the
numeric channel cross-checks per-series statistics between a fresh probe
extraction of the original and the bundle's own table.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass

from .attributes import VisualAttributes
from .bundle import RenderProgram
from .errors import EmptyTable
from .gateway import Gateway, ModelRequest
from .image_metrics import SsimParams, crop, ms_ssim_gray, segment_rois, ssim_gray, to_luma
from .images import ChartImage, from_png_bytes, resize
from .sandbox import (
    DEFAULT_SEED, DEFAULT_TIMEOUT_MS, Diagnostic, FigureConfig, SandboxClient,
    compose_render_source,
)
from .table import DataTable
from .table_metrics import SeriesStat, table_stats

ROI_FLAG_THRESHOLD = 0.85
STAT_RELATIVE_TOLERANCE = 0.05
MEASURES = ("mean", "min", "max", "discontinuity", "direction")


# --- code channel ---------------------------------------------------------------

@dataclass(frozen=True)
class CodeFeedback:
    phase: str  # static | dynamic | pass
    diagnostics: tuple[Diagnostic, ...] = ()
    runtime_log: tuple[str, ...] = ()
    image: ChartImage | None = None

    @property
    def passed(self) -> bool:
        return self.phase == "pass"

    def to_json_obj(self) -> dict:
        return {
            "phase": self.phase,
            "diagnostics": [d.to_json_obj() for d in self.diagnostics],
            "runtime_log": list(self.runtime_log),
            "has_image": self.image is not None,
        }

    def describe(self) -> str:
        lines = [f"{self.phase} validation failed:"]
        lines += [f"  line {d.line} [{d.kind}] {d.message}" for d in self.diagnostics]
        lines += [f"  {entry}" for entry in self.runtime_log]
        return "\n".join(lines)


def _offset_diagnostics(diags: tuple[Diagnostic, ...], offset: int) -> tuple[Diagnostic, ...]:
    if offset == 0:
        return diags
    out = []
    for d in diags:
        line = d.line - offset
        out.append(Diagnostic(line if line > 0 else d.line, d.kind if line > 0 else "prelude", d.message))
    return tuple(out)


def code_feedback(program: RenderProgram, sandbox: SandboxClient, *,
                  table: DataTable | None = None, attrs: VisualAttributes | None = None,
                  figure: FigureConfig = FigureConfig(),
                  timeout_ms: int = DEFAULT_TIMEOUT_MS, seed: int = DEFAULT_SEED) -> CodeFeedback:
    """Dual-phase validation: parse-only first, then headless execution."""
    if table is not None and attrs is not None:
        source, offset = compose_render_source(table, attrs, program)
    else:
        source, offset = program.text, 0
    static = sandbox.validate(source, figure=figure, timeout_ms=timeout_ms, seed=seed)
    if not static.ok:
        return CodeFeedback("static", _offset_diagnostics(static.diagnostics, offset), static.log)
    dynamic = sandbox.execute(source, figure=figure, timeout_ms=timeout_ms, seed=seed)
    if not dynamic.ok or dynamic.image_png_b64 is None:
        log = dynamic.log or tuple(d.message for d in dynamic.diagnostics)
        return CodeFeedback("dynamic", _offset_diagnostics(dynamic.diagnostics, offset), log or ("no image produced",))
    image = from_png_bytes(base64.b64decode(dynamic.image_png_b64))
    return CodeFeedback("pass", (), dynamic.log, image)


# --- visual channel ---------------------------------------------------------------

@dataclass(frozen=True)
class VisualFeedback:
    roi_scores: dict[str, float]
    flagged: tuple[str, ...]
    critiques: dict[str, str]
    global_ms_ssim: float

    @property
    def passed_rois(self) -> bool:
        return not self.flagged

    def to_json_obj(self) -> dict:
        return {
            "roi_scores": dict(self.roi_scores),
            "flagged": list(self.flagged),
            "critiques": dict(self.critiques),
            "global_ms_ssim": self.global_ms_ssim,
        }

    def describe(self) -> str:
        lines = [f"global ms-ssim {self.global_ms_ssim:.4f}; flagged regions: "
                 f"{', '.join(self.flagged) or 'none'}"]
        lines += [f"  {rid}: {text}" for rid, text in self.critiques.items()]
        return "\n".join(lines)


def visual_feedback(original: ChartImage, replot: ChartImage, grid: tuple[int, int],
                    gateway: Gateway | None = None, *,
                    roi_threshold: float = ROI_FLAG_THRESHOLD,
                    params: SsimParams = SsimParams()) -> VisualFeedback:
    """Score grid tiles with single-scale SSIM and critique the flagged ones.

    The replot is resized (bilinear) to the original's dimensions first. No
    model call is made when nothing scores below the threshold.
    """
    replot = resize(replot, original.width, original.height)
    rois = segment_rois(original, grid)
    luma_a, luma_b = to_luma(original), to_luma(replot)
    scores: dict[str, float] = {}
    for roi in rois:
        ys, xs = roi.slices
        scores[roi.id] = ssim_gray(luma_a[ys, xs], luma_b[ys, xs], params)
    flagged = tuple(roi.id for roi in rois if scores[roi.id] < roi_threshold)
    critiques: dict[str, str] = {}
    if gateway is not None:
        by_id = {roi.id: roi for roi in rois}
        for rid in flagged:
            roi = by_id[rid]
            req = ModelRequest.make(
                "visual_critique",
                {"roi_id": rid, "bounds": f"{roi.x},{roi.y},{roi.w},{roi.h}",
                 "score": f"{scores[rid]:.4f}"},
                images=(crop(original, roi), crop(replot, roi)),
            )
            critiques[rid] = gateway.complete(req).text
    global_score = ms_ssim_gray(luma_a, luma_b, params)
    return VisualFeedback(scores, flagged, critiques, global_score)


# --- numeric channel ----------------------------------------------------------------

@dataclass(frozen=True)
class Discrepancy:
    series: str
    measure: str  # mean | min | max | discontinuity | direction
    detail: str

    def to_json_obj(self) -> dict:
        return {"series": self.series, "measure": self.measure, "detail": self.detail}


@dataclass(frozen=True)
class NumericFeedback:
    summary_original: str
    summary_replot: str
    stats_original: dict[str, SeriesStat]
    stats_replot: dict[str, SeriesStat]
    discrepancies: tuple[Discrepancy, ...]
    verdict: str  # consistent | inconsistent
    analysis: str = ""

    def to_json_obj(self) -> dict:
        return {
            "summary_original": self.summary_original,
            "summary_replot": self.summary_replot,
            "stats_original": {k: v.to_json_obj() for k, v in self.stats_original.items()},
            "stats_replot": {k: v.to_json_obj() for k, v in self.stats_replot.items()},
            "discrepancies": [d.to_json_obj() for d in self.discrepancies],
            "verdict": self.verdict,
            "analysis": self.analysis,
        }

    def describe(self) -> str:
        lines = [f"numeric verdict: {self.verdict}"]
        lines += [f"  {d.series}.{d.measure}: {d.detail}" for d in self.discrepancies]
        if self.analysis:
            lines.append("  analysis: " + self.analysis)
        return "\n".join(lines)


def _relative_gap(replot_value: float, original_value: float) -> float:
    return abs(replot_value - original_value) / max(abs(original_value), 1e-9)


def compare_series_stats(stats_original: dict[str, SeriesStat],
                         stats_replot: dict[str, SeriesStat],
                         rel_tolerance: float = STAT_RELATIVE_TOLERANCE) -> tuple[Discrepancy, ...]:
    """Per-series mismatches: relative gaps on mean/extrema against the
    original side, slope-sign disagreement, and discontinuity-set inequality.
    """
    out: list[Discrepancy] = []
    for name in sorted(set(stats_original) | set(stats_replot)):
        a, b = stats_original.get(name), stats_replot.get(name)
        if a is None or b is None:
            side = "original" if a is None else "replot"
            out.append(Discrepancy(name, "mean", f"series missing from the {side} table"))
            continue
        for measure in ("mean", "min", "max"):
            ov, rv = getattr(a, measure), getattr(b, measure)
            gap = _relative_gap(rv, ov)
            if gap > rel_tolerance:
                out.append(Discrepancy(name, measure, f"replot {rv:.6g} vs original {ov:.6g} (rel {gap:.2f})"))
        if a.slope_sign != b.slope_sign:
            out.append(Discrepancy(name, "direction",
                                   f"trend {b.slope_sign} in replot vs {a.slope_sign} in original"))
        if a.discontinuities != b.discontinuities:
            out.append(Discrepancy(name, "discontinuity",
                                   f"jumps at {list(b.discontinuities)} vs {list(a.discontinuities)}"))
    return tuple(out)


def numeric_feedback(table_original_probe: DataTable, table_replot: DataTable,
                     original: ChartImage, replot: ChartImage,
                     gateway: Gateway | None = None, *,
                     rel_tolerance: float = STAT_RELATIVE_TOLERANCE) -> NumericFeedback:
    """Cross-check quantitative content between the probe and replot tables."""
    if table_original_probe.n_rows == 0:
        raise EmptyTable("original probe")
    if table_replot.n_rows == 0:
        raise EmptyTable("replot")
    summary_original = summary_replot = ""
    if gateway is not None:
        summary_original = gateway.complete(ModelRequest.make(
            "numeric_summary", {"which": "original"}, images=(original,))).text
        summary_replot = gateway.complete(ModelRequest.make(
            "numeric_summary", {"which": "replot"}, images=(replot,))).text
    stats_original = table_stats(table_original_probe)
    stats_replot = table_stats(table_replot)
    discrepancies = compare_series_stats(stats_original, stats_replot, rel_tolerance)
    analysis = ""
    if discrepancies and gateway is not None:
        listing = "\n".join(f"- {d.series} {d.measure}: {d.detail}" for d in discrepancies)
        analysis = gateway.complete(ModelRequest.make(
            "numeric_discrepancy",
            {"discrepancies": listing, "summary_original": summary_original,
             "summary_replot": summary_replot},
            model_class="text")).text
    verdict = "consistent" if not discrepancies else "inconsistent"
    return NumericFeedback(summary_original, summary_replot, stats_original,
                           stats_replot, discrepancies, verdict, analysis)
