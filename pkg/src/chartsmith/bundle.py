"""The de-rendered chart bundle and its on-disk layout.

A bundle directory contains:

    chart.png          original raster
    table.csv          extracted data (first row = column headers)
    attributes.json    canonical style record
    program.txt        render program (one reserved header line carries the
                       declared chart type and layout metadata)
    replot.png         optional re-rendered raster
    meta.json          {status, created_at, tool_version}
    feedback/NN-<kind>.json   one file per feedback report, in history order

All JSON is written with a fixed serialization so identical bundles produce
identical bytes; the only timestamp lives in meta.json.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping

from . import __version__
from .attributes import (
    BAR_PATTERNS, LEGEND_POSITIONS, LINE_STYLES, MARKERS,
    FontSpec, LegendSpec, SeriesStyle, VisualAttributes, is_canonical_chart_type,
)
from .errors import BundleIoError, CorruptBundle
from .images import ChartImage, from_png_bytes, to_png_bytes
from .table import DataTable

STATUSES = ("fresh", "converged", "exhausted")
FEEDBACK_KINDS = ("code", "visual", "numeric", "fidelity")

_PROGRAM_HEADER = "#! chartsmith-program "
_HEX_COLOR = re.compile(r"^#[0-9A-F]{6}$")


@dataclass(frozen=True)
class ProgramLayout:
    axes_grid: bool = False
    legend: bool = False
    text_labels: tuple[str, ...] = ()


@dataclass(frozen=True)
class RenderProgram:
    text: str
    declared_chart_type: str
    layout: ProgramLayout = field(default_factory=ProgramLayout)

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("render program text must be non-empty")


@dataclass(frozen=True)
class FeedbackReport:
    """Envelope for one feedback channel's findings in one round."""

    round: int
    kind: str  # code | visual | numeric | fidelity
    passed: bool
    payload: dict
    triggered_reprompt: str | None = None  # agent name, when a reprompt followed
    best_round: bool = False

    def to_json_obj(self) -> dict:
        return {
            "round": self.round,
            "kind": self.kind,
            "passed": self.passed,
            "payload": self.payload,
            "triggered_reprompt": self.triggered_reprompt,
            "best_round": self.best_round,
        }


@dataclass(frozen=True)
class EditRequest:
    text: str
    id: str = ""

    def __post_init__(self):
        if not self.text.strip():
            from .errors import EmptyRequest
            raise EmptyRequest("edit request text must be non-empty")


@dataclass(frozen=True)
class ChartBundle:
    image: ChartImage
    table: DataTable
    attrs: VisualAttributes
    program: RenderProgram
    replot: ChartImage | None = None
    history: tuple[FeedbackReport, ...] = ()
    status: str = "fresh"

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown bundle status {self.status!r}")
        if self.status == "converged" and self.replot is None:
            raise ValueError("a converged bundle must carry its replot")

    def evolve(self, **changes) -> "ChartBundle":
        return replace(self, **changes)


def _dump_json(obj: object) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _program_file_text(program: RenderProgram) -> str:
    header = _PROGRAM_HEADER + json.dumps({
        "declared_chart_type": program.declared_chart_type,
        "layout": {
            "axes_grid": program.layout.axes_grid,
            "legend": program.layout.legend,
            "text_labels": list(program.layout.text_labels),
        },
    })
    return header + "\n" + program.text


def _program_from_file_text(text: str, fallback_chart_type: str) -> RenderProgram:
    if text.startswith(_PROGRAM_HEADER):
        header, _, body = text.partition("\n")
        try:
            meta = json.loads(header[len(_PROGRAM_HEADER):])
            layout = meta.get("layout", {})
            return RenderProgram(
                text=body,
                declared_chart_type=str(meta["declared_chart_type"]),
                layout=ProgramLayout(
                    axes_grid=bool(layout.get("axes_grid", False)),
                    legend=bool(layout.get("legend", False)),
                    text_labels=tuple(str(t) for t in layout.get("text_labels", [])),
                ),
            )
        except (json.JSONDecodeError, KeyError, ValueError) as e:
            raise CorruptBundle("program", str(e)) from e
    try:
        return RenderProgram(text=text, declared_chart_type=fallback_chart_type)
    except ValueError as e:
        raise CorruptBundle("program", str(e)) from e


def attrs_from_json_obj(obj: object) -> VisualAttributes:
    """Strict loader for persisted attributes.json; rejects schema violations."""
    if not isinstance(obj, Mapping):
        raise CorruptBundle("attrs", "not a mapping")
    chart_type = obj.get("chart_type")
    if not is_canonical_chart_type(chart_type):
        raise CorruptBundle("attrs.chart_type", f"{chart_type!r} is not a chart type")
    styles_obj = obj.get("series_styles", {})
    if not isinstance(styles_obj, Mapping):
        raise CorruptBundle("attrs.series_styles", "not a mapping")
    styles: list[tuple[str, SeriesStyle]] = []
    for name, s in styles_obj.items():
        path = f"attrs.series_styles.{name}"
        if not isinstance(s, Mapping):
            raise CorruptBundle(path, "not a mapping")
        color = s.get("color")
        if not isinstance(color, str) or not _HEX_COLOR.match(color):
            raise CorruptBundle(f"{path}.color", f"{color!r} is not canonical hex")
        line_style = s.get("line_style", "solid")
        marker = s.get("marker", "none")
        bar_pattern = s.get("bar_pattern", "solid")
        if line_style not in LINE_STYLES:
            raise CorruptBundle(f"{path}.line_style", repr(line_style))
        if marker not in MARKERS:
            raise CorruptBundle(f"{path}.marker", repr(marker))
        if bar_pattern not in BAR_PATTERNS:
            raise CorruptBundle(f"{path}.bar_pattern", repr(bar_pattern))
        styles.append((str(name), SeriesStyle(color, line_style, marker, bar_pattern)))
    fonts_obj = obj.get("fonts", {})
    if not isinstance(fonts_obj, Mapping):
        raise CorruptBundle("attrs.fonts", "not a mapping")
    try:
        fonts = FontSpec(
            family=str(fonts_obj.get("family", "sans")),
            title_size=float(fonts_obj.get("title_size", 14.0)),
            label_size=float(fonts_obj.get("label_size", 11.0)),
        )
    except (TypeError, ValueError) as e:
        raise CorruptBundle("attrs.fonts", str(e)) from e
    legend_obj = obj.get("legend", {})
    if not isinstance(legend_obj, Mapping):
        raise CorruptBundle("attrs.legend", "not a mapping")
    visible = legend_obj.get("visible", False)
    if not isinstance(visible, bool):
        raise CorruptBundle("attrs.legend.visible", repr(visible))
    position = legend_obj.get("position", "best")
    if position not in LEGEND_POSITIONS:
        raise CorruptBundle("attrs.legend.position", repr(position))
    names = {name for name, _ in styles}
    entries: list[tuple[str, str]] = []
    for i, item in enumerate(legend_obj.get("entries", [])):
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            raise CorruptBundle(f"attrs.legend.entries[{i}]", repr(item))
        label, series = str(item[0]), str(item[1])
        if series not in names:
            raise CorruptBundle(f"attrs.legend.entries[{i}]", f"dangling series {series!r}")
        entries.append((label, series))
    return VisualAttributes(
        chart_type=str(chart_type),
        series_styles=tuple(styles),
        fonts=fonts,
        title=str(obj.get("title", "")),
        x_label=str(obj.get("x_label", "")),
        y_label=str(obj.get("y_label", "")),
        legend=LegendSpec(visible, str(position), tuple(entries)),
    )


def _report_from_json_obj(obj: object, filename: str) -> FeedbackReport:
    if not isinstance(obj, Mapping):
        raise CorruptBundle(f"feedback/{filename}", "not a mapping")
    kind = obj.get("kind")
    if kind not in FEEDBACK_KINDS:
        raise CorruptBundle(f"feedback/{filename}", f"bad kind {kind!r}")
    try:
        return FeedbackReport(
            round=int(obj["round"]),
            kind=str(kind),
            passed=bool(obj["passed"]),
            payload=dict(obj.get("payload", {})),
            triggered_reprompt=obj.get("triggered_reprompt"),
            best_round=bool(obj.get("best_round", False)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptBundle(f"feedback/{filename}", str(e)) from e


def save_bundle(bundle: ChartBundle, dir: str | Path, *, created_at: str | None = None) -> dict[str, str]:
    """Write the bundle directory; returns {relative_path: sha256} manifest."""
    root = Path(dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
        (root / "feedback").mkdir(exist_ok=True)
        files: dict[str, bytes] = {
            "chart.png": to_png_bytes(bundle.image),
            "table.csv": bundle.table.to_csv_text().encode("utf-8"),
            "attributes.json": _dump_json(bundle.attrs.to_json_obj()).encode("utf-8"),
            "program.txt": _program_file_text(bundle.program).encode("utf-8"),
            "meta.json": _dump_json({
                "status": bundle.status,
                "created_at": created_at or datetime.now(timezone.utc).isoformat(),
                "tool_version": __version__,
            }).encode("utf-8"),
        }
        if bundle.replot is not None:
            files["replot.png"] = to_png_bytes(bundle.replot)
        for i, report in enumerate(bundle.history):
            files[f"feedback/{i:02d}-{report.kind}.json"] = _dump_json(report.to_json_obj()).encode("utf-8")
        manifest: dict[str, str] = {}
        for rel, data in sorted(files.items()):
            (root / rel).write_bytes(data)
            manifest[rel] = hashlib.sha256(data).hexdigest()
        return manifest
    except OSError as e:
        raise BundleIoError(f"cannot write bundle to {root}: {e}") from e


def load_bundle(dir: str | Path) -> ChartBundle:
    root = Path(dir)
    if not root.is_dir():
        raise BundleIoError(f"not a bundle directory: {root}")

    def read(name: str, field: str) -> bytes:
        path = root / name
        if not path.is_file():
            raise CorruptBundle(field, f"missing {name}")
        try:
            return path.read_bytes()
        except OSError as e:
            raise BundleIoError(f"cannot read {path}: {e}") from e

    try:
        image = from_png_bytes(read("chart.png", "image"))
    except (ValueError, OSError) as e:
        raise CorruptBundle("image", str(e)) from e
    try:
        table = DataTable.from_csv_text(read("table.csv", "table").decode("utf-8"))
    except ValueError as e:
        raise CorruptBundle("table", str(e)) from e
    try:
        attrs_obj = json.loads(read("attributes.json", "attrs").decode("utf-8"))
    except json.JSONDecodeError as e:
        raise CorruptBundle("attrs", str(e)) from e
    attrs = attrs_from_json_obj(attrs_obj)
    program = _program_from_file_text(read("program.txt", "program").decode("utf-8"), attrs.chart_type)
    try:
        meta = json.loads(read("meta.json", "meta").decode("utf-8"))
    except json.JSONDecodeError as e:
        raise CorruptBundle("meta", str(e)) from e
    status = meta.get("status")
    if status not in STATUSES:
        raise CorruptBundle("meta.status", repr(status))

    replot = None
    if (root / "replot.png").is_file():
        try:
            replot = from_png_bytes((root / "replot.png").read_bytes())
        except (ValueError, OSError) as e:
            raise CorruptBundle("replot", str(e)) from e

    reports: list[FeedbackReport] = []
    feedback_dir = root / "feedback"
    if feedback_dir.is_dir():
        for path in sorted(feedback_dir.glob("*.json")):
            try:
                obj = json.loads(path.read_text("utf-8"))
            except json.JSONDecodeError as e:
                raise CorruptBundle(f"feedback/{path.name}", str(e)) from e
            reports.append(_report_from_json_obj(obj, path.name))

    try:
        return ChartBundle(
            image=image, table=table, attrs=attrs, program=program,
            replot=replot, history=tuple(reports), status=str(status),
        )
    except ValueError as e:
        raise CorruptBundle("meta.status", str(e)) from e
