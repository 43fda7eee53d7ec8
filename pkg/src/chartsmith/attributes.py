"""Canonical structured style record for a chart, and the canonicalizer that
turns loosely-structured model output into it.

Canonical chart_type strings are "bar", "line", "scatter", "pie", "area", or
"other:<text>" for anything else.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .colors import canonical_hex
from .errors import MissingChartType

CHART_TYPES = ("bar", "line", "scatter", "pie", "area")
LINE_STYLES = ("solid", "dashed", "dotted", "dashdot", "none")
MARKERS = ("none", "circle", "square", "triangle", "diamond", "plus", "x", "star")
BAR_PATTERNS = ("solid", "hatched", "striped", "dotted", "crosshatch", "none")
LEGEND_POSITIONS = (
    "best", "upper_right", "upper_left", "lower_right", "lower_left",
    "right", "left", "upper_center", "lower_center", "center",
)

_LINE_ALIASES = {"-": "solid", "--": "dashed", ":": "dotted", "-.": "dashdot", "": "none"}
_MARKER_ALIASES = {"o": "circle", "s": "square", "^": "triangle", "d": "diamond",
                   "+": "plus", "*": "star", "": "none"}

DEFAULT_FONT_FAMILY = "sans"
DEFAULT_TITLE_SIZE = 14.0
DEFAULT_LABEL_SIZE = 11.0

# Default series palette, assigned by series position when no color is given.
DEFAULT_PALETTE = (
    "#1F77B4", "#FF7F0E", "#2CA02C", "#D62728", "#9467BD",
    "#8C564B", "#E377C2", "#7F7F7F", "#BCBD22", "#17BECF",
)


@dataclass(frozen=True)
class SeriesStyle:
    color: str
    line_style: str = "solid"
    marker: str = "none"
    bar_pattern: str = "solid"


@dataclass(frozen=True)
class FontSpec:
    family: str = DEFAULT_FONT_FAMILY
    title_size: float = DEFAULT_TITLE_SIZE
    label_size: float = DEFAULT_LABEL_SIZE


@dataclass(frozen=True)
class LegendSpec:
    visible: bool = False
    position: str = "best"
    entries: tuple[tuple[str, str], ...] = ()  # (label, series-name) pairs


@dataclass(frozen=True)
class VisualAttributes:
    chart_type: str
    series_styles: tuple[tuple[str, SeriesStyle], ...] = ()
    fonts: FontSpec = field(default_factory=FontSpec)
    title: str = ""
    x_label: str = ""
    y_label: str = ""
    legend: LegendSpec = field(default_factory=LegendSpec)

    @property
    def series(self) -> dict[str, SeriesStyle]:
        return dict(self.series_styles)

    def style(self, name: str) -> SeriesStyle:
        return self.series[name]

    def to_json_obj(self) -> dict:
        return {
            "chart_type": self.chart_type,
            "series_styles": {
                name: {
                    "color": s.color,
                    "line_style": s.line_style,
                    "marker": s.marker,
                    "bar_pattern": s.bar_pattern,
                }
                for name, s in self.series_styles
            },
            "fonts": {
                "family": self.fonts.family,
                "title_size": self.fonts.title_size,
                "label_size": self.fonts.label_size,
            },
            "title": self.title,
            "x_label": self.x_label,
            "y_label": self.y_label,
            "legend": {
                "visible": self.legend.visible,
                "position": self.legend.position,
                "entries": [[label, series] for label, series in self.legend.entries],
            },
        }


@dataclass(frozen=True)
class CanonWarning:
    code: str  # unknown_key | dangling_legend_entry | invalid_enum | coerce_failed
    path: str
    detail: str = ""


def canonical_chart_type(value: object) -> str:
    text = str(value).strip()
    low = text.lower()
    if low in CHART_TYPES:
        return low
    if low.startswith("other:"):
        rest = text.split(":", 1)[1].strip()
        return "other:" + rest.lower()
    return "other:" + low


def is_canonical_chart_type(value: object) -> bool:
    return isinstance(value, str) and (value in CHART_TYPES or value.startswith("other:"))


def _match_enum(value: object, allowed: tuple[str, ...], aliases: Mapping[str, str],
                default: str, path: str, warnings: list[CanonWarning]) -> str:
    text = str(value).strip()
    low = text.lower().replace(" ", "_").replace("-", "_")
    if low in allowed:
        return low
    alias = aliases.get(text) or aliases.get(text.lower())
    if alias:
        return alias
    warnings.append(CanonWarning("invalid_enum", path, f"{value!r} not in {allowed}"))
    return default


def _coerce_bool(value: object, default: bool, path: str, warnings: list[CanonWarning]) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        low = value.strip().lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
    warnings.append(CanonWarning("coerce_failed", path, f"expected bool, got {value!r}"))
    return default


def _coerce_number(value: object, default: float, path: str, warnings: list[CanonWarning]) -> float:
    try:
        return float(value)  # type: ignore[arg-type]
    except (TypeError, ValueError):
        warnings.append(CanonWarning("coerce_failed", path, f"expected number, got {value!r}"))
        return default


_KNOWN_KEYS = {"chart_type", "series_styles", "fonts", "title", "x_label", "y_label", "legend"}
_KNOWN_STYLE_KEYS = {"color", "line_style", "marker", "bar_pattern"}
_KNOWN_FONT_KEYS = {"family", "title_size", "label_size"}
_KNOWN_LEGEND_KEYS = {"visible", "position", "entries"}


def canonicalize_attributes(raw: Mapping) -> tuple[VisualAttributes, list[CanonWarning]]:
    """Normalize a loosely-structured attribute record.

    Unknown keys are dropped with warnings; colors become uppercase 6-digit
    hex; enums match case-insensitively; missing optional fields take the
    documented defaults. Raises MissingChartType and InvalidColor only.
    """
    if not isinstance(raw, Mapping):
        raise MissingChartType("attribute record must be a mapping")
    warnings: list[CanonWarning] = []

    if "chart_type" not in raw or raw["chart_type"] in (None, ""):
        raise MissingChartType("attribute record has no chart_type")
    chart_type = canonical_chart_type(raw["chart_type"])

    for key in raw:
        if key not in _KNOWN_KEYS:
            warnings.append(CanonWarning("unknown_key", str(key)))

    styles: list[tuple[str, SeriesStyle]] = []
    raw_styles = raw.get("series_styles") or {}
    if isinstance(raw_styles, Mapping):
        for idx, (name, entry) in enumerate(raw_styles.items()):
            path = f"series_styles.{name}"
            entry = entry if isinstance(entry, Mapping) else {}
            for key in entry:
                if key not in _KNOWN_STYLE_KEYS:
                    warnings.append(CanonWarning("unknown_key", f"{path}.{key}"))
            if "color" in entry and entry["color"] not in (None, ""):
                color = canonical_hex(entry["color"])
            else:
                color = DEFAULT_PALETTE[idx % len(DEFAULT_PALETTE)]
            line_style = _match_enum(entry.get("line_style", "solid"), LINE_STYLES,
                                     _LINE_ALIASES, "solid", f"{path}.line_style", warnings)
            marker = _match_enum(entry.get("marker", "none"), MARKERS,
                                 _MARKER_ALIASES, "none", f"{path}.marker", warnings)
            bar_pattern = _match_enum(entry.get("bar_pattern", "solid"), BAR_PATTERNS,
                                      {}, "solid", f"{path}.bar_pattern", warnings)
            styles.append((str(name), SeriesStyle(color, line_style, marker, bar_pattern)))
    elif raw_styles:
        warnings.append(CanonWarning("coerce_failed", "series_styles", "expected a mapping"))

    raw_fonts = raw.get("fonts") or {}
    if not isinstance(raw_fonts, Mapping):
        warnings.append(CanonWarning("coerce_failed", "fonts", "expected a mapping"))
        raw_fonts = {}
    for key in raw_fonts:
        if key not in _KNOWN_FONT_KEYS:
            warnings.append(CanonWarning("unknown_key", f"fonts.{key}"))
    fonts = FontSpec(
        family=str(raw_fonts.get("family", DEFAULT_FONT_FAMILY)),
        title_size=_coerce_number(raw_fonts.get("title_size", DEFAULT_TITLE_SIZE),
                                  DEFAULT_TITLE_SIZE, "fonts.title_size", warnings),
        label_size=_coerce_number(raw_fonts.get("label_size", DEFAULT_LABEL_SIZE),
                                  DEFAULT_LABEL_SIZE, "fonts.label_size", warnings),
    )

    raw_legend = raw.get("legend") or {}
    if not isinstance(raw_legend, Mapping):
        warnings.append(CanonWarning("coerce_failed", "legend", "expected a mapping"))
        raw_legend = {}
    for key in raw_legend:
        if key not in _KNOWN_LEGEND_KEYS:
            warnings.append(CanonWarning("unknown_key", f"legend.{key}"))
    visible = _coerce_bool(raw_legend.get("visible", False), False, "legend.visible", warnings)
    position = _match_enum(raw_legend.get("position", "best"), LEGEND_POSITIONS, {},
                           "best", "legend.position", warnings)
    series_names = {name for name, _ in styles}
    entries: list[tuple[str, str]] = []
    for i, item in enumerate(raw_legend.get("entries") or []):
        if isinstance(item, Mapping):
            label, series = str(item.get("label", "")), str(item.get("series", ""))
        elif isinstance(item, (list, tuple)) and len(item) == 2:
            label, series = str(item[0]), str(item[1])
        else:
            warnings.append(CanonWarning("coerce_failed", f"legend.entries[{i}]", f"bad entry {item!r}"))
            continue
        if series not in series_names:
            warnings.append(CanonWarning("dangling_legend_entry", f"legend.entries[{i}]", series))
            continue
        entries.append((label, series))

    attrs = VisualAttributes(
        chart_type=chart_type,
        series_styles=tuple(styles),
        fonts=fonts,
        title=str(raw.get("title", "") or ""),
        x_label=str(raw.get("x_label", "") or ""),
        y_label=str(raw.get("y_label", "") or ""),
        legend=LegendSpec(visible, position, tuple(entries)),
    )
    return attrs, warnings


def attribute_leaves(attrs: VisualAttributes) -> dict[str, tuple[str, object]]:
    """Flatten to leaf fields on the canonical schema.

    Returns path -> (kind, value) with kind in {color, number, string, enum}.
    """
    leaves: dict[str, tuple[str, object]] = {"chart_type": ("enum", attrs.chart_type)}
    for name, s in attrs.series_styles:
        leaves[f"series_styles.{name}.color"] = ("color", s.color)
        leaves[f"series_styles.{name}.line_style"] = ("enum", s.line_style)
        leaves[f"series_styles.{name}.marker"] = ("enum", s.marker)
        leaves[f"series_styles.{name}.bar_pattern"] = ("enum", s.bar_pattern)
    leaves["fonts.family"] = ("string", attrs.fonts.family)
    leaves["fonts.title_size"] = ("number", attrs.fonts.title_size)
    leaves["fonts.label_size"] = ("number", attrs.fonts.label_size)
    leaves["title"] = ("string", attrs.title)
    leaves["x_label"] = ("string", attrs.x_label)
    leaves["y_label"] = ("string", attrs.y_label)
    leaves["legend.visible"] = ("enum", attrs.legend.visible)
    leaves["legend.position"] = ("enum", attrs.legend.position)
    for i, (label, series) in enumerate(attrs.legend.entries):
        leaves[f"legend.entries[{i}]"] = ("string", f"{label} -> {series}")
    return leaves


def apply_attribute_patch(attrs: VisualAttributes, path: str, value: object) -> dict:
    """Apply one (path, value) patch to the raw-dict form of the attributes.

    Returns the patched raw dict (to be re-canonicalized by the caller).
    Raises KeyError on paths outside the canonical schema.
    """
    obj = attrs.to_json_obj()
    parts = path.split(".")
    if parts[0] in ("title", "x_label", "y_label", "chart_type") and len(parts) == 1:
        obj[parts[0]] = value
    elif parts[0] == "fonts" and len(parts) == 2 and parts[1] in _KNOWN_FONT_KEYS:
        obj["fonts"][parts[1]] = value
    elif parts[0] == "legend" and len(parts) == 2 and parts[1] in _KNOWN_LEGEND_KEYS:
        obj["legend"][parts[1]] = value
    elif parts[0] == "series_styles" and len(parts) == 3 and parts[2] in _KNOWN_STYLE_KEYS:
        obj["series_styles"].setdefault(parts[1], {})[parts[2]] = value
    elif parts[0] == "series_styles" and len(parts) == 2 and isinstance(value, Mapping):
        obj["series_styles"][parts[1]] = dict(value)
    else:
        raise KeyError(path)
    return obj
