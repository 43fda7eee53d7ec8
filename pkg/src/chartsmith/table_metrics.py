"""Table- and attribute-level evaluation.

RMS treats a table as an unordered set of (row-key, column-key, value)
entries. Row keys come from the row headers when present, otherwise from the
first column's raw text (in which case the remaining columns are the data).
Entry similarity combines a thresholded normalized edit distance on the
concatenated keys with a relative numeric distance on the values, and entries
are matched one-to-one by maximum-weight assignment.

VAES scores the fraction of canonical attribute leaves matching ground truth:
colors within CIE76 deltaE 5, numbers within 2% relative error, strings
case-insensitively, enums exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .attributes import VisualAttributes, attribute_leaves
from .colors import delta_e76
from .errors import EmptyTable, NoNumericSeries
from .table import DataTable

KEY_SEPARATOR = "\x1f"
DEFAULT_TAU = 0.5
VALUE_EPSILON = 1e-9
COLOR_DELTA_E_TOLERANCE = 5.0
NUMBER_RELATIVE_TOLERANCE = 0.02
DISCONTINUITY_FACTOR = 3.0
FLAT_SLOPE_FACTOR = 1e-9


@dataclass(frozen=True)
class TableEntry:
    row_key: str
    col_key: str
    value: object  # float when numeric, str otherwise

    @property
    def key(self) -> str:
        return self.row_key + KEY_SEPARATOR + self.col_key


@dataclass(frozen=True)
class RmsReport:
    precision: float
    recall: float
    f1: float
    matched_pairs: tuple[tuple[int, int, float], ...]


def table_entries(table: DataTable) -> list[TableEntry]:
    """Flatten a table to entries; see module docstring for the row-key rule."""
    entries: list[TableEntry] = []
    if table.row_headers is not None:
        for i, row in enumerate(table.cells):
            for j, cell in enumerate(row):
                value = cell.numeric if cell.numeric is not None else cell.raw
                entries.append(TableEntry(table.row_headers[i], table.col_headers[j], value))
    else:
        for row in table.cells:
            row_key = row[0].raw
            for j in range(1, table.n_cols):
                cell = row[j]
                value = cell.numeric if cell.numeric is not None else cell.raw
                entries.append(TableEntry(row_key, table.col_headers[j], value))
    return entries


def levenshtein(a: str, b: str) -> int:
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def normalized_edit_distance(a: str, b: str, tau: float) -> float:
    """Levenshtein over max length, snapped to 1 when above tau."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    d = levenshtein(a, b) / longest
    return 1.0 if d > tau else d


def entry_similarity(pred: TableEntry, gold: TableEntry, tau: float) -> float:
    key_sim = 1.0 - normalized_edit_distance(pred.key, gold.key, tau)
    if isinstance(pred.value, float) and isinstance(gold.value, float):
        value_sim = 1.0 - min(1.0, abs(pred.value - gold.value) / max(abs(gold.value), VALUE_EPSILON))
    else:
        value_sim = 1.0 - normalized_edit_distance(str(pred.value), str(gold.value), tau)
    return key_sim * value_sim


def rms(pred: DataTable, gold: DataTable, tau: float = DEFAULT_TAU) -> RmsReport:
    """Relative mapping similarity between two tables."""
    pred_entries = table_entries(pred)
    gold_entries = table_entries(gold)
    if not pred_entries:
        raise EmptyTable("pred")
    if not gold_entries:
        raise EmptyTable("gold")
    sim = np.zeros((len(pred_entries), len(gold_entries)), dtype=np.float64)
    for i, p in enumerate(pred_entries):
        for j, t in enumerate(gold_entries):
            sim[i, j] = entry_similarity(p, t, tau)
    rows, cols = linear_sum_assignment(-sim)
    matched = tuple((int(i), int(j), float(sim[i, j])) for i, j in zip(rows, cols))
    mass = float(sim[rows, cols].sum())
    precision = mass / len(pred_entries)
    recall = mass / len(gold_entries)
    f1 = 0.0 if precision + recall == 0 else 2.0 * precision * recall / (precision + recall)
    return RmsReport(precision, recall, f1, matched)


# --- attribute scoring ---------------------------------------------------------

def _leaf_matches(kind: str, pred_value: object, gold_value: object) -> bool:
    if kind == "color":
        return delta_e76(str(pred_value), str(gold_value)) <= COLOR_DELTA_E_TOLERANCE
    if kind == "number":
        p, g = float(pred_value), float(gold_value)  # type: ignore[arg-type]
        return abs(p - g) <= NUMBER_RELATIVE_TOLERANCE * max(abs(g), VALUE_EPSILON)
    if kind == "string":
        return str(pred_value).lower() == str(gold_value).lower()
    return pred_value == gold_value  # enum


def vaes(pred: VisualAttributes, gold: VisualAttributes) -> float:
    """Fraction of gold attribute leaves matched by pred (in [0, 1])."""
    gold_leaves = attribute_leaves(gold)
    if not gold_leaves:
        return 1.0
    pred_leaves = attribute_leaves(pred)
    matched = 0
    for path, (kind, gold_value) in gold_leaves.items():
        got = pred_leaves.get(path)
        if got is None:
            continue
        if _leaf_matches(kind, got[1], gold_value):
            matched += 1
    return matched / len(gold_leaves)


# --- per-series statistics -----------------------------------------------------

@dataclass(frozen=True)
class SeriesStat:
    mean: float
    min: float
    max: float
    slope_sign: str  # up | down | flat
    discontinuities: tuple[int, ...]

    def to_json_obj(self) -> dict:
        return {"mean": self.mean, "min": self.min, "max": self.max,
                "slope_sign": self.slope_sign, "discontinuities": list(self.discontinuities)}


def _series_stat(indices: list[int], values: list[float]) -> SeriesStat:
    arr = np.asarray(values, dtype=np.float64)
    lo, hi = float(arr.min()), float(arr.max())
    value_range = hi - lo
    if len(arr) < 2 or value_range == 0.0:
        slope_sign = "flat"
    else:
        xs = np.asarray(indices, dtype=np.float64)
        slope = float(np.polyfit(xs, arr, 1)[0])
        if abs(slope) < FLAT_SLOPE_FACTOR * value_range:
            slope_sign = "flat"
        else:
            slope_sign = "up" if slope > 0 else "down"
    discontinuities: list[int] = []
    if len(arr) >= 2:
        deltas = np.abs(np.diff(arr))
        median = float(np.median(deltas))
        for k, d in enumerate(deltas):
            if (median == 0.0 and d > 0.0) or (median > 0.0 and d > DISCONTINUITY_FACTOR * median):
                discontinuities.append(indices[k])
    return SeriesStat(float(arr.mean()), lo, hi, slope_sign, tuple(discontinuities))


def table_stats(table: DataTable) -> dict[str, SeriesStat]:
    """Per-series mean/extrema, trend direction, and discontinuity indices.

    A column is a numeric series when it holds at least one numeric cell;
    statistics run over the present numeric values only. Discontinuity at i
    means the jump from row i to the next present value exceeds three times
    the median absolute step (any nonzero jump when the median is zero).
    """
    stats: dict[str, SeriesStat] = {}
    for j, header in enumerate(table.col_headers):
        indices = [i for i, row in enumerate(table.cells) if row[j].numeric is not None]
        values = [table.cells[i][j].numeric for i in indices]
        if not values:
            continue
        stats[header] = _series_stat(indices, values)  # type: ignore[arg-type]
    if not stats:
        raise NoNumericSeries("table has no numeric column")
    return stats
