"""Data tables extracted from charts: headers plus typed cells.

Tables are wide-form: one column per series, with the first column usually
holding the category/x values. Cell text is normalized into a numeric value
where it parses as one.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

ROW_HEADER_SENTINEL = ""  # csv column header marking the row-header column

_CURRENCY = "$"
_UNICODE_MINUS = "−"


def _header_is_percent(header: str) -> bool:
    h = header.lower()
    return "%" in h or "percent" in h


def normalize_numeric(raw: str, header: str = "") -> float | None:
    """Parse cell text to a finite float, or None.

    Strips thousands separators and currency signs; maps the unicode minus to
    ASCII. A trailing/embedded '%' is stripped, and divides the value by 100
    only when the column header itself mentions percent.
    """
    s = raw.strip().replace(_UNICODE_MINUS, "-").replace(",", "").replace(_CURRENCY, "")
    had_percent = "%" in s
    if had_percent:
        s = s.replace("%", "")
    s = s.strip()
    if not s:
        return None
    try:
        value = float(s)
    except ValueError:
        return None
    if not math.isfinite(value):
        return None
    if had_percent and _header_is_percent(header):
        value /= 100.0
    return value


def format_number(value: float) -> str:
    """Canonical text for a numeric cell: integers without a decimal point."""
    if math.isfinite(value) and value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


@dataclass(frozen=True)
class Cell:
    raw: str
    numeric: float | None = None


def parse_cell(raw: object, header: str = "") -> Cell:
    if isinstance(raw, bool):
        text = str(raw)
        return Cell(raw=text, numeric=None)
    if isinstance(raw, (int, float)):
        value = float(raw)
        return Cell(raw=format_number(value), numeric=value if math.isfinite(value) else None)
    text = str(raw)
    return Cell(raw=text, numeric=normalize_numeric(text, header))


@dataclass(frozen=True)
class DataTable:
    col_headers: tuple[str, ...]
    cells: tuple[tuple[Cell, ...], ...]
    row_headers: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.col_headers:
            raise ValueError("a table needs at least one column")
        for h in self.col_headers:
            if not isinstance(h, str) or not h:
                raise ValueError(f"column headers must be non-empty strings, got {h!r}")
        n_cols = len(self.col_headers)
        for i, row in enumerate(self.cells):
            if len(row) != n_cols:
                raise ValueError(f"row {i} has {len(row)} cells, expected {n_cols}")
        if self.row_headers is not None and len(self.row_headers) != len(self.cells):
            raise ValueError("row_headers length must match the number of rows")

    @property
    def n_rows(self) -> int:
        return len(self.cells)

    @property
    def n_cols(self) -> int:
        return len(self.col_headers)

    @classmethod
    def from_rows(
        cls,
        col_headers: list[str] | tuple[str, ...],
        rows: list[list[object]] | tuple,
        row_headers: list[str] | tuple[str, ...] | None = None,
    ) -> "DataTable":
        headers = tuple(str(h) for h in col_headers)
        cells = tuple(
            tuple(parse_cell(v, headers[j] if j < len(headers) else "") for j, v in enumerate(row))
            for row in rows
        )
        return cls(headers, cells, tuple(row_headers) if row_headers is not None else None)

    def column_index(self, header: str) -> int:
        try:
            return self.col_headers.index(header)
        except ValueError:
            raise KeyError(header) from None

    def column(self, header: str) -> tuple[Cell, ...]:
        j = self.column_index(header)
        return tuple(row[j] for row in self.cells)

    def to_csv_text(self) -> str:
        """RFC-4180 text; a leading empty header marks the row-header column."""
        buf = io.StringIO()
        writer = csv.writer(buf)
        if self.row_headers is not None:
            writer.writerow([ROW_HEADER_SENTINEL, *self.col_headers])
            for rh, row in zip(self.row_headers, self.cells):
                writer.writerow([rh, *(c.raw for c in row)])
        else:
            writer.writerow(list(self.col_headers))
            for row in self.cells:
                writer.writerow([c.raw for c in row])
        return buf.getvalue()

    @classmethod
    def from_csv_text(cls, text: str) -> "DataTable":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or not rows[0]:
            raise ValueError("empty csv")
        header_row = rows[0]
        body = rows[1:]
        if header_row[0] == ROW_HEADER_SENTINEL:
            col_headers = header_row[1:]
            row_headers = [r[0] if r else "" for r in body]
            data_rows = [r[1:] for r in body]
            return cls.from_rows(col_headers, data_rows, row_headers)
        return cls.from_rows(header_row, body)
