"""A closed algebra of table operations.

Data-centric edits are expressed as ordered scripts of typed ops rather than
freeform dataframe code, so they apply deterministically and without a
sandbox. The interpreter is pure: it never mutates its input table.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .errors import DuplicateHeader, OutOfBounds, ScriptError, TypeMismatch, UnknownHeader
from .table import Cell, DataTable, format_number, parse_cell

COMPARATORS = ("<", "<=", "=", ">=", ">", "contains")
_COMPARATOR_ALIASES = {"≤": "<=", "≥": ">=", "==": "="}


def canonical_comparator(symbol: str) -> str:
    sym = _COMPARATOR_ALIASES.get(symbol.strip(), symbol.strip())
    if sym not in COMPARATORS:
        raise ValueError(f"unknown comparator {symbol!r}")
    return sym


@dataclass(frozen=True)
class FilterRows:
    column: str
    comparator: str
    value: object
    kind = "filter_rows"


@dataclass(frozen=True)
class AddRow:
    cells: tuple[object, ...]
    kind = "add_row"


@dataclass(frozen=True)
class DropRow:
    index: int
    kind = "drop_row"


@dataclass(frozen=True)
class AddColumn:
    header: str
    cells: tuple[object, ...]
    kind = "add_column"


@dataclass(frozen=True)
class DropColumn:
    header: str
    kind = "drop_column"


@dataclass(frozen=True)
class SetCell:
    row: int
    col: object  # column index or header name
    value: object
    kind = "set_cell"


@dataclass(frozen=True)
class ScaleColumn:
    header: str
    factor: float
    kind = "scale_column"


@dataclass(frozen=True)
class RenameHeader:
    old: str
    new: str
    kind = "rename_header"


TableOp = Union[FilterRows, AddRow, DropRow, AddColumn, DropColumn, SetCell, ScaleColumn, RenameHeader]


@dataclass(frozen=True)
class EditScript:
    ops: tuple[TableOp, ...] = ()

    def __add__(self, other: "EditScript") -> "EditScript":
        return EditScript(self.ops + other.ops)


def _numeric_or_raise(cell: Cell, column: str, op_index: int) -> float:
    if cell.numeric is None:
        raise TypeMismatch(f"non-numeric cell {cell.raw!r} in column {column!r}", op_index)
    return cell.numeric


def _match(cell: Cell, comparator: str, value: object, column: str, op_index: int) -> bool:
    if comparator == "contains":
        return str(value) in cell.raw
    if comparator == "=":
        if isinstance(value, (int, float)) and cell.numeric is not None:
            return cell.numeric == float(value)
        return cell.raw == str(value)
    if not isinstance(value, (int, float)):
        raise TypeMismatch(f"comparator {comparator!r} needs a numeric value, got {value!r}", op_index)
    lhs = _numeric_or_raise(cell, column, op_index)
    rhs = float(value)
    return {"<": lhs < rhs, "<=": lhs <= rhs, ">=": lhs >= rhs, ">": lhs > rhs}[comparator]


def _apply_one(table: DataTable, op: TableOp, i: int) -> DataTable:
    headers = list(table.col_headers)
    rows = [list(r) for r in table.cells]
    row_headers = list(table.row_headers) if table.row_headers is not None else None

    if isinstance(op, FilterRows):
        if op.column not in headers:
            raise UnknownHeader(op.column, i)
        j = headers.index(op.column)
        comparator = canonical_comparator(op.comparator)
        keep = [k for k, row in enumerate(rows) if _match(row[j], comparator, op.value, op.column, i)]
        rows = [rows[k] for k in keep]
        if row_headers is not None:
            row_headers = [row_headers[k] for k in keep]

    elif isinstance(op, AddRow):
        if len(op.cells) != len(headers):
            raise OutOfBounds(f"add_row expects {len(headers)} cells, got {len(op.cells)}", i)
        rows.append([parse_cell(v, headers[j]) for j, v in enumerate(op.cells)])
        if row_headers is not None:
            row_headers.append("")

    elif isinstance(op, DropRow):
        if not 0 <= op.index < len(rows):
            raise OutOfBounds(f"drop_row index {op.index} out of range 0..{len(rows) - 1}", i)
        del rows[op.index]
        if row_headers is not None:
            del row_headers[op.index]

    elif isinstance(op, AddColumn):
        if op.header in headers:
            raise DuplicateHeader(op.header, i)
        if len(op.cells) != len(rows):
            raise OutOfBounds(f"add_column expects {len(rows)} cells, got {len(op.cells)}", i)
        headers.append(op.header)
        for k, row in enumerate(rows):
            row.append(parse_cell(op.cells[k], op.header))

    elif isinstance(op, DropColumn):
        if op.header not in headers:
            raise UnknownHeader(op.header, i)
        if len(headers) == 1:
            raise OutOfBounds("cannot drop the last column", i)
        j = headers.index(op.header)
        del headers[j]
        for row in rows:
            del row[j]

    elif isinstance(op, SetCell):
        if isinstance(op.col, str):
            if op.col not in headers:
                raise UnknownHeader(op.col, i)
            j = headers.index(op.col)
        else:
            j = int(op.col)
            if not 0 <= j < len(headers):
                raise OutOfBounds(f"set_cell column {j} out of range", i)
        if not 0 <= op.row < len(rows):
            raise OutOfBounds(f"set_cell row {op.row} out of range", i)
        rows[op.row][j] = parse_cell(op.value, headers[j])

    elif isinstance(op, ScaleColumn):
        if op.header not in headers:
            raise UnknownHeader(op.header, i)
        j = headers.index(op.header)
        for row in rows:
            value = _numeric_or_raise(row[j], op.header, i) * float(op.factor)
            row[j] = Cell(raw=format_number(value), numeric=value)

    elif isinstance(op, RenameHeader):
        if op.old not in headers:
            raise UnknownHeader(op.old, i)
        if not op.new:
            raise ScriptError("rename_header target must be non-empty", i)
        if op.new in headers and op.new != op.old:
            raise DuplicateHeader(op.new, i)
        headers[headers.index(op.old)] = op.new

    else:
        raise ScriptError(f"unknown op {op!r}", i)

    return DataTable(tuple(headers), tuple(tuple(r) for r in rows),
                     tuple(row_headers) if row_headers is not None else None)


def apply_edit_script(table: DataTable, script: EditScript) -> DataTable:
    """Apply ops in order, returning a new table. The input is untouched."""
    out = table
    for i, op in enumerate(script.ops):
        out = _apply_one(out, op, i)
    return out


# --- JSON (de)serialization --------------------------------------------------

def op_to_json_obj(op: TableOp) -> dict:
    if isinstance(op, FilterRows):
        return {"op": op.kind, "column": op.column, "comparator": op.comparator, "value": op.value}
    if isinstance(op, AddRow):
        return {"op": op.kind, "cells": list(op.cells)}
    if isinstance(op, DropRow):
        return {"op": op.kind, "index": op.index}
    if isinstance(op, AddColumn):
        return {"op": op.kind, "header": op.header, "cells": list(op.cells)}
    if isinstance(op, DropColumn):
        return {"op": op.kind, "header": op.header}
    if isinstance(op, SetCell):
        return {"op": op.kind, "row": op.row, "col": op.col, "value": op.value}
    if isinstance(op, ScaleColumn):
        return {"op": op.kind, "header": op.header, "factor": op.factor}
    if isinstance(op, RenameHeader):
        return {"op": op.kind, "old": op.old, "new": op.new}
    raise ValueError(f"unknown op {op!r}")


def op_from_json_obj(obj: dict) -> TableOp:
    kind = obj.get("op")
    if kind == "filter_rows":
        return FilterRows(str(obj["column"]), canonical_comparator(str(obj["comparator"])), obj["value"])
    if kind == "add_row":
        return AddRow(tuple(obj["cells"]))
    if kind == "drop_row":
        return DropRow(int(obj["index"]))
    if kind == "add_column":
        return AddColumn(str(obj["header"]), tuple(obj["cells"]))
    if kind == "drop_column":
        return DropColumn(str(obj["header"]))
    if kind == "set_cell":
        col = obj["col"]
        return SetCell(int(obj["row"]), col if isinstance(col, str) else int(col), obj["value"])
    if kind == "scale_column":
        return ScaleColumn(str(obj["header"]), float(obj["factor"]))
    if kind == "rename_header":
        return RenameHeader(str(obj["old"]), str(obj["new"]))
    raise ValueError(f"unknown op kind {kind!r}")


def script_to_json_obj(script: EditScript) -> list[dict]:
    return [op_to_json_obj(op) for op in script.ops]


def script_from_json_obj(obj: object) -> EditScript:
    if not isinstance(obj, list):
        raise ValueError("edit script must be a list of ops")
    return EditScript(tuple(op_from_json_obj(item) for item in obj))
