import pytest

from chartsmith.editscript import (
    AddColumn, AddRow, DropColumn, DropRow, EditScript, FilterRows, RenameHeader,
    ScaleColumn, SetCell, apply_edit_script, script_from_json_obj, script_to_json_obj,
)
from chartsmith.errors import (
    DuplicateHeader, OutOfBounds, TypeMismatch, UnknownHeader,
)

from conftest import table_of


@pytest.fixture
def years_table():
    return table_of(["year", "sales"], [[1999, 10], [2001, 20], [2005, 30]])


def test_empty_script_is_identity(years_table):
    assert apply_edit_script(years_table, EditScript()) == years_table


def test_filter_rows_ge(years_table):
    # hand-applied predicate: 1999 drops, 2001 and 2005 stay
    out = apply_edit_script(years_table, EditScript((FilterRows("year", ">=", 2000),)))
    assert out.n_rows == 2
    assert [r[0].numeric for r in out.cells] == [2001.0, 2005.0]


def test_filter_rows_unicode_comparator(years_table):
    out = apply_edit_script(years_table, EditScript((FilterRows("year", "≥", 2000),)))
    assert out.n_rows == 2


def test_filter_contains():
    t = table_of(["region", "v"], [["north", 1], ["south", 2], ["north-east", 3]])
    out = apply_edit_script(t, EditScript((FilterRows("region", "contains", "north"),)))
    assert out.n_rows == 2


def test_scale_column_elementwise(years_table):
    # elementwise multiply oracle
    expected = [v * 0.001 for v in (10.0, 20.0, 30.0)]
    out = apply_edit_script(years_table, EditScript((ScaleColumn("sales", 0.001),)))
    assert [c.numeric for c in out.column("sales")] == expected
    assert [c.raw for c in out.column("sales")] == ["0.01", "0.02", "0.03"]


def test_scale_column_rerenders_raw_from_numeric():
    t = table_of(["sales"], [["1,200"]])
    out = apply_edit_script(t, EditScript((ScaleColumn("sales", 2),)))
    assert out.cells[0][0] == out.cells[0][0].__class__(raw="2400", numeric=2400.0)


def test_add_and_drop_row(years_table):
    out = apply_edit_script(years_table, EditScript((AddRow(("2010", "40")), DropRow(0))))
    assert out.n_rows == 3
    assert out.cells[-1][0].numeric == 2010.0


def test_add_and_drop_column(years_table):
    out = apply_edit_script(years_table, EditScript((
        AddColumn("profit", (1, 2, 3)),
        DropColumn("sales"),
    )))
    assert out.col_headers == ("year", "profit")


def test_set_cell_by_header_and_index(years_table):
    out = apply_edit_script(years_table, EditScript((
        SetCell(0, "sales", 99),
        SetCell(1, 1, "1,500"),
    )))
    assert out.cells[0][1].numeric == 99.0
    assert out.cells[1][1].numeric == 1500.0


def test_rename_header(years_table):
    out = apply_edit_script(years_table, EditScript((RenameHeader("sales", "revenue"),)))
    assert out.col_headers == ("year", "revenue")


class TestErrors:
    def test_drop_row_out_of_bounds(self, years_table):
        with pytest.raises(OutOfBounds) as e:
            apply_edit_script(years_table, EditScript((DropRow(3),)))
        assert e.value.op_index == 0

    def test_unknown_header(self, years_table):
        with pytest.raises(UnknownHeader) as e:
            apply_edit_script(years_table, EditScript((DropRow(0), ScaleColumn("nope", 2))))
        assert e.value.op_index == 1
        assert e.value.name == "nope"

    def test_numeric_op_on_text_column(self):
        t = table_of(["region", "v"], [["north", 1]])
        with pytest.raises(TypeMismatch):
            apply_edit_script(t, EditScript((ScaleColumn("region", 2),)))

    def test_order_comparator_on_text_column(self):
        t = table_of(["region", "v"], [["north", 1]])
        with pytest.raises(TypeMismatch):
            apply_edit_script(t, EditScript((FilterRows("region", "<", 5),)))

    def test_duplicate_header(self, years_table):
        with pytest.raises(DuplicateHeader):
            apply_edit_script(years_table, EditScript((AddColumn("year", (0, 0, 0)),)))

    def test_wrong_width_add_row(self, years_table):
        with pytest.raises(OutOfBounds):
            apply_edit_script(years_table, EditScript((AddRow(("just-one",)),)))

    def test_cannot_drop_last_column(self):
        t = table_of(["only"], [[1]])
        with pytest.raises(OutOfBounds):
            apply_edit_script(t, EditScript((DropColumn("only"),)))


def test_purity(years_table):
    snapshot = table_of(["year", "sales"], [[1999, 10], [2001, 20], [2005, 30]])
    apply_edit_script(years_table, EditScript((ScaleColumn("sales", 3), DropRow(0))))
    assert years_table == snapshot


def test_composition_law(years_table):
    s1 = EditScript((FilterRows("year", ">=", 2000),))
    s2 = EditScript((ScaleColumn("sales", 10),))
    assert apply_edit_script(apply_edit_script(years_table, s1), s2) == \
        apply_edit_script(years_table, s1 + s2)


def test_json_round_trip(years_table):
    script = EditScript((
        FilterRows("year", ">=", 2000), AddRow(("2010", "40")), DropRow(0),
        AddColumn("p", ("1", "2")), DropColumn("p"), SetCell(0, "sales", 7),
        ScaleColumn("sales", 1.5), RenameHeader("sales", "rev"),
    ))
    back = script_from_json_obj(script_to_json_obj(script))
    assert back == script
    assert apply_edit_script(years_table, back) == apply_edit_script(years_table, script)


def test_json_rejects_unknown_op():
    with pytest.raises(ValueError):
        script_from_json_obj([{"op": "transpose"}])
