"""Builds a fully deterministic 4-case eval dataset plus replay fixtures.

The recording pass drives the pipeline with scripted gateway/sandbox stand-ins
while capturing every model response into a fingerprint-keyed fixture dir and
every sandbox response into a digest-keyed fixture dir. Replay passes then run
entirely from those directories.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from chartsmith.attributes import VisualAttributes, canonicalize_attributes
from chartsmith.bundle import attrs_from_json_obj
from chartsmith.derender import DerenderConfig
from chartsmith.gateway import Gateway, ReplayProvider, ScriptedProvider
from chartsmith.images import ChartImage, save_png
from chartsmith.sandbox import FixtureSandbox, RecordingSandbox, ScriptedSandbox
from chartsmith.table import DataTable
from chartsmith.evaluation import eval_run

from conftest import attrs_json_text, code_response_text, ok_execute, ok_validate, staged_table_text

CREATED_AT = "2026-01-01T00:00:00+00:00"

CASE_IDS = ("01-style", "02-layout", "03-format", "04-data")
CASE_TYPES = {"01-style": "style", "02-layout": "layout",
              "03-format": "format", "04-data": "data"}

_TABLE_ROWS = [["1999", "10"], ["2001", "20"], ["2005", "30"]]


def _program0(case_id: str) -> str:
    # per-case text keeps composed render sources (and so sandbox fixture
    # keys) distinct across cases
    return f"draw = 1  # {case_id}"


def _program1(case_id: str) -> str:
    return f"draw = 2  # {case_id}"


def _case_image(index: int) -> ChartImage:
    rng = np.random.default_rng(1000 + index)
    return ChartImage(rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8))


def _edited(image: ChartImage) -> ChartImage:
    px = image.pixels.copy()
    px[0:16, 0:16] = 255 - px[0:16, 0:16]  # declared tile r0c0
    return ChartImage(px)


def _steps_json(case_id: str) -> str:
    edit_type = CASE_TYPES[case_id]
    if edit_type == "style":
        step = {"target": "style", "instruction": "make sales blue",
                "declared_regions": ["r0c0"],
                "patches": [["series_styles.sales.color", "#0000FF"]]}
    elif edit_type == "data":
        step = {"target": "data", "instruction": "keep 2000 onwards",
                "declared_regions": ["r0c0"],
                "ops": [{"op": "filter_rows", "column": "year",
                         "comparator": ">=", "value": 2000}]}
    else:  # layout / format: program re-composition
        step = {"target": "code", "instruction": f"recompose for {edit_type}",
                "declared_regions": ["r0c0"], "program": _program1(case_id)}
    return json.dumps([step])


@dataclass
class GoldenSetup:
    dataset_dir: Path
    fixtures_dir: Path
    sandbox_dir: Path
    cfg: DerenderConfig
    expected_tables: dict[str, DataTable]
    expected_attrs: dict[str, VisualAttributes]
    expected_edited: dict[str, ChartImage]
    gold_tables: dict[str, DataTable]
    gold_attrs: dict[str, VisualAttributes]
    gold_images: dict[str, ChartImage]

    def replay_gateway(self) -> Gateway:
        return Gateway(ReplayProvider(self.fixtures_dir))

    def replay_sandbox(self) -> FixtureSandbox:
        return FixtureSandbox(self.sandbox_dir)


def build_golden(root: Path) -> GoldenSetup:
    dataset = root / "dataset"
    fixtures = root / "fixtures"
    sandbox_dir = root / "sandbox-fixtures"
    cfg = DerenderConfig()

    base_table = DataTable.from_rows(["year", "sales"], _TABLE_ROWS)
    filtered = DataTable.from_rows(["year", "sales"], _TABLE_ROWS[1:])
    base_attrs, _ = canonicalize_attributes(json.loads(attrs_json_text(
        "line", {"sales": {"color": "#1F77B4"}}, title="Sales")))
    blue_attrs, _ = canonicalize_attributes(json.loads(attrs_json_text(
        "line", {"sales": {"color": "#0000FF"}}, title="Sales")))

    scripts: dict[str, list[str]] = {
        "chart2table": [], "chart2vision": [], "chart2code": [],
        "numeric_summary": [], "decompose": [],
    }
    validate_q, execute_q = [], []
    expected_tables, expected_attrs, expected_edited = {}, {}, {}
    gold_tables, gold_attrs, gold_images = {}, {}, {}

    for i, case_id in enumerate(CASE_IDS):
        edit_type = CASE_TYPES[case_id]
        img = _case_image(i)
        edited = _edited(img)
        case_dir = dataset / "cases" / case_id
        (case_dir / "gold").mkdir(parents=True, exist_ok=True)
        save_png(img, case_dir / "input.png")
        (case_dir / "request.txt").write_text(f"please perform the {edit_type} edit", "utf-8")
        (case_dir / "type.txt").write_text(edit_type + "\n", "utf-8")

        table_text = staged_table_text(["year", "sales"], _TABLE_ROWS)
        scripts["chart2table"] += [table_text, table_text]  # initial + probe
        scripts["chart2vision"].append(attrs_json_text(
            "line", {"sales": {"color": "#1F77B4"}}, title="Sales"))
        scripts["chart2code"].append(code_response_text(_program0(case_id)))
        scripts["numeric_summary"] += ["rising series", "rising series"]
        scripts["decompose"].append(_steps_json(case_id))

        validate_q.append(ok_validate())        # derender code feedback
        execute_q.append(ok_execute(img))       # derender replot == input -> converges
        if edit_type in ("layout", "format"):
            validate_q.append(ok_validate())    # code-step validation
            execute_q.append(ok_execute(edited))
        execute_q.append(ok_execute(edited))    # edit replot

        final_table = filtered if edit_type == "data" else base_table
        final_attrs = blue_attrs if edit_type == "style" else base_attrs
        expected_tables[case_id] = final_table
        expected_attrs[case_id] = final_attrs
        expected_edited[case_id] = edited

        # gold artifacts: input image, table with one perturbed value, one
        # color leaf pushed far from the prediction
        gold_images[case_id] = img
        save_png(img, case_dir / "gold" / "chart.png")
        gold_table = DataTable.from_rows(
            ["year", "sales"],
            [[r[0], str(float(r[1]) * 1.1)] for r in (_TABLE_ROWS[1:] if edit_type == "data" else _TABLE_ROWS)])
        gold_tables[case_id] = gold_table
        (case_dir / "gold" / "table.csv").write_text(gold_table.to_csv_text(), "utf-8")
        gold_attr_obj = final_attrs.to_json_obj()
        gold_attr_obj["series_styles"]["sales"]["color"] = "#00FF00"
        gold_attrs[case_id] = attrs_from_json_obj(gold_attr_obj)
        (case_dir / "gold" / "attributes.json").write_text(
            json.dumps(gold_attr_obj, indent=2) + "\n", "utf-8")

    # recording pass: scripted stand-ins, responses captured as replay fixtures
    gateway = Gateway(ScriptedProvider(scripts), cache_dir=fixtures)
    sandbox = RecordingSandbox(
        ScriptedSandbox(validate_results=validate_q, execute_results=execute_q),
        sandbox_dir)
    result = eval_run(dataset, cfg, gateway, sandbox, out_dir=root / "record-out",
                      created_at=CREATED_AT)
    assert not result.warnings, f"golden recording must be clean: {result.warnings}"
    assert len(result.scores) == len(CASE_IDS)

    return GoldenSetup(dataset, fixtures, sandbox_dir, cfg, expected_tables,
                       expected_attrs, expected_edited, gold_tables, gold_attrs,
                       gold_images)
