"""End-to-end checks against the real render-sandbox, when installed.

The primary suite does not require the sandbox package; everything here
skips cleanly in its absence.
"""

import base64
import shutil

import pytest

from chartsmith.attributes import canonicalize_attributes
from chartsmith.bundle import ChartBundle, EditRequest, RenderProgram
from chartsmith.derender import DerenderConfig, derender
from chartsmith.editing import edit, replot
from chartsmith.gateway import Gateway, ScriptedProvider
from chartsmith.images import from_png_bytes
from chartsmith.sandbox import FigureConfig, ProcessSandboxClient, compose_render_source
from chartsmith.table import DataTable

from conftest import attrs_json_text, code_response_text, staged_table_text

pytestmark = pytest.mark.skipif(
    shutil.which("render-sandbox") is None,
    reason="render-sandbox (secondary component) not installed",
)

TABLE_ROWS = [["1999", "10"], ["2001", "20"], ["2005", "30"]]
PROGRAM = (
    "import matplotlib.pyplot as plt\n"
    "cols = data['columns']\n"
    "series = style['series_styles']['sales']\n"
    "plt.plot(cols['year'], cols['sales'], color=series['color'])\n"
    "plt.title(style['title'])"
)


@pytest.fixture(scope="module")
def client():
    c = ProcessSandboxClient(["render-sandbox"])
    yield c
    c.close()


def make_parts():
    table = DataTable.from_rows(["year", "sales"], TABLE_ROWS)
    attrs, _ = canonicalize_attributes(
        {"chart_type": "line", "series_styles": {"sales": {"color": "#D62728"}},
         "title": "Sales"})
    return table, attrs, RenderProgram(PROGRAM, "line")


def render_input(client, figure=FigureConfig(400, 300, 50)):
    table, attrs, program = make_parts()
    source, _ = compose_render_source(table, attrs, program)
    result = client.execute(source, figure=figure)
    assert result.ok, (result.diagnostics, result.log)
    return from_png_bytes(base64.b64decode(result.image_png_b64))


def test_validate_and_execute_round_trip(client):
    assert client.validate("import matplotlib.pyplot as plt\nplt.plot([1])").ok
    bad = client.validate("import socket")
    assert not bad.ok and bad.diagnostics[0].kind == "policy"


def test_replot_produces_configured_dims(client):
    table, attrs, program = make_parts()
    bundle = ChartBundle(image=render_input(client), table=table, attrs=attrs,
                         program=program, status="exhausted")
    figure = FigureConfig(400, 300, 50)
    image = replot(bundle, client, figure=figure)
    assert (image.width, image.height) == (400, 300)
    # same bundle, same sandbox environment: byte-identical render
    again = replot(bundle, client, figure=figure)
    assert image == again


def test_full_derender_and_edit_through_real_sandbox(client):
    figure = FigureConfig(400, 300, 50)
    original = render_input(client, figure)
    table_text = staged_table_text(["year", "sales"], TABLE_ROWS)
    provider = ScriptedProvider({
        "chart2table": [table_text, table_text],
        "chart2vision": [attrs_json_text("line", {"sales": {"color": "#D62728"}},
                                         title="Sales")],
        "chart2code": [code_response_text(PROGRAM)],
        "numeric_summary": ["rising", "rising"],
        "decompose": ['[{"target": "style", "instruction": "blue line", '
                      '"declared_regions": ["plot_area"], '
                      '"patches": [["series_styles.sales.color", "#0000FF"]]}]'],
    })
    gateway = Gateway(provider)
    bundle = derender(original, DerenderConfig(), gateway, client, figure=figure)
    assert bundle.status == "converged"  # real render reproduces the input exactly
    assert bundle.replot == original

    result = edit(bundle, EditRequest("make the line blue"), DerenderConfig(),
                  gateway, client, figure=figure)
    assert result.status == "ok"
    assert result.bundle.attrs.style("sales").color == "#0000FF"
    assert result.image != original  # the line color actually changed
