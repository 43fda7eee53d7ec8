"""Dataset evaluation and report formatting.

A dataset directory holds `cases/<id>/{input.png, request.txt, type.txt,
gold/{chart.png, table.csv, attributes.json}}`. Each case runs the full
derender + edit pipeline and is scored with image SSIM against the gold
image, RMS f1 against the gold table, and VAES against the gold attributes.
Rows aggregate per edit type plus an Overall row averaged over cases (not
over categories). The report is written as a fixed-width text table, a JSON
document, and a grouped-bar figure.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from .bundle import EditRequest, attrs_from_json_obj, save_bundle
from .derender import DerenderConfig, derender
from .editing import edit
from .errors import ChartsmithError, EmptyDataset
from .gateway import Gateway
from .image_metrics import ssim
from .images import load_png, resize, save_png
from .sandbox import DEFAULT_SEED, FigureConfig, SandboxClient
from .table import DataTable
from .table_metrics import rms, vaes

EDIT_TYPES = ("style", "layout", "format", "data")
_TYPE_ALIASES = {"data-centric": "data", "data_centric": "data", "datacentric": "data"}
_ROW_LABELS = {"style": "Style", "layout": "Layout", "format": "Format", "data": "Data-Centric"}
OVERALL_LABEL = "Overall"


@dataclass(frozen=True)
class EvalCase:
    id: str
    edit_type: str  # style | layout | format | data
    input_image: Path
    request: str
    gold_image: Path
    gold_table: Path
    gold_attrs: Path


@dataclass(frozen=True)
class CaseScore:
    case_id: str
    edit_type: str
    ssim: float
    vaes: float
    rms: float


@dataclass(frozen=True)
class MetricsRow:
    label: str
    ssim: float
    vaes: float
    rms: float
    n_cases: int = 0


@dataclass
class EvalRunResult:
    rows: list[MetricsRow]
    scores: list[CaseScore]
    warnings: list[str] = field(default_factory=list)


def discover_cases(dataset_dir: str | Path) -> tuple[list[EvalCase], list[str]]:
    """Enumerate well-formed cases; malformed ones become warnings."""
    root = Path(dataset_dir) / "cases"
    if not root.is_dir():
        raise EmptyDataset(f"{dataset_dir} has no cases/ directory")
    case_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not case_dirs:
        raise EmptyDataset(f"{root} contains no cases")
    cases: list[EvalCase] = []
    warnings: list[str] = []
    for d in case_dirs:
        required = {
            "input": d / "input.png",
            "request": d / "request.txt",
            "type": d / "type.txt",
            "gold image": d / "gold" / "chart.png",
            "gold table": d / "gold" / "table.csv",
            "gold attrs": d / "gold" / "attributes.json",
        }
        missing = [name for name, p in required.items() if not p.is_file()]
        if missing:
            warnings.append(f"case {d.name}: skipped, missing {', '.join(missing)}")
            continue
        raw_type = required["type"].read_text("utf-8").strip().lower()
        edit_type = _TYPE_ALIASES.get(raw_type, raw_type)
        if edit_type not in EDIT_TYPES:
            warnings.append(f"case {d.name}: skipped, unknown edit type {raw_type!r}")
            continue
        request = required["request"].read_text("utf-8").strip()
        if not request:
            warnings.append(f"case {d.name}: skipped, empty request")
            continue
        cases.append(EvalCase(d.name, edit_type, required["input"], request,
                              required["gold image"], required["gold table"],
                              required["gold attrs"]))
    return cases, warnings


def run_case(case: EvalCase, cfg: DerenderConfig, gateway: Gateway,
             sandbox: SandboxClient, *, out_dir: Path | None = None,
             figure: FigureConfig = FigureConfig(), seed: int = DEFAULT_SEED,
             created_at: str | None = None) -> CaseScore:
    image = load_png(case.input_image)
    bundle = derender(image, cfg, gateway, sandbox, figure=figure, seed=seed)
    result = edit(bundle, EditRequest(case.request, id=case.id), cfg, gateway,
                  sandbox, figure=figure, seed=seed)
    gold_image = load_png(case.gold_image)
    gold_table = DataTable.from_csv_text(case.gold_table.read_text("utf-8"))
    gold_attrs = attrs_from_json_obj(json.loads(case.gold_attrs.read_text("utf-8")))
    edited = resize(result.image, gold_image.width, gold_image.height)
    score = CaseScore(
        case_id=case.id,
        edit_type=case.edit_type,
        ssim=ssim(edited, gold_image),
        vaes=vaes(result.bundle.attrs, gold_attrs),
        rms=rms(result.bundle.table, gold_table).f1,
    )
    if out_dir is not None:
        case_out = Path(out_dir) / case.id
        save_bundle(result.bundle, case_out, created_at=created_at)
        save_png(result.image, case_out / "edited.png")
        fidelity_reports = [r for r in result.bundle.history if r.kind == "fidelity"]
        if fidelity_reports:
            (case_out / "fidelity.json").write_text(
                json.dumps(fidelity_reports[-1].payload, indent=2) + "\n", "utf-8")
    return score


def aggregate_rows(scores: list[CaseScore]) -> list[MetricsRow]:
    """Category rows in fixed order plus Overall (mean over cases)."""
    rows: list[MetricsRow] = []

    def mean_row(label: str, subset: list[CaseScore]) -> MetricsRow:
        n = len(subset)
        return MetricsRow(
            label,
            sum(s.ssim for s in subset) / n,
            sum(s.vaes for s in subset) / n,
            sum(s.rms for s in subset) / n,
            n,
        )

    for edit_type in EDIT_TYPES:
        subset = [s for s in scores if s.edit_type == edit_type]
        if subset:
            rows.append(mean_row(_ROW_LABELS[edit_type], subset))
    if scores:
        rows.append(mean_row(OVERALL_LABEL, scores))
    return rows


def eval_run(dataset_dir: str | Path, cfg: DerenderConfig, gateway: Gateway,
             sandbox: SandboxClient, *, out_dir: str | Path | None = None,
             jobs: int = 1, figure: FigureConfig = FigureConfig(),
             seed: int = DEFAULT_SEED, created_at: str | None = None) -> EvalRunResult:
    """Evaluate every case; per-case failures are recorded and the run continues."""
    cases, warnings = discover_cases(dataset_dir)
    out = Path(out_dir) if out_dir is not None else None
    scores: list[CaseScore] = []

    def one(case: EvalCase) -> CaseScore | str:
        try:
            return run_case(case, cfg, gateway, sandbox, out_dir=out,
                            figure=figure, seed=seed, created_at=created_at)
        except ChartsmithError as e:
            return f"case {case.id}: failed: {type(e).__name__}: {e}"

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one, cases))
    else:
        outcomes = [one(c) for c in cases]
    for outcome in outcomes:
        if isinstance(outcome, CaseScore):
            scores.append(outcome)
        else:
            warnings.append(outcome)
    return EvalRunResult(aggregate_rows(scores), scores, warnings)


# --- report output -----------------------------------------------------------------

def _pct(value: float) -> str:
    """x100 with one decimal, rounding half-up."""
    return str((Decimal(str(value)) * 100).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def format_report(rows: list[MetricsRow]) -> str:
    """Fixed-width text table: label then SSIM, VAES, RMS as x100 values."""
    if not rows:
        raise ValueError("no rows to format")
    width = max(len(r.label) for r in rows)
    lines = [f"{r.label:<{width}} {_pct(r.ssim)} {_pct(r.vaes)} {_pct(r.rms)}" for r in rows]
    return "\n".join(lines) + "\n"


def report_json_obj(result: EvalRunResult) -> dict:
    return {
        "rows": [
            {"label": r.label, "ssim": r.ssim, "vaes": r.vaes, "rms": r.rms,
             "n_cases": r.n_cases,
             "formatted": {"ssim": _pct(r.ssim), "vaes": _pct(r.vaes), "rms": _pct(r.rms)}}
            for r in result.rows
        ],
        "cases": [
            {"id": s.case_id, "edit_type": s.edit_type,
             "ssim": s.ssim, "vaes": s.vaes, "rms": s.rms}
            for s in result.scores
        ],
        "warnings": list(result.warnings),
    }


def render_report_figure(rows: list[MetricsRow], path: str | Path) -> None:
    """Grouped-bar summary of the metric table, written as a PNG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = [r.label for r in rows]
    metrics = {"SSIM": [r.ssim * 100 for r in rows],
               "VAES": [r.vaes * 100 for r in rows],
               "RMS": [r.rms * 100 for r in rows]}
    x = range(len(labels))
    bar_w = 0.25
    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(labels), 3.6), dpi=100)
    for k, (name, values) in enumerate(metrics.items()):
        ax.bar([i + (k - 1) * bar_w for i in x], values, bar_w, label=name)
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylim(0, 105)
    ax.set_ylabel("score x100")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)


def save_report(result: EvalRunResult, out_dir: str | Path) -> tuple[Path, Path, Path]:
    """Write report.txt, report.json, and report.png under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text_path = out / "report.txt"
    json_path = out / "report.json"
    figure_path = out / "report.png"
    text_path.write_text(format_report(result.rows) if result.rows else "no cases scored\n", "utf-8")
    json_path.write_text(json.dumps(report_json_obj(result), indent=2) + "\n", "utf-8")
    if result.rows:
        render_report_figure(result.rows, figure_path)
    return text_path, json_path, figure_path
