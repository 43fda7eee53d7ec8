"""Command-line surface.

Subcommands: derender, edit, replot, eval, session. Providers and the
sandbox are selected with shared flags; exit codes are 0 on success, 2 on
usage errors, 1 on pipeline errors (printed as `ERROR <code>: message`).
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from pathlib import Path

from .bundle import EditRequest, load_bundle, save_bundle
from .derender import DerenderConfig, derender
from .editing import edit, replot
from .errors import ChartsmithError
from .evaluation import eval_run, format_report, save_report
from .gateway import (
    Gateway, LiveProvider, RateLimiter, ReplayProvider, ScriptedProvider, TemplateRegistry,
)
from .images import load_png, save_png
from .sandbox import (
    FixtureSandbox, ProcessSandboxClient, SandboxClient, TcpSandboxClient,
)


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        rows, cols = text.lower().split("x")
        return int(rows), int(cols)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 4x4, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--provider", choices=("live", "replay", "scripted"), default="replay",
                        help="model provider (default: replay)")
    shared.add_argument("--fixtures", metavar="DIR",
                        help="fixture/cache directory for model responses")
    shared.add_argument("--script", metavar="FILE",
                        help="scripted provider responses: JSON {template_id: [text, ...]}")
    shared.add_argument("--max-trials", type=int, default=3)
    shared.add_argument("--ssim-threshold", type=float, default=0.90)
    shared.add_argument("--rms-threshold", type=float, default=0.90)
    shared.add_argument("--grid", type=_parse_grid, default=(4, 4), metavar="RxC")
    shared.add_argument("--out", metavar="DIR", default="out")
    shared.add_argument("--sandbox", metavar="SPEC", default="render-sandbox",
                        help="sandbox: a command line, stub:DIR, or tcp:HOST:PORT")
    shared.add_argument("--rps", type=float, default=1.0, help="live provider rate limit")
    shared.add_argument("--jobs", type=int, default=1, help="parallel eval cases")

    parser = argparse.ArgumentParser(prog="chartsmith",
                                     description="De-render, edit, and score chart images.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("derender", parents=[shared], help="image -> editable bundle")
    p.add_argument("image")

    p = sub.add_parser("edit", parents=[shared], help="apply an edit request to a bundle")
    p.add_argument("bundle_dir")
    p.add_argument("-r", "--request", required=True, help="the edit request text")

    p = sub.add_parser("replot", parents=[shared], help="re-render a bundle's program")
    p.add_argument("bundle_dir")

    p = sub.add_parser("eval", parents=[shared], help="score a dataset of edit cases")
    p.add_argument("dataset_dir")

    p = sub.add_parser("session", parents=[shared], help="interactive multi-turn editing")
    p.add_argument("image")
    return parser


def _build_gateway(args: argparse.Namespace) -> Gateway:
    registry = TemplateRegistry()
    if args.provider == "replay":
        if not args.fixtures:
            raise ChartsmithError("replay provider needs --fixtures DIR")
        return Gateway(ReplayProvider(args.fixtures), registry)
    if args.provider == "scripted":
        if not args.script:
            raise ChartsmithError("scripted provider needs --script FILE")
        scripts = json.loads(Path(args.script).read_text("utf-8"))
        provider = ScriptedProvider({k: list(v) for k, v in scripts.items()})
        return Gateway(provider, registry, cache_dir=args.fixtures)
    return Gateway(LiveProvider(), registry, cache_dir=args.fixtures,
                   rate_limiter=RateLimiter(args.rps))


def _build_sandbox(args: argparse.Namespace) -> SandboxClient:
    spec = args.sandbox
    if spec.startswith("stub:"):
        return FixtureSandbox(spec[len("stub:"):])
    if spec.startswith("tcp:"):
        host, _, port = spec[len("tcp:"):].rpartition(":")
        return TcpSandboxClient(host or "127.0.0.1", int(port))
    return ProcessSandboxClient(shlex.split(spec))


def _config(args: argparse.Namespace) -> DerenderConfig:
    return DerenderConfig(max_trials=args.max_trials, ssim_threshold=args.ssim_threshold,
                          rms_threshold=args.rms_threshold, roi_grid=args.grid)


def _save_edit_result(result, out_dir: Path) -> Path:
    save_bundle(result.bundle, out_dir)
    save_png(result.image, out_dir / "edited.png")
    fidelity = [r for r in result.bundle.history if r.kind == "fidelity"]
    if fidelity:
        (out_dir / "fidelity.json").write_text(
            json.dumps(fidelity[-1].payload, indent=2) + "\n", "utf-8")
    return out_dir


def cli_dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
        gateway = _build_gateway(args)
        sandbox = _build_sandbox(args)
        out = Path(args.out)

        if args.command == "derender":
            image = load_png(args.image)
            bundle = derender(image, cfg, gateway, sandbox)
            bundle_dir = out / (Path(args.image).stem + "-bundle")
            save_bundle(bundle, bundle_dir)
            print(f"{bundle_dir} status={bundle.status}")
            return 0

        if args.command == "edit":
            bundle = load_bundle(args.bundle_dir)
            result = edit(bundle, EditRequest(args.request), cfg, gateway, sandbox)
            target = out / (Path(args.bundle_dir).name + "-edited")
            _save_edit_result(result, target)
            print(f"{target} status={result.status} rounds={result.rounds_used}")
            return 0

        if args.command == "replot":
            bundle = load_bundle(args.bundle_dir)
            image = replot(bundle, sandbox)
            path = Path(args.bundle_dir) / "replot.png"
            save_png(image, path)
            print(str(path))
            return 0

        if args.command == "eval":
            result = eval_run(args.dataset_dir, cfg, gateway, sandbox,
                              out_dir=out / "cases", jobs=args.jobs)
            save_report(result, out)
            if result.rows:
                print(format_report(result.rows), end="")
            for warning in result.warnings:
                print(f"warning: {warning}", file=sys.stderr)
            print(f"report written to {out}")
            return 0

        if args.command == "session":
            return _run_session(args, cfg, gateway, sandbox, out)

        parser.error(f"unknown command {args.command!r}")
        return 2
    except ChartsmithError as e:
        message = " ".join(str(e).split())  # keep the error line machine-parsable
        print(f"ERROR {type(e).__name__}: {message}", file=sys.stderr)
        return 1


def _run_session(args, cfg, gateway, sandbox, out: Path) -> int:
    image = load_png(args.image)
    bundle = derender(image, cfg, gateway, sandbox)
    bundle_dir = out / (Path(args.image).stem + "-bundle")
    save_bundle(bundle, bundle_dir)
    print(f"bundle ready: {bundle_dir} status={bundle.status}")
    turn = 0
    while True:
        print("request> ", end="", flush=True)
        line = sys.stdin.readline()
        if not line:
            break
        text = line.strip()
        if not text or text in ("quit", "exit"):
            break
        turn += 1
        try:
            result = edit(bundle, EditRequest(text, id=f"turn-{turn}"), cfg, gateway, sandbox)
        except ChartsmithError as e:
            print(f"ERROR {type(e).__name__}: {e}", file=sys.stderr)
            continue
        target = _save_edit_result(result, out / f"session-{turn:02d}")
        bundle = result.bundle
        print(f"{target / 'edited.png'} status={result.status}")
    return 0


def main() -> None:
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
