"""Entry point: `render-sandbox [--listen host:port] [--allowlist path]`."""

from __future__ import annotations

import argparse

from .policy import load_allowlist
from .server import serve_stdio, serve_tcp


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(
        prog="render-sandbox",
        description="Validate and execute chart render programs over line-delimited JSON.")
    parser.add_argument("--listen", metavar="HOST:PORT",
                        help="serve over TCP instead of stdio")
    parser.add_argument("--allowlist", metavar="PATH",
                        help="file of importable module names, one per line")
    args = parser.parse_args(argv)
    allowlist = load_allowlist(args.allowlist)
    if args.listen:
        host, _, port = args.listen.rpartition(":")
        serve_tcp(host or "127.0.0.1", int(port), allowlist)
    else:
        serve_stdio(allowlist)


if __name__ == "__main__":
    main()
