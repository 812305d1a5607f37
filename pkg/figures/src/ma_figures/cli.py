"""Command-line entry point: ma-figures render --csv ... --family ... --out ..."""

from __future__ import annotations

import argparse
import sys

from .render import FAMILIES, PlotSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ma-figures", description="Render ma-mimo result CSVs to PNG figures"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render one figure family from CSV inputs")
    p.add_argument("--csv", nargs="+", required=True, help="input CSV path(s)")
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--out", required=True, help="output PNG path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out = render(PlotSpec(csv_paths=args.csv, family=args.family, out_path=args.out))
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
