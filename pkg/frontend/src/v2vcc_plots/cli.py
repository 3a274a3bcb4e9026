"""Command-line figure generation: ``plot --kind <k> --in <csv...> --out <img>``.

Exit codes: 0 success, 2 schema violation or empty/invalid input.
"""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, FigureSpec, SchemaError, EmptyInput, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="v2vcc-plot",
        description="Render figures from simulator CSV outputs")
    sub = parser.add_subparsers(dest="command", required=True)
    plot = sub.add_parser("plot", help="render one figure")
    plot.add_argument("--kind", required=True, choices=KINDS)
    plot.add_argument("--in", dest="inputs", required=True, nargs="+",
                      metavar="CSV", help="input sessions/summary CSV files")
    plot.add_argument("--out", required=True, help="output image path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = FigureSpec(kind=args.kind, inputs=tuple(args.inputs),
                          out_path=args.out)
        print(render(spec))
        return 0
    except (SchemaError, EmptyInput, ValueError) as exc:
        print(f"plot error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
