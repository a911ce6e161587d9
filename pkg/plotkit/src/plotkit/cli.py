"""Command-line interface: plotkit <figure-kind> --in <csv> --out <img>."""

from __future__ import annotations

import argparse
import sys

from .render import FIGURE_KINDS, FigureSpec, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plotkit", description="Render benchmark CSVs into figures"
    )
    parser.add_argument("kind", choices=FIGURE_KINDS, help="figure family to render")
    parser.add_argument("--in", dest="csv_path", required=True, help="raw benchmark CSV")
    parser.add_argument("--out", dest="out_path", required=True, help="output image (.png/.svg)")
    parser.add_argument("--log-y", action="store_true", help="log scale on error axes")
    args = parser.parse_args(argv)
    try:
        out = render(
            FigureSpec(
                csv_path=args.csv_path,
                kind=args.kind,
                out_path=args.out_path,
                log_y=args.log_y,
            )
        )
    except Exception as exc:  # argparse-style one-line failure
        print(f"plotkit: error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
