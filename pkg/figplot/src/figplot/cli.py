"""figplot <manifest.json> --fig <fig1|fig2|fig3|fig4> --out <path.svg>"""

from __future__ import annotations

import argparse
import sys

from .render import FIGURE_KINDS, FigureJob, SchemaError, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="figplot", description="Render cdfloquet experiment CSVs as figures."
    )
    parser.add_argument("manifest", help="path to manifest.json")
    parser.add_argument("--fig", required=True, choices=FIGURE_KINDS)
    parser.add_argument("--out", required=True, help="output image path (SVG)")
    args = parser.parse_args(argv)
    try:
        print(render(FigureJob(args.manifest, args.fig, args.out)))
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
