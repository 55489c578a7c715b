"""Standalone figure renderer: render --kind trace --in <run dir> --out fig.png"""

from __future__ import annotations

import argparse
import sys

from .artifacts import ArtifactError
from .render import KINDS, FigureRequest, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="render", description="Render figures from msbtm run artifacts")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--in", dest="input_dir", required=True,
                        help="completed run directory")
    parser.add_argument("--out", dest="output_path", required=True,
                        help="image file to write (.png, .pdf, .svg)")
    parser.add_argument("--trail-length", type=int, default=8,
                        help="snapshots per fading trajectory trail")
    parser.add_argument("--no-trap-marker", action="store_true")
    parser.add_argument("--steps", default=None,
                        help="comma-separated snapshot steps for scatter grids")
    args = parser.parse_args(argv)
    steps = None
    if args.steps:
        steps = tuple(int(s) for s in args.steps.split(","))
    try:
        request = FigureRequest(
            kind=args.kind, input_dir=args.input_dir,
            output_path=args.output_path, trail_length=args.trail_length,
            trap_marker=not args.no_trap_marker, scatter_steps=steps)
        out = render(request)
    except (ArtifactError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
