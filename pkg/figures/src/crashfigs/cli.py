"""crashfigs command line: render <figure-id> from an experiment directory."""

from __future__ import annotations

import argparse
import sys

from .io import FigureInputError
from .recipes import RECIPES, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="crashfigs",
        description="render figures from flashsim experiment outputs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_render = sub.add_parser("render", help="render one figure")
    p_render.add_argument("figure", help=", ".join(sorted(RECIPES)))
    p_render.add_argument("input_dir", help="experiment output directory")
    p_render.add_argument("out", help="output image path (.png or .svg)")

    p_list = sub.add_parser("list", help="list available figures")

    args = parser.parse_args(argv)
    if args.command == "list":
        for figure_id, recipe in sorted(RECIPES.items()):
            print(f"{figure_id}: {recipe.description}")
        return 0
    try:
        path = render(args.figure, args.input_dir, args.out)
    except FigureInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
