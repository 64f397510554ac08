"""Command-line entry points: generate fixtures, verify committed ones."""

import argparse
import sys

from . import fixtures


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="fixtures-oracle", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    gen = sub.add_parser("generate", help="write the full fixture set")
    gen.add_argument("--out", required=True, help="output directory")
    chk = sub.add_parser("verify", help="check committed fixtures against their manifest")
    chk.add_argument("--fixtures", required=True, help="fixture directory")
    args = parser.parse_args(argv)

    if args.command == "generate":
        files = fixtures.generate_all(args.out)
        print(f"wrote {len(files)} files to {args.out}")
        return 0
    problems = fixtures.verify(args.fixtures)
    for p in problems:
        print(f"error: {p}", file=sys.stderr)
    return 1 if problems else 0


if __name__ == "__main__":
    sys.exit(main())
