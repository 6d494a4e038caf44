"""Command line for the checkpoint exporter.

Exit codes: 0 success, 1 data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys

from .exporter import VerificationError, export, load_role_map, verify
from .formats import FormatError


def cmd_export(args) -> int:
    role_map = load_role_map(args.role_map) if args.role_map else None
    manifest = export(
        args.checkpoint,
        args.out_path,
        include_globs=args.include,
        exclude_globs=args.exclude,
        role_map=role_map,
    )
    for entry in manifest.tensors:
        print(f"{entry['name']}  shape={entry['shape']}  "
              f"dtype={entry['source_dtype']}  role={entry['role']}")
    print(f"exported {len(manifest.tensors)} tensors to {args.out_path}")
    return 0


def cmd_verify(args) -> int:
    verify(args.rtz, args.checkpoint)
    print(f"{args.rtz} matches the checkpoint exactly")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rtz-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    e = sub.add_parser("export", help="convert safetensors shards to .rtz")
    e.add_argument("--checkpoint", action="append", required=True,
                   help="safetensors file; repeat for shards")
    e.add_argument("--out", dest="out_path", required=True)
    e.add_argument("--include", action="append", default=[],
                   help="glob of tensor names to keep; repeatable")
    e.add_argument("--exclude", action="append", default=[],
                   help="glob of tensor names to drop; repeatable")
    e.add_argument("--role-map", help="JSON object of glob -> role overrides")
    e.set_defaults(fn=cmd_export)

    v = sub.add_parser("verify", help="compare an exported .rtz to its source")
    v.add_argument("--rtz", required=True)
    v.add_argument("--checkpoint", action="append", required=True)
    v.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (FormatError, VerificationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
