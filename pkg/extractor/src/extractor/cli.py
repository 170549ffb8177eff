"""CLI entry point: a standalone mirror of the harness's `embed` step.

vpbench-extract --run RUN --backend NAME reads RUN/plan.json, embeds
the warped PNG tree with the chosen backend, and writes the EMB1 files
the harness's `eval` step expects. Exit codes: 0 success, 1 usage
error, 2 data error (bad plan, unreachable hub, mismatched shapes),
3 internal error.
"""

import argparse
import json
import sys
import traceback

from . import backends
from .errors import (
    ChecksumMismatch,
    DimMismatch,
    HubUnavailable,
    InvalidPlan,
    RefusedOverwrite,
    UnknownBackend,
)
from .runner import extract_run

__all__ = ["main", "build_parser"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting the process."""

    def error(self, message):
        raise _UsageError(message)


def build_parser():
    p = _Parser(prog="vpbench-extract", description=__doc__.splitlines()[0])
    p.add_argument("--run", help="run directory holding plan.json and warped images")
    p.add_argument("--backend", help="backend name, see --list-backends")
    p.add_argument("--batch-size", type=int, default=64, help="images per forward pass")
    p.add_argument("--force", action="store_true", help="overwrite existing embedding files")
    p.add_argument("--json-errors", action="store_true", help="emit errors as JSON on stderr")
    p.add_argument("--list-backends", action="store_true", help="print the registry and exit")
    return p


def _list_backends():
    for name in backends.names():
        s = backends.SPECS[name]
        side = "any" if s.input_side is None else f"{s.input_side}px"
        print(f"{name:<20} {s.display_name:<22} {s.model_type:<12} dim={s.dim:<5} "
              f"inputs={side}  [{s.layer}]")
    return 0


def _emit_error(kind, exc, json_mode):
    if json_mode:
        doc = {"kind": kind, "error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    else:
        print(f"vpbench-extract: {kind} error: {type(exc).__name__}: {exc}", file=sys.stderr)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    json_errors = "--json-errors" in argv
    try:
        args = build_parser().parse_args(argv)
        if args.list_backends:
            return _list_backends()
        if not args.run or not args.backend:
            raise _UsageError("--run and --backend are required")
        if args.batch_size < 1:
            raise _UsageError("--batch-size must be >= 1")
        written, n_images = extract_run(
            args.run, args.backend, batch_size=args.batch_size, force=args.force
        )
        print(f"embedded {n_images} images into {len(written)} sets with "
              f"backend {args.backend}")
        return 0
    except (_UsageError, UnknownBackend, RefusedOverwrite) as e:
        _emit_error("usage", e, json_errors)
        return 1
    except (InvalidPlan, DimMismatch, HubUnavailable, ChecksumMismatch, OSError) as e:
        _emit_error("data", e, json_errors)
        return 2
    except Exception as e:  # noqa: BLE001 - last-resort mapping to exit 3
        _emit_error("internal", e, json_errors)
        if not json_errors:
            traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
