"""Command-line front door: plan, warp, embed, eval, report, and tools.

A run directory accumulates the pipeline stages: config.json and
plan.json from `plan`, a PNG tree under warped/ from `warp`, EMB1 files
under embeddings/ from `embed`, and CSV/JSON/SVG outputs under results/
from `eval` and `report`. Stages refuse to overwrite prior outputs
unless --force is passed, and config.json must exist before any later
stage runs.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

import argparse
import csv
import dataclasses
import json
import os
import sys
import traceback

from . import report as report_mod
from .embedio import load_manifest, read_embedding_set, validate_manifest
from .errors import DataError, InvalidManifest, IoError, MissingEmbedding, UsageError
from .geometry import ConvexPolygon, Point2, max_inscribed_rect
from .protocols import (
    Protocol,
    config_from_dict,
    config_to_dict,
    embed_plan,
    parse_test_embedding_key,
    plan_from_dict,
    plan_homography_jobs,
    plan_to_dict,
    run_linear_eval,
    run_warp_jobs,
    write_results_bundle,
    write_trial_results_csv,
)
from .synth import generate_dataset

__all__ = ["main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    """argparse that raises UsageError instead of exiting the process."""

    def error(self, message):
        raise UsageError(message)


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise IoError(f"{path}: {e}") from e
    except json.JSONDecodeError as e:
        raise InvalidManifest(f"{path}: invalid JSON: {e}") from e


def _write_json(doc, path):
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    except OSError as e:
        raise IoError(f"{path}: {e}") from e


def _refuse_overwrite(path, force):
    if os.path.exists(path) and not force:
        raise UsageError(f"{path} exists; pass --force to overwrite")


def _require_file(path, hint):
    if not os.path.isfile(path):
        raise IoError(f"{path}: not found ({hint})")
    return path


def _thread_count(args):
    if args.threads is not None:
        value, origin = args.threads, "--threads"
    else:
        env = os.environ.get("VPB_THREADS")
        if not env:
            return 1
        try:
            value = int(env)
        except ValueError:
            raise UsageError(f"VPB_THREADS={env!r} is not an integer") from None
        origin = "VPB_THREADS"
    if value < 1:
        raise UsageError(f"{origin} must be >= 1, got {value}")
    return value


def _cmd_plan(args):
    manifest = load_manifest(args.manifest)
    config = config_from_dict(_read_json(args.config))
    if config.protocol is not Protocol.HOMOGRAPHY_LINEAR_EVAL:
        raise UsageError(
            f"plan builds warp jobs for the {Protocol.HOMOGRAPHY_LINEAR_EVAL.value} protocol, "
            f"config says {config.protocol.value}"
        )
    if args.seed is not None:
        config = dataclasses.replace(config, master_seed=args.seed)
    plan = plan_homography_jobs(manifest, config)
    os.makedirs(args.out, exist_ok=True)
    config_path = os.path.join(args.out, "config.json")
    plan_path = os.path.join(args.out, "plan.json")
    _refuse_overwrite(config_path, args.force)
    _refuse_overwrite(plan_path, args.force)
    _write_json(config_to_dict(config), config_path)
    _write_json(plan_to_dict(plan), plan_path)
    n_train = sum(1 for j in plan.jobs if j.split == "train")
    print(f"planned {len(plan.jobs)} jobs ({n_train} train, {len(plan.jobs) - n_train} test) -> {plan_path}")
    return 0


def _load_run(run_dir):
    _require_file(os.path.join(run_dir, "config.json"), "run `plan` first")
    plan_path = _require_file(os.path.join(run_dir, "plan.json"), "run `plan` first")
    config = config_from_dict(_read_json(os.path.join(run_dir, "config.json")))
    plan = plan_from_dict(_read_json(plan_path))
    return config, plan


def _cmd_warp(args):
    _, plan = _load_run(args.run)
    _refuse_overwrite(os.path.join(args.run, "warped"), args.force)
    n = run_warp_jobs(plan, args.data, args.run, threads=_thread_count(args))
    print(f"warped {n} images -> {os.path.join(args.run, 'warped')}")
    return 0


def _cmd_embed(args):
    if args.backend != "pixel":
        raise UsageError(f"unknown backend {args.backend!r}; this harness ships `pixel` only")
    _, plan = _load_run(args.run)
    _refuse_overwrite(os.path.join(args.run, "embeddings"), args.force)
    written = embed_plan(plan, args.run)
    print(f"embedded {len(plan.jobs)} images into {len(written)} sets -> {os.path.join(args.run, 'embeddings')}")
    return 0


def _cmd_eval(args):
    config, plan = _load_run(args.run)
    results_dir = os.path.join(args.run, "results")
    csv_path = os.path.join(results_dir, "trials.csv")
    _refuse_overwrite(csv_path, args.force)
    train_path = os.path.join(args.run, plan.train_embedding)
    if not os.path.isfile(train_path):
        raise MissingEmbedding(f"train: {train_path} (run `embed` first)")
    train = read_embedding_set(train_path)
    tests = {}
    for key, rel in plan.test_embeddings.items():
        path = os.path.join(args.run, rel)
        if not os.path.isfile(path):
            raise MissingEmbedding(f"{key}: {path} (run `embed` first)")
        tests[parse_test_embedding_key(key)] = read_embedding_set(path)
    results = run_linear_eval(train, tests, config)
    os.makedirs(results_dir, exist_ok=True)
    write_trial_results_csv(
        results, csv_path, config.protocol, plan.dataset, train.meta.model_name, train.meta.model_type
    )
    write_results_bundle(
        results,
        config,
        os.path.join(results_dir, "results.json"),
        plan.dataset,
        train.meta.model_name,
        train.meta.model_type,
    )
    for alpha in config.alphas:
        accs = [r.accuracy for r in results if r.condition == float(alpha)]
        print(f"alpha={alpha}: mean accuracy {sum(accs) / len(accs):.4f} over {len(accs)} trials")
    print(f"wrote {csv_path}")
    return 0


def _cmd_report(args):
    trials_path = _require_file(os.path.join(args.run, "results", "trials.csv"), "run `eval` first")
    try:
        with open(trials_path, newline="", encoding="utf-8") as f:
            records = [
                {
                    "dataset": row["dataset"],
                    "model": row["model"],
                    "model_type": row["model_type"],
                    "condition": float(row["condition"]),
                    "accuracy": float(row["accuracy"]),
                }
                for row in csv.DictReader(f)
            ]
    except OSError as e:
        raise IoError(f"{trials_path}: {e}") from e
    except (KeyError, ValueError) as e:
        raise InvalidManifest(f"{trials_path}: bad results row: {e}") from e
    table = report_mod.aggregate(records)
    out_dir = args.out or os.path.join(args.run, "results")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for fmt in ("csv", "svg", "json"):
        path = os.path.join(out_dir, f"table.{fmt}")
        _refuse_overwrite(path, args.force)
        report_mod.emit(table, fmt, path)
        written.append(path)
    conditions = table.conditions()
    if 0.0 in conditions and len(conditions) > 1:
        path = os.path.join(out_dir, "relative_decrease.csv")
        _refuse_overwrite(path, args.force)
        report_mod.write_decreases_csv(report_mod.group_relative_decrease(table), path)
        written.append(path)
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_inscribe(args):
    doc = _read_json(args.polygon)
    try:
        verts = [Point2(float(x), float(y)) for x, y in doc["vertices"]]
        poly = ConvexPolygon(verts)
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidManifest(f'{args.polygon}: expected convex {{"vertices": [[x, y], ...]}}: {e}') from e
    rect = max_inscribed_rect(poly)
    print(
        json.dumps(
            {"x0": rect.x0, "y0": rect.y0, "x1": rect.x1, "y1": rect.y1, "area": rect.area},
            sort_keys=True,
        )
    )
    return 0


def _cmd_validate(args):
    if (args.manifest is None) == (args.emb is None):
        raise UsageError("pass exactly one of --manifest or --emb")
    if args.manifest is not None:
        manifest = load_manifest(args.manifest)
        root = args.data or os.path.dirname(os.path.abspath(args.manifest))
        violations = validate_manifest(manifest, root)
        for v in violations:
            print(str(v), file=sys.stderr)
        if violations:
            raise InvalidManifest(f"{args.manifest}: {len(violations)} violations")
        print(f"{args.manifest}: ok ({len(manifest.images)} images, {len(manifest.class_names)} classes)")
    else:
        es = read_embedding_set(args.emb)
        print(
            f"{args.emb}: ok ({es.count} x {es.dim}, model {es.meta.model_name!r}, "
            f"dataset {es.meta.dataset!r})"
        )
    return 0


def _cmd_synth(args):
    manifest_path = os.path.join(args.out, "manifest.json")
    _refuse_overwrite(manifest_path, args.force)
    manifest = generate_dataset(args.out, per_class=args.per_class, size=args.size, seed=args.seed)
    print(f"wrote {len(manifest.images)} images and {manifest_path}")
    return 0


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--json-errors", action="store_true", help="emit errors as JSON on stderr")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")

    parser = _Parser(prog="vpbench", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("plan", parents=[common], help="build plan.json from a manifest and config")
    p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    p.add_argument("--config", required=True, help="protocol config JSON")
    p.add_argument("--out", required=True, help="run directory to create")
    p.add_argument("--seed", type=int, default=None, help="override the config's master seed")

    p = sub.add_parser("warp", parents=[common], help="execute the plan's warp jobs")
    p.add_argument("--run", required=True, help="run directory containing plan.json")
    p.add_argument("--data", required=True, help="dataset root the manifest paths are relative to")
    p.add_argument("--threads", type=int, default=None, help="worker threads (or VPB_THREADS)")

    p = sub.add_parser("embed", parents=[common], help="embed warped images into EMB1 sets")
    p.add_argument("--run", required=True)
    p.add_argument("--backend", default="pixel", help="embedding backend (built in: pixel)")
    p.add_argument("--threads", type=int, default=None, help="accepted for interface parity")

    p = sub.add_parser("eval", parents=[common], help="train probes and score warped test sets")
    p.add_argument("--run", required=True)

    p = sub.add_parser("report", parents=[common], help="aggregate trial results into tables")
    p.add_argument("--run", required=True)
    p.add_argument("--out", default=None, help="output directory (default: <run>/results)")

    p = sub.add_parser("inscribe", parents=[common], help="maximum inscribed rectangle of a polygon")
    p.add_argument("--polygon", required=True, help='JSON file {"vertices": [[x, y], ...]}')

    p = sub.add_parser("validate", parents=[common], help="check a manifest or an EMB1 file")
    p.add_argument("--manifest", default=None)
    p.add_argument("--data", default=None, help="dataset root (default: manifest directory)")
    p.add_argument("--emb", default=None, help="EMB1 file to check")

    p = sub.add_parser("synth", parents=[common], help="generate the bundled stripe dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, default=20, dest="per_class")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=7)

    return parser


_HANDLERS = {
    "plan": _cmd_plan,
    "warp": _cmd_warp,
    "embed": _cmd_embed,
    "eval": _cmd_eval,
    "report": _cmd_report,
    "inscribe": _cmd_inscribe,
    "validate": _cmd_validate,
    "synth": _cmd_synth,
}


def _emit_error(kind, exc, json_mode):
    if json_mode:
        doc = {"kind": kind, "error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    else:
        print(f"vpbench: {kind} error: {type(exc).__name__}: {exc}", file=sys.stderr)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    # Parsing itself can fail, so the flag is also detected pre-parse.
    json_errors = "--json-errors" in argv
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand (try --help)")
        return _HANDLERS[args.command](args)
    except UsageError as e:
        _emit_error("usage", e, json_errors)
        return 1
    except DataError as e:
        _emit_error("data", e, json_errors)
        return 2
    except Exception as e:  # noqa: BLE001 - last-resort mapping to exit 3
        _emit_error("internal", e, json_errors)
        if not json_errors:
            traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
