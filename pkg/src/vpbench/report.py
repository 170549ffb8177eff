"""Aggregation of per-trial accuracies into tables and chart files.

Everything here is pure single-threaded data shuffling: trial records
in, deterministic tables out, rendered as CSV, SVG, or JSON with
repr-exact floats so emit -> parse reproduces the table bit for bit.
"""

import csv
import dataclasses
import json
import statistics

from .errors import EmptyInput, IoError, MissingBaseline, NotEnoughRows, ZeroBaseline

__all__ = [
    "TableRow",
    "ResultTable",
    "aggregate",
    "records_from_results",
    "relative_decrease",
    "group_relative_decrease",
    "top_k",
    "emit",
    "read_table_csv",
    "read_table_json",
    "write_decreases_csv",
]

AGGREGATE_KEYS = ("dataset", "model", "model_type", "condition")

# Line tones per model type (section colors: instance-discrimination SSL
# red, pretext SSL green, supervised gray). Shades rotate within a type
# so same-type models stay distinguishable.
_TYPE_TONES = {
    "SSL (ID)": ("#b22222", "#e06666", "#8b0000", "#ff9999"),
    "SSL (PT)": ("#2e8b57", "#66c286", "#1e5e3a", "#99d9b3"),
    "Supervised": ("#555555", "#8c8c8c", "#333333", "#bfbfbf"),
}
_FALLBACK_TONES = ("#336699", "#6699cc", "#1f4e79", "#99bbdd")


@dataclasses.dataclass(frozen=True)
class TableRow:
    """One aggregated cell: key fields plus trial statistics."""

    dataset: str
    model: str
    model_type: str
    condition: float
    mean: float
    stddev: float
    trials: int

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not 0.0 <= self.mean <= 1.0:
            raise ValueError(f"mean {self.mean} outside [0, 1]")
        if not self.stddev >= 0.0:
            raise ValueError(f"stddev {self.stddev} must be >= 0")

    def key(self):
        return (self.dataset, self.model, self.model_type, self.condition)


class ResultTable:
    """Immutable collection of TableRows in lexicographic key order."""

    __slots__ = ("rows",)

    def __init__(self, rows):
        rows = tuple(sorted(rows, key=TableRow.key))
        if not rows:
            raise EmptyInput("result table has no rows")
        keys = [r.key() for r in rows]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate table keys")
        object.__setattr__(self, "rows", rows)

    def __setattr__(self, name, value):
        raise AttributeError("ResultTable is immutable")

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __eq__(self, other):
        return isinstance(other, ResultTable) and self.rows == other.rows

    def conditions(self):
        return tuple(sorted(set(r.condition for r in self.rows)))

    def subset(self, **fields):
        """Rows matching all given field values (same row order)."""
        keep = [
            r for r in self.rows
            if all(getattr(r, k) == v for k, v in fields.items())
        ]
        return keep


def records_from_results(results, dataset, model, model_type):
    """Attach run context to TrialResults, yielding aggregate() records."""
    return [
        {
            "dataset": dataset,
            "model": model,
            "model_type": model_type,
            "condition": r.condition,
            "trial": r.trial,
            "accuracy": r.accuracy,
        }
        for r in results
    ]


def aggregate(records, keys=AGGREGATE_KEYS):
    """Group accuracy records by key and compute trial statistics.

    Args:
        records: mappings carrying the key fields plus "accuracy".
        keys: grouping fields; any subset missing from AGGREGATE_KEYS is
            filled with "" / 0.0 so the table shape stays fixed.

    Returns:
        ResultTable with mean, sample stddev (0 for a single trial), and
        trial count per key, rows sorted lexicographically.

    Raises:
        EmptyInput: no records.
    """
    records = list(records)
    if not records:
        raise EmptyInput("no records to aggregate")
    groups = {}
    for rec in records:
        key = tuple(rec[k] for k in keys)
        groups.setdefault(key, []).append(float(rec["accuracy"]))
    rows = []
    for key, accs in groups.items():
        fields = dict(zip(keys, key))
        stddev = statistics.stdev(accs) if len(accs) > 1 else 0.0
        rows.append(
            TableRow(
                dataset=str(fields.get("dataset", "")),
                model=str(fields.get("model", "")),
                model_type=str(fields.get("model_type", "")),
                condition=float(fields.get("condition", 0.0)),
                mean=statistics.fmean(accs),
                stddev=stddev,
                trials=len(accs),
            )
        )
    return ResultTable(rows)


def relative_decrease(acc_base, acc_cond):
    """Signed relative change from baseline; negative = degradation.

    Raises:
        ZeroBaseline: baseline accuracy is not positive.
    """
    if acc_base <= 0.0:
        raise ZeroBaseline(f"baseline accuracy {acc_base} is not positive")
    return (acc_cond - acc_base) / acc_base


def group_relative_decrease(table, baseline_condition=0.0, baseline_table=None):
    """Mean relative decrease per (model_type, condition) group.

    Per (dataset, model) the decrease against that pair's baseline-
    condition mean is computed first; the per-cell decreases are then
    averaged uniformly within each model type. baseline_table supplies
    the baseline rows when the measured table lacks the baseline
    condition (the bounded warp tables share the unwarped baseline,
    since an identity warp needs no crop).

    Returns:
        Dict mapping (model_type, condition) to the group-mean decrease,
        keys sorted, baseline condition excluded.

    Raises:
        MissingBaseline: some (dataset, model) has no baseline row.
    """
    base_rows = (baseline_table or table).subset(condition=baseline_condition)
    base = {(r.dataset, r.model): r.mean for r in base_rows}
    buckets = {}
    for row in table.rows:
        if row.condition == baseline_condition and baseline_table is None:
            continue
        pair = (row.dataset, row.model)
        if pair not in base:
            raise MissingBaseline(f"dataset={row.dataset!r} model={row.model!r}")
        rd = relative_decrease(base[pair], row.mean)
        buckets.setdefault((row.model_type, row.condition), []).append(rd)
    return {k: statistics.fmean(v) for k, v in sorted(buckets.items())}


def top_k(table, dataset, condition, k):
    """Best-k models for one (dataset, condition) cell.

    Returns:
        List of (model, model_type, mean) tuples, descending mean, ties
        broken by model name ascending.

    Raises:
        NotEnoughRows: fewer than k rows match.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rows = table.subset(dataset=dataset, condition=condition)
    if len(rows) < k:
        raise NotEnoughRows(f"{len(rows)} rows for dataset={dataset!r} condition={condition}, need {k}")
    ranked = sorted(rows, key=lambda r: (-r.mean, r.model))
    return [(r.model, r.model_type, r.mean) for r in ranked[:k]]


_CSV_HEADER = ["dataset", "model", "model_type", "condition", "mean", "stddev", "trials"]


def _write_csv(table, path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(_CSV_HEADER)
        for r in table.rows:
            w.writerow([r.dataset, r.model, r.model_type, repr(r.condition), repr(r.mean), repr(r.stddev), r.trials])


def read_table_csv(path):
    """Parse a CSV written by emit() back into an equal ResultTable."""
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            rows = [
                TableRow(
                    dataset=rec["dataset"],
                    model=rec["model"],
                    model_type=rec["model_type"],
                    condition=float(rec["condition"]),
                    mean=float(rec["mean"]),
                    stddev=float(rec["stddev"]),
                    trials=int(rec["trials"]),
                )
                for rec in reader
            ]
    except OSError as e:
        raise IoError(f"{path}: {e}") from e
    return ResultTable(rows)


def _table_doc(table):
    return {
        "rows": [
            {
                "dataset": r.dataset,
                "model": r.model,
                "model_type": r.model_type,
                "condition": r.condition,
                "mean": r.mean,
                "stddev": r.stddev,
                "trials": r.trials,
            }
            for r in table.rows
        ]
    }


def read_table_json(path):
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as e:
        raise IoError(f"{path}: {e}") from e
    return ResultTable([TableRow(**row) for row in doc["rows"]])


def _svg_text(table, width=640, height=420, margin=56):
    """Line chart: condition on x, mean accuracy on y in [0, 1]."""
    conds = table.conditions()
    cmin, cmax = conds[0], conds[-1]
    span = cmax - cmin
    plot_w = width - 2 * margin
    plot_h = height - 2 * margin

    def sx(c):
        if span == 0.0:
            return margin + plot_w / 2.0
        return margin + (c - cmin) / span * plot_w

    def sy(v):
        return margin + (1.0 - v) * plot_h

    series = {}
    for r in table.rows:
        series.setdefault((r.dataset, r.model, r.model_type), []).append(r)
    type_counts = {}
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" '
        'stroke="black" stroke-width="1"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        'stroke="black" stroke-width="1"/>',
    ]
    for c in conds:
        parts.append(
            f'<text x="{sx(c):.2f}" y="{height - margin + 18}" font-size="11" '
            f'text-anchor="middle">{c:g}</text>'
        )
    for v in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(
            f'<text x="{margin - 8}" y="{sy(v):.2f}" font-size="11" text-anchor="end">{v:g}</text>'
        )
    for (dataset, model, model_type), rows in sorted(series.items()):
        rows = sorted(rows, key=lambda r: r.condition)
        tones = _TYPE_TONES.get(model_type, _FALLBACK_TONES)
        color = tones[type_counts.get(model_type, 0) % len(tones)]
        type_counts[model_type] = type_counts.get(model_type, 0) + 1
        pts = " ".join(f"{sx(r.condition):.2f},{sy(r.mean):.2f}" for r in rows)
        label = f"{dataset}/{model}" if dataset else model
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}">'
            f"<title>{label} [{model_type}]</title></polyline>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit(table, fmt, path):
    """Write the table as "csv", "svg", or "json" (deterministic bytes).

    Raises:
        IoError: the path cannot be written.
    """
    try:
        if fmt == "csv":
            _write_csv(table, path)
        elif fmt == "svg":
            with open(path, "w", encoding="utf-8") as f:
                f.write(_svg_text(table))
        elif fmt == "json":
            with open(path, "w", encoding="utf-8") as f:
                f.write(json.dumps(_table_doc(table), sort_keys=True, indent=2) + "\n")
        else:
            raise ValueError(f"unknown format {fmt!r}")
    except OSError as e:
        raise IoError(f"{path}: {e}") from e


def write_decreases_csv(decreases, path):
    """Write a group_relative_decrease mapping as CSV."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["model_type", "condition", "relative_decrease"])
            for (model_type, condition), value in sorted(decreases.items()):
                w.writerow([model_type, repr(condition), repr(value)])
    except OSError as e:
        raise IoError(f"{path}: {e}") from e
