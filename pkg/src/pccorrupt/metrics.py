"""Benchmark bookkeeping: prediction records, error rates, reports.

All aggregation happens on integer counts; rates are computed once at the
end in double precision.  That makes partial aggregation + merge give the
same bits as one sequential pass, regardless of how records are split.

Absent (corruption, severity) cells are tracked in a presence mask and
excluded from every mean -- they are never imputed as zero.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .severity import CorruptionKind

CLEAN = "clean"
SEVERITIES = (1, 2, 3, 4, 5)
REPORT_VERSION = 1
CSV_HEADER = ["sample_id", "corruption", "severity", "true_label", "pred_label"]

_KIND_NAMES = tuple(k.value for k in CorruptionKind)
_VALID_CORRUPTIONS = frozenset(_KIND_NAMES) | {CLEAN}


class PredictionFormatError(ValueError):
    """Bad row in a prediction CSV; message carries the row number."""


@dataclass(frozen=True)
class PredictionRecord:
    sample_id: str
    corruption: str
    severity: int
    true_label: int
    pred_label: int

    def __post_init__(self):
        if self.corruption not in _VALID_CORRUPTIONS:
            raise ValueError(f"unknown corruption {self.corruption!r}")
        if (self.severity == 0) != (self.corruption == CLEAN):
            raise ValueError(
                "severity 0 is reserved for clean records (and clean requires it)"
            )
        if not 0 <= self.severity <= 5:
            raise ValueError(f"severity must be in 0..5, got {self.severity}")
        if self.true_label < 0 or self.pred_label < 0:
            raise ValueError("class indices must be >= 0")

    @property
    def wrong(self) -> bool:
        return self.true_label != self.pred_label


def ingest_predictions(source) -> list[PredictionRecord]:
    """Read and validate a prediction CSV.

    `source` may be a path, a CSV string, or any iterable of lines.  The
    header must match sample_id,corruption,severity,true_label,pred_label
    exactly; duplicated (sample_id, corruption, severity) keys are errors.
    """
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    elif isinstance(source, str) and "\n" in source:
        lines = source.splitlines()
    elif isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "r", newline="") as fh:
            lines = fh.read().splitlines()
    else:
        lines = [str(l) for l in source]
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise PredictionFormatError("row 1: empty file, expected a header") from None
    if [h.strip() for h in header] != CSV_HEADER:
        raise PredictionFormatError(
            f"row 1: header must be {','.join(CSV_HEADER)}, got {','.join(header)}"
        )
    records = []
    seen = set()
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise PredictionFormatError(f"row {row_no}: expected 5 fields, got {len(row)}")
        sample_id, corruption, severity_s, true_s, pred_s = (f.strip() for f in row)
        try:
            severity, true_label, pred_label = int(severity_s), int(true_s), int(pred_s)
        except ValueError:
            raise PredictionFormatError(f"row {row_no}: non-integer numeric field") from None
        try:
            rec = PredictionRecord(sample_id, corruption, severity, true_label, pred_label)
        except ValueError as exc:
            raise PredictionFormatError(f"row {row_no}: {exc}") from None
        key = (rec.sample_id, rec.corruption, rec.severity)
        if key in seen:
            raise PredictionFormatError(f"row {row_no}: duplicate record for {key}")
        seen.add(key)
        records.append(rec)
    return records


def write_predictions(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([r.sample_id, r.corruption, r.severity, r.true_label, r.pred_label])


# ---------------------------------------------------------------------------
# counting


@dataclass
class Cell:
    """Integer tallies for one (corruption, severity) slot."""

    count: int = 0
    wrong: int = 0
    per_class: Counter = field(default_factory=Counter)        # class -> count
    per_class_wrong: Counter = field(default_factory=Counter)  # class -> wrong
    confusion: Counter = field(default_factory=Counter)        # (true, pred) -> count

    def add(self, record: PredictionRecord):
        self.count += 1
        self.per_class[record.true_label] += 1
        self.confusion[(record.true_label, record.pred_label)] += 1
        if record.wrong:
            self.wrong += 1
            self.per_class_wrong[record.true_label] += 1

    def merged(self, other: "Cell") -> "Cell":
        return Cell(
            self.count + other.count,
            self.wrong + other.wrong,
            self.per_class + other.per_class,
            self.per_class_wrong + other.per_class_wrong,
            self.confusion + other.confusion,
        )

    def error_rate(self) -> float:
        return self.wrong / self.count

    def class_mean_error_rate(self) -> float:
        rates = [
            self.per_class_wrong.get(c, 0) / n for c, n in self.per_class.items() if n > 0
        ]
        return sum(rates) / len(rates)


@dataclass
class CountTable:
    """Commutative-associative fold state over prediction records."""

    cells: dict = field(default_factory=dict)  # (corruption, severity) -> Cell
    max_label: int = -1

    def add(self, record: PredictionRecord):
        key = (record.corruption, record.severity)
        cell = self.cells.get(key)
        if cell is None:
            cell = self.cells[key] = Cell()
        cell.add(record)
        self.max_label = max(self.max_label, record.true_label, record.pred_label)


def count_records(records) -> CountTable:
    table = CountTable()
    for r in records:
        table.add(r)
    return table


def merge_tables(a: CountTable, b: CountTable) -> CountTable:
    merged = CountTable(max_label=max(a.max_label, b.max_label))
    for key in set(a.cells) | set(b.cells):
        if key in a.cells and key in b.cells:
            merged.cells[key] = a.cells[key].merged(b.cells[key])
        else:
            src = a.cells.get(key) or b.cells[key]
            merged.cells[key] = src.merged(Cell())
    return merged


# ---------------------------------------------------------------------------
# direct record-level metrics


def error_rate(records) -> float:
    records = list(records)
    if not records:
        raise ValueError("cannot compute an error rate over zero records")
    wrong = sum(1 for r in records if r.wrong)
    return wrong / len(records)


def class_mean_error_rate(records) -> float:
    """Unweighted mean of per-class error rates; classes without samples
    simply do not participate."""
    records = list(records)
    if not records:
        raise ValueError("cannot compute an error rate over zero records")
    totals, wrongs = Counter(), Counter()
    for r in records:
        totals[r.true_label] += 1
        if r.wrong:
            wrongs[r.true_label] += 1
    rates = [wrongs.get(c, 0) / n for c, n in totals.items()]
    return sum(rates) / len(rates)


def confusion(records, corruption=None, severity=None, n_classes=None):
    """Count matrix and row-normalized matrix for a record scope.

    corruption/severity filter the scope when given; entry (i, j) counts
    true class i predicted as j.
    """
    scoped = [
        r
        for r in records
        if (corruption is None or r.corruption == corruption)
        and (severity is None or r.severity == severity)
    ]
    if not scoped:
        raise ValueError("empty scope for confusion matrix")
    if n_classes is None:
        n_classes = 1 + max(max(r.true_label, r.pred_label) for r in scoped)
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    for r in scoped:
        counts[r.true_label, r.pred_label] += 1
    row_sums = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        normalized = np.where(row_sums > 0, counts / row_sums, 0.0)
    return counts, normalized


# ---------------------------------------------------------------------------
# the report


@dataclass
class MetricsReport:
    n_classes: int
    cells: dict                 # corruption -> {severity -> {"count", "wrong"}}
    er_clean: float | None
    mer_clean: float | None
    er: dict                    # kind -> {severity -> rate}, present cells only
    mer: dict
    er_c: dict                  # kind -> mean over present severities
    mer_c: dict
    sum_er_c: dict              # kind -> raw sum over present severities
    er_cor: float | None        # mean of er_c over present kinds
    mer_cor: float | None
    sum_er_cor: float | None
    presence: dict              # kind -> sorted list of present severities
    confusion_counts: dict      # scope name -> C x C nested list of ints
    report_version: int = REPORT_VERSION


def _scope_confusion(cells: dict, keys, n_classes: int):
    pooled = Counter()
    for key in keys:
        pooled += cells[key].confusion
    if not pooled:
        return None
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    for (i, j), n in pooled.items():
        matrix[i, j] += n
    return matrix.tolist()


def report_from_table(table: CountTable, n_classes: int | None = None) -> MetricsReport:
    if not table.cells:
        raise ValueError("no records counted")
    if n_classes is None:
        n_classes = table.max_label + 1

    cells_out: dict = {}
    for (corruption, severity), cell in sorted(table.cells.items()):
        cells_out.setdefault(corruption, {})[severity] = {
            "count": cell.count,
            "wrong": cell.wrong,
        }

    clean_cell = table.cells.get((CLEAN, 0))
    er_clean = clean_cell.error_rate() if clean_cell else None
    mer_clean = clean_cell.class_mean_error_rate() if clean_cell else None

    er, mer, er_c, mer_c, sum_er_c, presence = {}, {}, {}, {}, {}, {}
    for kind in _KIND_NAMES:
        present = [s for s in SEVERITIES if (kind, s) in table.cells]
        if not present:
            continue
        presence[kind] = present
        er[kind] = {s: table.cells[(kind, s)].error_rate() for s in present}
        mer[kind] = {s: table.cells[(kind, s)].class_mean_error_rate() for s in present}
        sum_er_c[kind] = sum(er[kind][s] for s in present)
        er_c[kind] = sum_er_c[kind] / len(present)
        mer_c[kind] = sum(mer[kind][s] for s in present) / len(present)

    if er_c:
        er_cor = sum(er_c.values()) / len(er_c)
        mer_cor = sum(mer_c.values()) / len(mer_c)
        sum_er_cor = sum(er_c.values())
    else:
        er_cor = mer_cor = sum_er_cor = None

    corrupted_keys = [k for k in table.cells if k[0] != CLEAN]
    confusion_counts = {
        "clean": _scope_confusion(table.cells, [(CLEAN, 0)], n_classes)
        if clean_cell
        else None,
        "corrupted": _scope_confusion(table.cells, corrupted_keys, n_classes)
        if corrupted_keys
        else None,
        "all": _scope_confusion(table.cells, list(table.cells), n_classes),
    }

    return MetricsReport(
        n_classes=n_classes,
        cells=cells_out,
        er_clean=er_clean,
        mer_clean=mer_clean,
        er=er,
        mer=mer,
        er_c=er_c,
        mer_c=mer_c,
        sum_er_c=sum_er_c,
        er_cor=er_cor,
        mer_cor=mer_cor,
        sum_er_cor=sum_er_cor,
        presence=presence,
        confusion_counts=confusion_counts,
    )


def aggregate(records, n_classes: int | None = None) -> MetricsReport:
    """One-shot: count every record, then derive all rates and masks."""
    return report_from_table(count_records(records), n_classes)


# ---------------------------------------------------------------------------
# rendering


def _jsonable(report: MetricsReport) -> dict:
    def str_keys(d):
        return {str(k): v for k, v in d.items()}

    return {
        "report_version": report.report_version,
        "n_classes": report.n_classes,
        "cells": {c: str_keys(by_s) for c, by_s in report.cells.items()},
        "er_clean": report.er_clean,
        "mer_clean": report.mer_clean,
        "er": {c: str_keys(by_s) for c, by_s in report.er.items()},
        "mer": {c: str_keys(by_s) for c, by_s in report.mer.items()},
        "er_c": report.er_c,
        "mer_c": report.mer_c,
        "sum_er_c": report.sum_er_c,
        "er_cor": report.er_cor,
        "mer_cor": report.mer_cor,
        "sum_er_cor": report.sum_er_cor,
        "presence": report.presence,
        "confusion_counts": report.confusion_counts,
    }


def report_to_json(report: MetricsReport) -> str:
    return json.dumps(_jsonable(report), indent=2, sort_keys=True)


def report_from_json(text: str) -> MetricsReport:
    raw = json.loads(text)
    if raw.get("report_version") != REPORT_VERSION:
        raise ValueError(f"unsupported report_version {raw.get('report_version')!r}")

    def int_keys(d):
        return {int(k): v for k, v in d.items()}

    return MetricsReport(
        n_classes=raw["n_classes"],
        cells={c: int_keys(by_s) for c, by_s in raw["cells"].items()},
        er_clean=raw["er_clean"],
        mer_clean=raw["mer_clean"],
        er={c: int_keys(by_s) for c, by_s in raw["er"].items()},
        mer={c: int_keys(by_s) for c, by_s in raw["mer"].items()},
        er_c=raw["er_c"],
        mer_c=raw["mer_c"],
        sum_er_c=raw["sum_er_c"],
        er_cor=raw["er_cor"],
        mer_cor=raw["mer_cor"],
        sum_er_cor=raw["sum_er_cor"],
        presence=raw["presence"],
        confusion_counts=raw["confusion_counts"],
        report_version=raw["report_version"],
    )


_GROUPS = (
    ("Density", ("occlusion", "lidar", "local_density_inc", "local_density_dec", "cutout")),
    ("Noise", ("uniform", "gaussian", "impulse", "upsampling", "background")),
    ("Transformation", ("rotation", "shear", "ffd", "rbf", "inv_rbf")),
)


def _pct(rate) -> str:
    return "-" if rate is None else f"{100.0 * rate:.1f}"


def render_markdown(report: MetricsReport) -> str:
    """Grouped 15-column table (plus the all-corruption mean), one-decimal
    percentages, with a clean-error line above."""
    kinds = [k for _, ks in _GROUPS for k in ks]
    group_row = ["", *(
        name if i == 0 else ""
        for name, ks in _GROUPS
        for i, _ in enumerate(ks)
    ), ""]
    header = ["metric", *kinds, "ER_cor"]
    lines = [
        f"ER_clean: {_pct(report.er_clean)}  |  mER_clean: {_pct(report.mer_clean)}",
        "",
        "| " + " | ".join(group_row) + " |",
        "| " + " | ".join(header) + " |",
        "|" + "|".join("---" for _ in header) + "|",
    ]
    er_row = ["ER_c", *(_pct(report.er_c.get(k)) for k in kinds), _pct(report.er_cor)]
    mer_row = ["mER_c", *(_pct(report.mer_c.get(k)) for k in kinds), _pct(report.mer_cor)]
    lines.append("| " + " | ".join(er_row) + " |")
    lines.append("| " + " | ".join(mer_row) + " |")
    for s in SEVERITIES:
        row = [f"ER s={s}"]
        any_present = False
        for k in kinds:
            rate = report.er.get(k, {}).get(s)
            any_present = any_present or rate is not None
            row.append(_pct(rate))
        row.append("-")
        if any_present:
            lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def render_report(report: MetricsReport, fmt: str = "json") -> str:
    if fmt == "json":
        return report_to_json(report)
    if fmt in ("markdown", "markdown-table", "md"):
        return render_markdown(report)
    raise ValueError(f"unknown report format {fmt!r}")
