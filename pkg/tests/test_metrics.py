"""Error-rate bookkeeping: ingestion, counting, aggregation, rendering."""

from fractions import Fraction

import numpy as np
import pytest

from pccorrupt import (
    CountTable,
    MetricsReport,
    PredictionFormatError,
    PredictionRecord,
    aggregate,
    class_mean_error_rate,
    confusion,
    count_records,
    error_rate,
    ingest_predictions,
    merge_tables,
    render_markdown,
    render_report,
    report_from_json,
    report_from_table,
    report_to_json,
    write_predictions,
)

KINDS_15 = [
    "occlusion", "lidar", "local_density_inc", "local_density_dec", "cutout",
    "uniform", "gaussian", "impulse", "upsampling", "background",
    "rotation", "shear", "ffd", "rbf", "inv_rbf",
]

GOOD_CSV = """sample_id,corruption,severity,true_label,pred_label
chair_1,clean,0,2,2
chair_1,gaussian,3,2,0
table_4,clean,0,1,1
"""


def _rec(sid, corr, sev, t, p):
    return PredictionRecord(sid, corr, sev, t, p)


def _random_records(n, seed, n_classes=6, acc=0.7):
    rng = np.random.default_rng(seed)
    corrs = np.array(["clean"] + KINDS_15)
    records = []
    for i in range(n):
        c = str(rng.choice(corrs))
        s = 0 if c == "clean" else int(rng.integers(1, 6))
        t = int(rng.integers(n_classes))
        p = t if rng.random() < acc else int(rng.integers(n_classes))
        records.append(_rec(f"s{i}", c, s, t, p))
    return records


# -- records and ingestion -------------------------------------------------


def test_record_validation():
    _rec("a", "clean", 0, 1, 1)
    _rec("a", "cutout", 5, 0, 3)
    with pytest.raises(ValueError):
        _rec("a", "fog", 1, 0, 0)
    with pytest.raises(ValueError):
        _rec("a", "clean", 1, 0, 0)  # clean must be severity 0
    with pytest.raises(ValueError):
        _rec("a", "gaussian", 0, 0, 0)  # severity 0 is clean-only
    with pytest.raises(ValueError):
        _rec("a", "gaussian", 6, 0, 0)
    with pytest.raises(ValueError):
        _rec("a", "gaussian", 1, -1, 0)
    assert _rec("a", "gaussian", 1, 2, 3).wrong
    assert not _rec("a", "gaussian", 1, 2, 2).wrong


def test_ingest_from_string_path_and_lines(tmp_path):
    from_string = ingest_predictions(GOOD_CSV)
    assert len(from_string) == 3
    assert from_string[1].corruption == "gaussian"

    path = tmp_path / "preds.csv"
    path.write_text(GOOD_CSV)
    assert ingest_predictions(path) == from_string
    assert ingest_predictions(str(path)) == from_string
    assert ingest_predictions(GOOD_CSV.splitlines()) == from_string
    with open(path) as fh:
        assert ingest_predictions(fh) == from_string


@pytest.mark.parametrize(
    "body,row,fragment",
    [
        ("sample,corruption,severity,true_label,pred_label\n", 1, "header"),
        ("sample_id,corruption,severity,true_label,pred_label\na,gaussian,x,0,0\n", 2, "non-integer"),
        ("sample_id,corruption,severity,true_label,pred_label\na,gaussian,6,0,0\n", 2, "severity"),
        ("sample_id,corruption,severity,true_label,pred_label\na,gaussian,1,0\n", 2, "5 fields"),
        ("sample_id,corruption,severity,true_label,pred_label\na,fog,1,0,0\n", 2, "fog"),
        (
            "sample_id,corruption,severity,true_label,pred_label\n"
            "a,gaussian,1,0,0\na,gaussian,1,1,1\n",
            3,
            "duplicate",
        ),
    ],
)
def test_ingest_rejects_bad_rows(body, row, fragment):
    with pytest.raises(PredictionFormatError) as err:
        ingest_predictions(body)
    message = str(err.value)
    assert f"row {row}" in message
    assert fragment in message


def test_ingest_empty_file():
    with pytest.raises(PredictionFormatError):
        ingest_predictions(iter([]))


def test_write_then_ingest_round_trip(tmp_path):
    records = _random_records(200, seed=1)
    # unique keys required: re-key by index
    records = [
        _rec(f"s{i}", r.corruption, r.severity, r.true_label, r.pred_label)
        for i, r in enumerate(records)
    ]
    path = tmp_path / "out.csv"
    write_predictions(records, path)
    assert ingest_predictions(path) == records


# -- counting and rates ----------------------------------------------------


def test_error_rate_simple():
    records = [
        _rec("a", "clean", 0, 0, 0),
        _rec("b", "clean", 0, 0, 1),
        _rec("c", "clean", 0, 1, 1),
        _rec("d", "clean", 0, 1, 1),
    ]
    assert error_rate(records) == 0.25
    assert class_mean_error_rate(records) == pytest.approx((0.5 + 0.0) / 2)


def test_class_mean_ignores_absent_classes():
    # class 1 never appears; the mean is over classes that do
    records = [
        _rec("a", "clean", 0, 0, 0),
        _rec("b", "clean", 0, 0, 2),
        _rec("c", "clean", 0, 2, 2),
    ]
    assert class_mean_error_rate(records) == pytest.approx((0.5 + 0.0) / 2)


def test_balanced_classes_make_both_rates_agree():
    records = []
    for c in range(4):
        for i in range(10):
            pred = c if i < 7 else (c + 1) % 4
            records.append(_rec(f"{c}_{i}", "clean", 0, c, pred))
    assert error_rate(records) == pytest.approx(0.3)
    assert class_mean_error_rate(records) == pytest.approx(0.3)


def test_count_table_recount_oracle():
    records = _random_records(5000, seed=2)
    table = count_records(records)

    counts = {}
    for r in records:
        key = (r.corruption, r.severity)
        c = counts.setdefault(key, [0, 0])
        c[0] += 1
        c[1] += r.wrong
    assert set(table.cells) == set(counts)
    for key, (n, wrong) in counts.items():
        assert table.cells[key].count == n
        assert table.cells[key].wrong == wrong
        assert table.cells[key].error_rate() == wrong / n


def test_merge_tables_matches_joint_count():
    records = _random_records(900, seed=3)
    a, b, c = records[:300], records[300:500], records[500:]
    joint = count_records(records)
    left = merge_tables(merge_tables(count_records(a), count_records(b)), count_records(c))
    right = merge_tables(count_records(a), merge_tables(count_records(b), count_records(c)))
    for merged in (left, right):
        assert set(merged.cells) == set(joint.cells)
        for key, cell in joint.cells.items():
            assert merged.cells[key].count == cell.count
            assert merged.cells[key].wrong == cell.wrong
            assert merged.cells[key].per_class == cell.per_class
            assert merged.cells[key].confusion == cell.confusion


def test_merge_does_not_mutate_inputs():
    a = count_records(_random_records(50, seed=4))
    b = count_records(_random_records(50, seed=5))
    before = {k: (c.count, c.wrong) for k, c in a.cells.items()}
    merge_tables(a, b)
    assert {k: (c.count, c.wrong) for k, c in a.cells.items()} == before


# -- confusion -------------------------------------------------------------


def test_confusion_counts_and_rows():
    records = [
        _rec("a", "clean", 0, 0, 0),
        _rec("b", "clean", 0, 0, 1),
        _rec("c", "clean", 0, 1, 1),
        _rec("d", "gaussian", 2, 1, 0),
    ]
    counts, rates = confusion(records, n_classes=2)
    assert counts.tolist() == [[1, 1], [1, 1]]
    assert rates.tolist() == [[0.5, 0.5], [0.5, 0.5]]
    # diagonal mass equals the number of correct predictions
    assert np.trace(counts) == sum(not r.wrong for r in records)
    # row sums equal per-class record counts
    assert counts.sum(axis=1).tolist() == [2, 2]

    only_clean, _ = confusion(records, corruption="clean", n_classes=2)
    assert only_clean.sum() == 3
    only_g, _ = confusion(records, corruption="gaussian", severity=2, n_classes=2)
    assert only_g.tolist() == [[0, 0], [1, 0]]


def test_confusion_rates_row_normalized_exactly():
    records = _random_records(400, seed=6, n_classes=4)
    counts, rates = confusion(records, n_classes=4)
    for i in range(4):
        row_sum = counts[i].sum()
        for j in range(4):
            want = float(Fraction(int(counts[i, j]), int(row_sum))) if row_sum else 0.0
            assert rates[i, j] == pytest.approx(want, abs=1e-15)


# -- aggregation -----------------------------------------------------------


def test_aggregate_severity_mean():
    records = []
    rates = {1: 0.1, 2: 0.2, 3: 0.3, 4: 0.4, 5: 0.5}
    for s, rate in rates.items():
        for i in range(10):
            records.append(_rec(f"x{i}", "uniform", s, 0, 0 if i >= 10 * rate else 1))
    report = aggregate(records)
    for s, rate in rates.items():
        assert report.er["uniform"][s] == pytest.approx(rate)
    assert report.er_c["uniform"] == pytest.approx(0.3)
    assert report.sum_er_c["uniform"] == pytest.approx(1.5)
    # only one kind present, so the overall corruption mean equals it
    assert report.er_cor == pytest.approx(0.3)
    assert report.presence["uniform"] == [1, 2, 3, 4, 5]


def test_aggregate_skips_absent_cells():
    records = [
        _rec("a", "clean", 0, 0, 0),
        _rec("a", "uniform", 1, 0, 0),
        _rec("b", "uniform", 1, 1, 0),
        _rec("a", "uniform", 5, 0, 1),
        _rec("a", "gaussian", 2, 0, 0),
    ]
    report = aggregate(records)
    assert report.presence["uniform"] == [1, 5]
    assert "shear" not in report.presence
    assert report.er["uniform"] == {1: 0.5, 5: 1.0}
    assert report.er_c["uniform"] == pytest.approx(0.75)  # mean of present only
    assert report.er_c["gaussian"] == 0.0
    assert report.er_cor == pytest.approx((0.75 + 0.0) / 2)
    assert report.er_clean == 0.0


def test_aggregate_without_clean_records():
    report = aggregate([_rec("a", "cutout", 1, 0, 1), _rec("b", "cutout", 1, 1, 1)])
    assert report.er_clean is None
    assert report.mer_clean is None
    assert report.confusion_counts["clean"] is None
    assert report.er_cor == pytest.approx(0.5)


def test_constant_predictor_rates():
    # predicting class 0 always: ER = fraction of non-zero labels
    records = [_rec(f"s{i}", "clean", 0, i % 4, 0) for i in range(40)]
    report = aggregate(records)
    assert report.er_clean == pytest.approx(0.75)
    assert report.mer_clean == pytest.approx(0.75)  # balanced classes


def test_empty_aggregate_rejected():
    with pytest.raises(ValueError):
        aggregate([])


# -- serialization ---------------------------------------------------------


def test_report_json_round_trip():
    report = aggregate(_random_records(2000, seed=7))
    clone = report_from_json(report_to_json(report))
    assert isinstance(clone, MetricsReport)
    assert clone == report  # dataclass equality covers every field
    # severity keys must come back as ints, not JSON strings
    assert all(isinstance(s, int) for s in clone.er["uniform"])


def test_report_version_pinned():
    report = aggregate(_random_records(100, seed=8))
    assert report.report_version == 1
    assert '"report_version": 1' in report_to_json(report)


# -- rendering -------------------------------------------------------------


def test_markdown_table_shape():
    report = aggregate(_random_records(4000, seed=9))
    text = render_markdown(report)
    lines = text.splitlines()
    assert lines[0].startswith("ER_clean:")
    group_row = lines[2]
    assert "Density" in group_row and "Noise" in group_row and "Transformation" in group_row
    header = [c.strip() for c in lines[3].strip("|").split("|")]
    assert header == ["metric"] + KINDS_15 + ["ER_cor"]
    er_row = [c.strip() for c in lines[5].strip("|").split("|")]
    assert er_row[0] == "ER_c"
    assert len(er_row) == 17
    # one-decimal percentages
    for value in er_row[1:]:
        assert value == "-" or "." in value
    assert any(line.startswith("| ER s=3") for line in lines)


def test_markdown_marks_missing_cells():
    report = aggregate([_rec("a", "uniform", 1, 0, 0), _rec("b", "uniform", 1, 0, 1)])
    text = render_markdown(report)
    er_line = next(l for l in text.splitlines() if l.startswith("| ER_c"))
    cols = [c.strip() for c in er_line.strip("|").split("|")]
    assert cols[KINDS_15.index("uniform") + 1] == "50.0"
    assert cols[KINDS_15.index("gaussian") + 1] == "-"


def test_render_report_dispatch():
    report = aggregate(_random_records(50, seed=10))
    assert render_report(report, "json").startswith("{")
    assert "| metric |" in render_report(report, "markdown")
    with pytest.raises(ValueError):
        render_report(report, "csv")
