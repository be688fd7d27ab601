import math

import numpy as np
import pytest
from pydantic import ValidationError

from zsl.errors import CoverageError, DomainError, ParseError, PreconditionError, ShapeError
from zsl.evaluation import (
    REPORT_HEADER,
    Projection,
    evaluate_gzsl,
    harmonic_mean,
    improvement_rate,
    parse_report_tsv,
    per_class_accuracy,
    project_2d,
    report_table,
    separability,
    write_projection,
)
from zsl.models.data_schema import EvalReport
from zsl.published import PUBLISHED_RATES, consistency, framework_rows, rows_for


def test_per_class_accuracy_is_unweighted():
    # class a has 4 samples, class b has 1
    table, mean = per_class_accuracy([0, 0, 0, 1, 1], [0, 0, 0, 0, 1], ["a", "b"])
    assert table == {"a": 75.0, "b": 100.0}
    assert mean == pytest.approx(87.5)


def test_per_class_accuracy_counts_foreign_predictions_as_wrong():
    table, _ = per_class_accuracy([7, 0], [0, 0], ["a"])
    assert table["a"] == 50.0


def test_per_class_accuracy_rejects_missing_class():
    with pytest.raises(CoverageError):
        per_class_accuracy([0, 0], [0, 0], ["a", "b"])
    with pytest.raises(CoverageError):
        per_class_accuracy([0], [3], ["a"])


def test_evaluate_gzsl_over_joint_label_space():
    truth = [0, 0, 1, 1, 2, 2]
    preds = [0, 1, 1, 1, 2, 0]
    report = evaluate_gzsl(preds, truth, ["a", "b"], ["c"], "demo", seed=4)
    assert report.per_class == {"a": 50.0, "b": 100.0, "c": 50.0}
    assert report.a_s == pytest.approx(75.0)
    assert report.a_u == pytest.approx(50.0)
    assert report.h == pytest.approx(60.0)
    assert report.seed == 4


@pytest.mark.parametrize("a_s, a_u", [(10.0, 90.0), (55.5, 55.5), (0.0, 40.0), (99.0, 1.0)])
def test_harmonic_mean_bounds_and_symmetry(a_s, a_u):
    h = harmonic_mean(a_s, a_u)
    assert h == pytest.approx(harmonic_mean(a_u, a_s))
    assert min(a_s, a_u) - 1e-12 <= h <= (a_s + a_u) / 2 + 1e-12
    assert h <= 2 * min(a_s, a_u) + 1e-12


def test_harmonic_mean_edges():
    assert harmonic_mean(0.0, 0.0) == 0.0
    assert harmonic_mean(0.0, 80.0) == 0.0
    with pytest.raises(DomainError):
        harmonic_mean(-1.0, 50.0)


@pytest.mark.parametrize("row", framework_rows(), ids=lambda r: f"{r.dataset}-{r.method}")
def test_published_framework_rows_are_consistent(row):
    assert row.recomputed_h() == pytest.approx(row.h, abs=0.05)


@pytest.mark.parametrize("rate", PUBLISHED_RATES, ids=lambda r: f"{r.dataset}-{r.base}")
def test_published_improvement_rates(rate):
    assert rate.recomputed() == pytest.approx(rate.rate, abs=0.05)


def test_published_blank_cells_have_no_recomputation():
    apy = {r.method: r for r in rows_for("APY")}
    assert apy["CADA-VAE"].recomputed_h() is None
    assert len(framework_rows()) == 12


def test_consistency_pairs_rows_with_recomputed_h():
    rows = rows_for("APY")
    paired = consistency(rows)
    assert [r for r, _ in paired] == rows
    assert all(h == r.recomputed_h() for r, h in paired)
    assert any(h is None for _, h in paired)


def test_improvement_rate():
    assert improvement_rate(60.0, 50.0) == pytest.approx(20.0)
    assert improvement_rate(40.0, 50.0) == pytest.approx(-20.0)
    with pytest.raises(DomainError):
        improvement_rate(10.0, 0.0)


def _project(x):
    return project_2d(x, [f"c{i % 2}" for i in range(len(x))]).points


def test_projection_of_axis_aligned_cloud():
    x = np.array([[-2.0, 0.0], [0.0, 1.0], [2.0, 0.0], [0.0, -1.0]])
    np.testing.assert_allclose(_project(x), x, atol=1e-12)


def test_projection_keeps_class_ids_with_points():
    x = np.array([[-2.0, 0.0], [0.0, 1.0], [2.0, 0.0], [0.0, -1.0]])
    projection = project_2d(x, ["a", "b", "a", "c"])
    assert len(projection) == 4
    pairs = list(projection.pairs())
    assert [c for _, c in pairs] == ["a", "b", "a", "c"]
    assert pairs[2][0] == pytest.approx((2.0, 0.0))
    with pytest.raises(ShapeError):
        project_2d(x, ["a", "b"])


def test_projection_variance_matches_top_eigenvalues(rng):
    x = rng.standard_normal((50, 4)) @ np.diag([3.0, 2.0, 0.5, 0.1])
    points = _project(x)
    eigvals = np.sort(np.linalg.eigvalsh(np.cov(x.T)))[::-1]
    np.testing.assert_allclose(np.var(points, axis=0, ddof=1), eigvals[:2], rtol=1e-8)
    assert abs(float(np.cov(points.T)[0, 1])) < 1e-8


def test_projection_sign_convention(rng):
    x = rng.standard_normal((20, 3)) * [5.0, 1.0, 0.2]
    np.testing.assert_allclose(_project(x), _project(-x) * -1.0, atol=1e-10)
    # the largest-magnitude loading is positive, so the dominant column tracks x[:, 0]
    assert np.corrcoef(_project(x)[:, 0], x[:, 0])[0, 1] > 0


def test_projection_of_collinear_points_zero_fills():
    x = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    points = _project(x)
    assert not points[:, 1].any()
    np.testing.assert_allclose(points[:, 0], np.array([-1.5, -0.5, 0.5, 1.5]) * math.sqrt(2.0))
    assert not _project(np.ones((3, 2))).any()


def test_projection_needs_three_samples():
    with pytest.raises(PreconditionError):
        _project(np.zeros((2, 5)))
    with pytest.raises(PreconditionError):
        _project(np.zeros((5, 1)))


def test_write_projection():
    text = write_projection(Projection(np.array([[0.5, -1.0]]), ("t01",)))
    assert text == "x\ty\tclass_id\n0.5\t-1.0\tt01\n"


FOUR_POINTS = np.array([[0.0, 0.0], [0.0, 2.0], [4.0, 0.0], [4.0, 2.0]])
FOUR_LABELS = np.array([0, 0, 1, 1])


def test_separability_hand_computed():
    # between = 2*4 + 2*4, within = 4 * 1
    assert separability(FOUR_POINTS, FOUR_LABELS) == pytest.approx(4.0)


def test_separability_is_invariant_to_rigid_motion(rng):
    x = rng.standard_normal((30, 3))
    labels = np.repeat(np.arange(3), 10)
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    moved = x @ q + np.array([10.0, -3.0, 7.0])
    assert separability(moved, labels) == pytest.approx(separability(x, labels))


def test_separability_grows_as_classes_move_apart(rng):
    x = rng.standard_normal((40, 2))
    labels = np.repeat([0, 1], 20)
    scores = []
    for shift in (0.0, 3.0, 6.0, 12.0):
        moved = x.copy()
        moved[labels == 1] += shift
        scores.append(separability(moved, labels))
    assert all(a < b for a, b in zip(scores, scores[1:]))


def test_separability_of_collapsed_classes_is_infinite():
    x = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    assert separability(x, FOUR_LABELS) == math.inf


def test_separability_preconditions():
    with pytest.raises(PreconditionError):
        separability(FOUR_POINTS, np.zeros(4, dtype=int))
    with pytest.raises(PreconditionError):
        separability(FOUR_POINTS[:3], FOUR_LABELS[:3])


def _report(method, a_s, a_u):
    return EvalReport(method=method, a_s=a_s, a_u=a_u, h=harmonic_mean(a_s, a_u))


def test_report_table_marks_best_row():
    reports = [_report("baseline", 60.0, 40.0), _report("high-relevance", 58.0, 50.0)]
    text, tsv = report_table(reports)
    lines = text.splitlines()
    assert lines[2].startswith("* high-relevance")
    assert lines[1].startswith("  baseline")
    rows = parse_report_tsv(tsv)
    assert [r[0] for r in rows] == ["baseline", "high-relevance"]
    assert rows[1][3] == reports[1].h


def test_report_table_needs_reports():
    with pytest.raises(PreconditionError):
        report_table([])


def test_parse_report_rejects_bad_input():
    with pytest.raises(ParseError):
        parse_report_tsv("method\tH\n")
    with pytest.raises(ParseError) as exc:
        parse_report_tsv(REPORT_HEADER + "\nx\t1\t2\n")
    assert exc.value.line == 2


def test_eval_report_requires_zero_h_with_zero_side():
    with pytest.raises(ValidationError):
        EvalReport(method="m", a_s=0.0, a_u=50.0, h=10.0)
    with pytest.raises(ValidationError):
        EvalReport(method="m", a_s=120.0, a_u=50.0, h=10.0)
