"""GZSL metrics, improvement rates, 2-D projection and the Fisher separability score."""

import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np

from util import logger
from zsl.errors import CoverageError, DomainError, ParseError, PreconditionError, ShapeError
from zsl.models.data_schema import EvalReport

REPORT_HEADER = "method\tAs\tAu\tH"
PROJECTION_HEADER = "x\ty\tclass_id"


def per_class_accuracy(predictions: Sequence[int], truth: Sequence[int],
                       classes: Sequence[str]) -> Tuple[Dict[str, float], float]:
    """
    Accuracy in percent for every class in ``classes`` and their unweighted mean.

    ``predictions`` and ``truth`` are indices into ``classes``; a prediction
    outside the set simply counts as wrong.
    """
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if predictions.shape != truth.shape:
        raise ShapeError("per_class_accuracy", predictions.shape, truth.shape)
    if truth.size and (truth.min() < 0 or truth.max() >= len(classes)):
        raise CoverageError("Ground-truth labels fall outside the class set")

    table: Dict[str, float] = {}
    for k, class_id in enumerate(classes):
        mask = truth == k
        n = int(mask.sum())
        if n == 0:
            raise CoverageError(f"Class '{class_id}' has no test samples")
        table[class_id] = 100.0 * float(np.sum(predictions[mask] == k)) / n
    return table, float(np.mean(list(table.values())))


def harmonic_mean(a_s: float, a_u: float) -> float:
    if a_s < 0 or a_u < 0:
        raise DomainError(f"accuracies must be non-negative, got {a_s} and {a_u}")
    if a_s + a_u == 0:
        return 0.0
    return 2.0 * a_s * a_u / (a_s + a_u)


def improvement_rate(new: float, base: float) -> float:
    """Relative gain of ``new`` over ``base`` in percent."""
    if base <= 0:
        raise DomainError(f"improvement rate needs a positive base, got {base}")
    return (new - base) / base * 100.0


def evaluate_gzsl(predictions: Sequence[int], truth: Sequence[int], seen: Sequence[str],
                  unseen: Sequence[str], method: str, **meta) -> EvalReport:
    """
    GZSL report over the joint label space ``seen + unseen``.

    Seen accuracy is taken over test samples of seen classes and unseen accuracy
    over test samples of unseen classes, both with predictions over all classes.
    """
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    n_seen = len(seen)
    seen_mask = truth < n_seen

    seen_table, a_s = per_class_accuracy(predictions[seen_mask], truth[seen_mask], seen)
    unseen_table, a_u = per_class_accuracy(predictions[~seen_mask] - n_seen, truth[~seen_mask] - n_seen, unseen)
    h = harmonic_mean(a_s, a_u)
    logger.info(f"{method}: As={a_s:.1f} Au={a_u:.1f} H={h:.1f}")
    return EvalReport(method=method, per_class={**seen_table, **unseen_table}, a_s=a_s, a_u=a_u, h=h, **meta)


@dataclass(frozen=True)
class Projection:
    """2-D points, one per input row, each paired with that row's class id."""

    points: np.ndarray
    class_ids: Tuple[str, ...]

    def __len__(self) -> int:
        return len(self.class_ids)

    def pairs(self) -> Iterator[Tuple[Tuple[float, float], str]]:
        for (x, y), c in zip(self.points, self.class_ids):
            yield (float(x), float(y)), c


def project_2d(features: np.ndarray, class_ids: Sequence[str]) -> Projection:
    """
    Project onto the top two principal directions of the sample covariance,
    keeping each row's class id next to its point.

    Each direction is signed so that its largest-magnitude coordinate is
    positive. With fewer than two positive eigenvalues the second axis is
    zero-filled.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3 or x.shape[1] < 2:
        raise PreconditionError(f"projection needs at least 3 samples of width 2, got shape {x.shape}")
    if len(class_ids) != x.shape[0]:
        raise ShapeError("project_2d", x.shape, (len(class_ids),))

    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    top = np.argsort(eigvals, kind="stable")[::-1][:2]
    eigvals, basis = eigvals[top], eigvecs[:, top]

    lead = np.argmax(np.abs(basis), axis=0)
    signs = np.where(basis[lead, np.arange(2)] < 0, -1.0, 1.0)
    basis = basis * signs

    points = centered @ basis
    tol = 1e-12 * max(1.0, float(np.abs(eigvals).max()))
    positive = int(np.sum(eigvals > tol))
    if positive < 2:
        logger.warning(f"Projection is degenerate: {positive} positive eigenvalue(s), second axis zero-filled")
        points[:, 1] = 0.0
        if positive == 0:
            points[:, 0] = 0.0
    return Projection(points=points, class_ids=tuple(str(c) for c in class_ids))


def separability(features: np.ndarray, labels: Sequence[int]) -> float:
    """Fisher ratio: trace of between-class scatter over trace of within-class scatter."""
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] != labels.shape[0]:
        raise ShapeError("separability", x.shape, labels.shape)
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size < 2 or counts.min() < 2:
        raise PreconditionError("separability needs at least 2 classes with at least 2 samples each")

    overall = x.mean(axis=0)
    between, within = 0.0, 0.0
    for k, n_k in zip(classes, counts):
        block = x[labels == k]
        mu_k = block.mean(axis=0)
        between += n_k * float(np.sum((mu_k - overall) ** 2))
        within += float(np.sum((block - mu_k) ** 2))
    if within == 0.0:
        logger.warning("Within-class scatter is zero; separability is infinite")
        return math.inf
    return between / within


def report_table(reports: Sequence[EvalReport]) -> Tuple[str, str]:
    """Human-readable table (max-H row marked with '*') and the TSV form."""
    if not reports:
        raise PreconditionError("report_table needs at least one report")
    best = int(np.argmax([r.h for r in reports]))
    width = max(len("method"), max(len(r.method) for r in reports))

    lines = [f"  {'method':<{width}}  {'As':>6}  {'Au':>6}  {'H':>6}"]
    for i, r in enumerate(reports):
        mark = "*" if i == best else " "
        lines.append(f"{mark} {r.method:<{width}}  {r.a_s:6.1f}  {r.a_u:6.1f}  {r.h:6.1f}")
    text = "\n".join(lines) + "\n"

    tsv = [REPORT_HEADER]
    tsv.extend(f"{r.method}\t{r.a_s!r}\t{r.a_u!r}\t{r.h!r}" for r in reports)
    return text, "\n".join(tsv) + "\n"


def parse_report_tsv(text: str) -> List[Tuple[str, float, float, float]]:
    lines = text.splitlines()
    if not lines or lines[0] != REPORT_HEADER:
        raise ParseError("missing report header", line=1)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise ParseError("expected 4 columns", line=lineno)
        try:
            rows.append((cols[0], float(cols[1]), float(cols[2]), float(cols[3])))
        except ValueError as e:
            raise ParseError(str(e), line=lineno) from None
    return rows


def write_projection(projection: Projection) -> str:
    rows = [PROJECTION_HEADER]
    rows.extend(f"{x!r}\t{y!r}\t{c}" for (x, y), c in projection.pairs())
    return "\n".join(rows) + "\n"


def write_per_class(report: EvalReport) -> str:
    return "".join(f"{c}\t{acc!r}\n" for c, acc in report.per_class.items())
