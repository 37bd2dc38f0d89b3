"""Binary classification metrics and the teacher-loss confidence table."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .errors import ShapeError, UndefinedMetricError


def _prepare(scores, labels):
    s = np.ascontiguousarray(scores, dtype=np.float64).ravel()
    y = np.ascontiguousarray(labels, dtype=np.int64).ravel()
    if s.shape != y.shape:
        raise ShapeError(f"{s.size} scores vs {y.size} labels")
    if y.size and not np.isin(y, (0, 1)).all():
        raise ShapeError("labels must be 0/1")
    return s, y


def _summary(scores, labels):
    s, y = _prepare(scores, labels)
    order = np.argsort(-s, kind="stable")
    return kernels.ranking_summary(np.ascontiguousarray(s[order]), np.ascontiguousarray(y[order]))


def roc_auc(scores, labels):
    """Probability a random positive outscores a random negative (ties count half)."""
    pairs, _, _, _, n_pos, n_neg = _summary(scores, labels)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC AUC needs both classes present")
    return pairs / (n_pos * n_neg)


def pr_auc(scores, labels):
    """Step-interpolated average precision over tie-grouped thresholds."""
    _, ap, _, _, n_pos, _ = _summary(scores, labels)
    if n_pos == 0:
        raise UndefinedMetricError("average precision needs at least one positive")
    return ap


def f1(scores, labels, threshold=0.5):
    s, y = _prepare(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    if tp == 0:
        return 0.0
    return 2.0 * tp / (2 * tp + fp + fn)


def best_f1(scores, labels):
    """(max F1 over all distinct score thresholds, its threshold); ties pick the lower threshold."""
    _, _, best, thr, _, _ = _summary(scores, labels)
    return max(best, 0.0), thr


def hit_rate(scores, labels, threshold):
    """Fraction of positives among samples scored at or above ``threshold``.

    Returns ``(rate, recalled)``; ``rate`` is None when nothing is recalled.
    """
    s, y = _prepare(scores, labels)
    recalled = s >= threshold
    count = int(recalled.sum())
    if count == 0:
        return None, 0
    return float(y[recalled].mean()), count


def threshold_for_budget(scores, budget):
    """Highest threshold recalling at least ``budget`` samples."""
    s = np.sort(np.asarray(scores, dtype=np.float64).ravel())[::-1]
    if s.size == 0:
        raise UndefinedMetricError("no scores")
    budget = min(max(int(budget), 1), s.size)
    return float(s[budget - 1])


@dataclass
class MetricsReport:
    roc_auc: float
    pr_auc: float
    f1_at_half: float
    best_f1: float
    best_f1_threshold: float
    hit_rate: float | None
    hit_rate_threshold: float
    hit_rate_recalled: int
    n_pos: int
    n_neg: int

    def as_dict(self):
        return asdict(self)


def evaluate(scores, labels, recall_budget=None):
    """Full report. The hit-rate threshold recalls ``recall_budget`` samples
    (default: as many as there are positives)."""
    s, y = _prepare(scores, labels)
    if s.size == 0:
        raise UndefinedMetricError("empty evaluation set")
    n_pos = int(y.sum())
    bf1, thr = best_f1(s, y)
    budget = n_pos if recall_budget is None else recall_budget
    hr_thr = threshold_for_budget(s, budget)
    rate, recalled = hit_rate(s, y, hr_thr)
    return MetricsReport(
        roc_auc=roc_auc(s, y),
        pr_auc=pr_auc(s, y),
        f1_at_half=f1(s, y, 0.5),
        best_f1=bf1,
        best_f1_threshold=thr,
        hit_rate=rate,
        hit_rate_threshold=hr_thr,
        hit_rate_recalled=recalled,
        n_pos=n_pos,
        n_neg=int(y.size - n_pos),
    )


@dataclass
class ConfidenceTable:
    """Mean teacher loss by student correctness (rows) x true class (columns).

    ``means[row][col]`` is None for an empty cell; col "all" pools both classes.
    """

    means: dict
    counts: dict

    ROWS = ("correct", "incorrect")
    COLS = ("neg", "pos", "all")

    def empty_cells(self):
        return [(r, c) for r in self.ROWS for c in self.COLS if self.counts[r][c] == 0]

    @property
    def total(self):
        return sum(self.counts[r]["all"] for r in self.ROWS)

    def ratio(self):
        """Incorrect-over-correct mean teacher loss (overall column)."""
        c, i = self.means["correct"]["all"], self.means["incorrect"]["all"]
        if c is None or i is None or c == 0:
            return None
        return i / c


def confidence_table(teacher_losses, student_scores, labels, threshold=0.5):
    loss = np.asarray(teacher_losses, dtype=np.float64).ravel()
    s = np.asarray(student_scores, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.int64).ravel()
    if not loss.shape == s.shape == y.shape:
        raise ShapeError(f"lengths differ: {loss.size} losses, {s.size} scores, {y.size} labels")
    correct = (s >= threshold).astype(np.int64) == y
    means, counts = {}, {}
    for row, mask_row in (("correct", correct), ("incorrect", ~correct)):
        means[row], counts[row] = {}, {}
        for col, mask_col in (("neg", y == 0), ("pos", y == 1), ("all", np.ones_like(correct))):
            m = mask_row & mask_col
            n = int(m.sum())
            counts[row][col] = n
            means[row][col] = float(loss[m].mean()) if n else None
    return ConfidenceTable(means, counts)
