import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from privdistill import metrics
from privdistill.errors import ShapeError, UndefinedMetricError

import oracles


def test_roc_auc_examples():
    assert metrics.roc_auc([0.9, 0.8, 0.3, 0.2], [1, 1, 0, 0]) == 1.0
    assert metrics.roc_auc([0.9, 0.2, 0.8, 0.3], [1, 0, 0, 1]) == 0.75
    assert metrics.roc_auc([0.4] * 6, [1, 0, 1, 0, 0, 0]) == 0.5
    with pytest.raises(UndefinedMetricError):
        metrics.roc_auc([0.1, 0.2], [1, 1])


def test_pr_auc_examples():
    assert metrics.pr_auc([0.9, 0.1], [1, 0]) == 1.0
    assert metrics.pr_auc([0.9, 0.8, 0.1], [0, 1, 0]) == 0.5
    assert metrics.pr_auc([0.4, 0.3, 0.2, 0.1], [0, 0, 0, 1]) == 0.25
    with pytest.raises(UndefinedMetricError):
        metrics.pr_auc([0.1, 0.2], [0, 0])


def test_f1_examples():
    assert metrics.f1([0.9, 0.1], [1, 0]) == 1.0
    assert metrics.f1([0.9, 0.8, 0.1], [1, 0, 1], 0.5) == 0.5  # TP=FP=FN=1
    assert metrics.f1([0.9, 0.1], [1, 0], 0.95) == 0.0


def test_best_f1_ties_take_lower_threshold():
    # thresholds 0.8 and 0.6 both give F1 = 2/3
    f, thr = metrics.best_f1([0.8, 0.7, 0.6, 0.1], [1, 0, 1, 0])
    assert f == pytest.approx(0.8) and thr == 0.6
    f, thr = metrics.best_f1([0.9, 0.5, 0.4, 0.3], [1, 0, 0, 1])
    assert (f, thr) == oracles.best_f1([0.9, 0.5, 0.4, 0.3], [1, 0, 0, 1])


def test_hit_rate_examples():
    scores, labels = [0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0]
    assert metrics.hit_rate(scores, labels, -np.inf) == (0.5, 4)
    assert metrics.hit_rate([0.9, 0.8, 0.2], [1, 1, 0], 0.5) == (1.0, 2)
    assert metrics.hit_rate([0.9, 0.8, 0.7], [1, 0, 1], 0.75) == (0.5, 2)
    assert metrics.hit_rate([0.9], [1], 0.95) == (None, 0)


def test_shape_errors():
    with pytest.raises(ShapeError):
        metrics.roc_auc([0.1, 0.2], [1])
    with pytest.raises(ShapeError):
        metrics.roc_auc([0.1, 0.2], [1, 2])


def _instance(rng):
    n = int(rng.integers(2, 51))
    ties = rng.random() < 0.5
    s = rng.integers(0, 6, n) / 5.0 if ties else rng.random(n)
    y = rng.integers(0, 2, n)
    y[0], y[1] = 1, 0
    return s, y


def test_metrics_match_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(400):
        s, y = _instance(rng)
        ls, ly = list(map(float, s)), list(map(int, y))
        assert abs(metrics.roc_auc(s, y) - oracles.roc_auc(ls, ly)) <= 1e-12
        assert abs(metrics.pr_auc(s, y) - oracles.average_precision(ls, ly)) <= 1e-12
        bf, bt = metrics.best_f1(s, y)
        of, ot = oracles.best_f1(ls, ly)
        assert abs(bf - of) <= 1e-12 and bt == ot
        thr = float(rng.choice(s))
        assert abs(metrics.f1(s, y, thr) - oracles.f1(ls, ly, thr)) <= 1e-12
        assert metrics.hit_rate(s, y, thr) == oracles.hit_rate(ls, ly, thr)


def test_roc_auc_invariant_to_monotone_transform():
    rng = np.random.default_rng(1)
    for _ in range(50):
        s, y = _instance(rng)
        assert metrics.roc_auc(np.exp(3 * s) + 1, y) == metrics.roc_auc(s, y)


def test_roc_auc_negation_complements_without_ties():
    rng = np.random.default_rng(2)
    for _ in range(50):
        n = int(rng.integers(2, 50))
        s, y = rng.random(n), rng.integers(0, 2, n)
        y[:2] = (1, 0)
        assert abs(metrics.roc_auc(s, y) + metrics.roc_auc(-s, y) - 1.0) <= 1e-12


def test_pr_auc_one_iff_perfect_ranking():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(2, 20))
        s, y = rng.random(n), rng.integers(0, 2, n)
        y[:2] = (1, 0)
        perfect = s[y == 1].min() > s[y == 0].max()
        assert (metrics.pr_auc(s, y) == 1.0) == perfect


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 1)), min_size=2, max_size=30), st.integers(0, 4))
def test_best_f1_dominates_fixed_threshold(pairs, t):
    s = np.array([p[0] / 4 for p in pairs])
    y = np.array([p[1] for p in pairs])
    assert metrics.best_f1(s, y)[0] >= metrics.f1(s, y, t / 4)


def test_evaluate_report():
    rng = np.random.default_rng(4)
    y = (rng.random(300) < 0.2).astype(int)
    s = np.clip(0.3 * y + rng.random(300) * 0.7, 0, 1)
    r = metrics.evaluate(s, y)
    assert r.n_pos + r.n_neg == 300
    for v in (r.roc_auc, r.pr_auc, r.f1_at_half, r.best_f1, r.hit_rate):
        assert 0 <= v <= 1
    assert r.hit_rate_recalled >= r.n_pos
    with pytest.raises(UndefinedMetricError):
        metrics.evaluate([], [])


def test_confidence_table_cells():
    table = metrics.confidence_table([0.1, 0.2, 0.3, 0.4], [0.1, 0.9, 0.9, 0.1], [0, 1, 0, 1])
    m = table.means
    assert m["correct"]["neg"] == 0.1 and m["correct"]["pos"] == 0.2
    assert m["incorrect"]["neg"] == 0.3 and m["incorrect"]["pos"] == 0.4
    assert table.total == 4 and not table.empty_cells()
    assert table.ratio() == pytest.approx(0.35 / 0.15)


def test_confidence_table_empty_row_flagged():
    table = metrics.confidence_table([0.1, 0.2], [0.1, 0.9], [0, 1])
    assert ("incorrect", "all") in table.empty_cells()
    assert table.means["incorrect"]["all"] is None and table.ratio() is None
    with pytest.raises(ShapeError):
        metrics.confidence_table([0.1], [0.1, 0.9], [0, 1])
