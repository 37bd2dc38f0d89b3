"""Independent reference implementations used by the tests.

Everything here is plain Python over lists with the ``math`` module: no
numpy, no shared code with the package, O(n^2) where that is simplest.
"""
import math
from fractions import Fraction

EPS = 1e-12


def softmax(logits, t=1.0):
    z = [v / t for v in logits]
    m = max(z)
    e = [math.exp(v - m) for v in z]
    s = math.fsum(e)
    return [v / s for v in e]


def cross_entropy(probs, label):
    return -math.log(max(probs[label], EPS))


def kl_distill(teacher_logits, student_logits, t):
    qt = softmax(teacher_logits, t)
    qs = softmax(student_logits, t)
    return t * t * math.fsum(p * (math.log(p) - math.log(q)) for p, q in zip(qt, qs) if p > 0)


def student_loss(student_logits, teacher_logits, label, alpha, t):
    l_cls = cross_entropy(softmax(student_logits, 1.0), label)
    return (1 - alpha) * l_cls + alpha * kl_distill(teacher_logits, student_logits, t)


def roc_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def _confusion(scores, labels, thr):
    tp = sum(1 for s, y in zip(scores, labels) if s >= thr and y == 1)
    fp = sum(1 for s, y in zip(scores, labels) if s >= thr and y == 0)
    fn = sum(1 for s, y in zip(scores, labels) if s < thr and y == 1)
    return tp, fp, fn


def average_precision(scores, labels):
    n_pos = sum(labels)
    ap, prev_recall = 0.0, 0.0
    for thr in sorted(set(scores), reverse=True):
        tp, fp, _ = _confusion(scores, labels, thr)
        recall = tp / n_pos
        ap += (recall - prev_recall) * (tp / (tp + fp))
        prev_recall = recall
    return ap


def f1(scores, labels, thr):
    tp, fp, fn = _confusion(scores, labels, thr)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0


def best_f1(scores, labels):
    """Exact rational F1 so ties are real ties; the lowest tied threshold wins."""
    best, best_thr = Fraction(-1), None
    for thr in sorted(set(scores)):  # ascending, strict >
        tp, fp, fn = _confusion(scores, labels, thr)
        v = Fraction(2 * tp, 2 * tp + fp + fn) if tp else Fraction(0)
        if v > best:
            best, best_thr = v, thr
    return float(best), best_thr


def hit_rate(scores, labels, thr):
    hits = [y for s, y in zip(scores, labels) if s >= thr]
    if not hits:
        return None, 0
    return sum(hits) / len(hits), len(hits)


def map_alpha(kind, l, p):
    if kind == "threshold":
        return 0.9 if l < p["tau"] else 0.1
    if kind == "neg_sigmoid":
        x = p["beta"] * (l - p["l_center"])
        return 1.0 / (1.0 + math.exp(x)) if x < 700 else 0.0
    if kind == "tanh":
        return 0.5 * (math.tanh(-p["beta"] * (l - p["l_center"])) + 1.0)
    if kind == "exp_decay":
        lc = min(max(l, p["l_min"]), p["l_max"])
        k = -math.log(p["alpha_min"] / p["alpha_max"]) / (p["l_max"] - p["l_min"])
        return p["alpha_max"] * math.exp(-k * (lc - p["l_min"]))
    return p["constant_alpha"]


def nearest_rank(values, pct):
    v = sorted(values)
    rank = max(1, math.ceil(pct * len(v) / 100))
    return v[rank - 1]


def central_difference(f, x, h=1e-5):
    """Gradient of scalar ``f`` at the flat list ``x``."""
    g = []
    for i in range(len(x)):
        xp = list(x)
        xm = list(x)
        xp[i] += h
        xm[i] -= h
        g.append((f(xp) - f(xm)) / (2 * h))
    return g


def rel_error(a, b):
    """||a - b|| / max(||a||, ||b||), with a tiny floor for all-zero gradients."""
    diff = math.sqrt(math.fsum((u - v) ** 2 for u, v in zip(a, b)))
    scale = max(math.sqrt(math.fsum(u * u for u in a)), math.sqrt(math.fsum(v * v for v in b)), 1e-12)
    return diff / scale
