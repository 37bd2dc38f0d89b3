"""Numpy implementations of the compiled kernels in ``_kernels.pyx``.

Used when the extension is not built or when ``PRIVDISTILL_KERNELS=python``.
"""
import numpy as np


def _log_softmax(x, inv_t=1.0):
    z = x * inv_t
    m = z.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(z - m).sum(axis=1, keepdims=True))
    return z - lse


def ce_loss_grad(logits, labels, eps):
    n = logits.shape[0]
    rows = np.arange(n)
    lp = _log_softmax(logits)
    lp_y = lp[rows, labels]
    clamped = lp_y <= np.log(eps)
    loss = np.where(clamped, -np.log(eps), -lp_y)
    grad = np.exp(lp)
    grad[rows, labels] -= 1.0
    grad[clamped] = 0.0
    return loss, grad


def distill_loss_grad(student, teacher, labels, alpha, temperature, eps):
    n = student.shape[0]
    rows = np.arange(n)
    inv_t = 1.0 / temperature
    lp = _log_softmax(student)
    lqs = _log_softmax(student, inv_t)
    lqt = _log_softmax(teacher, inv_t)
    lp_y = lp[rows, labels]
    clamped = lp_y <= np.log(eps)
    l_cls = np.where(clamped, -np.log(eps), -lp_y)
    qt = np.exp(lqt)
    kl = (qt * (lqt - lqs)).sum(axis=1) * (temperature * temperature)
    l_kl = np.maximum(kl, 0.0)
    g_cls = np.exp(lp)
    g_cls[rows, labels] -= 1.0
    g_cls[clamped] = 0.0
    g_kl = temperature * (np.exp(lqs) - qt)
    a = alpha[:, None]
    grad = (1.0 - a) * g_cls + a * g_kl
    return l_cls, l_kl, grad


def ranking_summary(scores, labels):
    n = scores.shape[0]
    n_pos = int(labels.sum())
    n_neg = n - n_pos
    if n == 0:
        return 0.0, 0.0, -1.0, float("inf"), 0, 0
    # group boundaries of equal scores (input sorted descending)
    starts = np.flatnonzero(np.r_[True, scores[1:] != scores[:-1]])
    gp = np.add.reduceat(labels, starts).astype(np.int64)
    gn = np.diff(np.r_[starts, n]) - gp
    tp = np.cumsum(gp)
    fp = np.cumsum(gn)
    fp_before = fp - gn
    pairs = float(np.sum(gp * (n_neg - fp_before - gn) + 0.5 * gp * gn))
    ap = 0.0
    if n_pos > 0:
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    f1 = np.where(tp > 0, 2.0 * tp / np.maximum(2 * tp + fp + (n_pos - tp), 1), 0.0)
    # last maximum wins: equal F1 prefers the lower threshold
    best = len(f1) - 1 - int(np.argmax(f1[::-1]))
    return pairs, ap, float(f1[best]), float(scores[starts[best]]), n_pos, n_neg
