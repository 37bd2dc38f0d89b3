"""Classification, distillation and combined student losses.

The student objective per sample is ``(1 - a) * CE(q_s, y) + a * T^2 *
KL(q_t(T) || q_s(T))``. Teacher logits enter as constants. The per-sample
teacher cross-entropy at T=1 is the confidence signal fed to
:mod:`privdistill.confmap`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ParameterError, ShapeError
from .ndcore import PROB_EPS, as_matrix, softmax_t


def _check_label(label, k):
    if not 0 <= int(label) < k:
        raise ParameterError(f"label {label} out of range for {k} classes")


def cross_entropy(student_probs, label):
    p = np.asarray(student_probs, dtype=np.float64)
    _check_label(label, p.shape[-1])
    return float(-np.log(max(p[int(label)], PROB_EPS)))


def kl_distill(teacher_logits, student_logits, temperature=1.0):
    t = np.asarray(teacher_logits, dtype=np.float64)
    s = np.asarray(student_logits, dtype=np.float64)
    if t.shape != s.shape:
        raise ShapeError(f"teacher logits {t.shape} vs student logits {s.shape}")
    if not temperature > 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    z_t = t / temperature
    z_s = s / temperature
    log_qt = z_t - z_t.max() - np.log(np.exp(z_t - z_t.max()).sum())
    log_qs = z_s - z_s.max() - np.log(np.exp(z_s - z_s.max()).sum())
    kl = temperature**2 * float(np.sum(np.exp(log_qt) * (log_qt - log_qs)))
    return max(kl, 0.0)


def combined_loss(l_cls, l_distill, alpha):
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")
    return (1.0 - alpha) * l_cls + alpha * l_distill


def teacher_sample_loss(teacher_logits, label):
    return cross_entropy(softmax_t(teacher_logits, 1.0), label)


def teacher_losses(teacher_logits, labels):
    """Vectorized :func:`teacher_sample_loss` over a batch."""
    logits = as_matrix(teacher_logits, "teacher logits")
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if labels.shape[0] != logits.shape[0]:
        raise ShapeError(f"{logits.shape[0]} logit rows vs {labels.shape[0]} labels")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ParameterError("label out of range")
    loss, _ = kernels.ce_loss_grad(logits, labels, PROB_EPS)
    return loss


@dataclass
class LossBreakdown:
    l_cls: float
    l_distill: float
    alpha: float
    l_student: float
    per_cls: np.ndarray
    per_distill: np.ndarray
    per_alpha: np.ndarray
    per_student: np.ndarray

    @property
    def n(self):
        return self.per_student.shape[0]


def breakdown_from_parts(l_cls, l_kl, alphas):
    per = (1.0 - alphas) * l_cls + alphas * l_kl
    return LossBreakdown(
        l_cls=float(l_cls.mean()),
        l_distill=float(l_kl.mean()),
        alpha=float(alphas.mean()),
        l_student=float(per.mean()),
        per_cls=l_cls,
        per_distill=l_kl,
        per_alpha=alphas,
        per_student=per,
    )


def batch_student_loss(student_logits, teacher_logits, labels, alphas, temperature=1.0):
    """Per-sample combined loss averaged uniformly over the batch."""
    s = as_matrix(student_logits, "student logits")
    t = as_matrix(teacher_logits, "teacher logits")
    if s.shape != t.shape:
        raise ShapeError(f"student logits {s.shape} vs teacher logits {t.shape}")
    if s.shape[0] == 0:
        raise ParameterError("empty batch")
    if not temperature > 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    alphas = np.ascontiguousarray(np.broadcast_to(alphas, (s.shape[0],)), dtype=np.float64)
    if labels.shape[0] != s.shape[0]:
        raise ShapeError(f"{s.shape[0]} logit rows vs {labels.shape[0]} labels")
    if labels.min() < 0 or labels.max() >= s.shape[1]:
        raise ParameterError("label out of range")
    if alphas.min() < 0.0 or alphas.max() > 1.0:
        raise ParameterError("per-sample alphas must lie in [0, 1]")
    l_cls, l_kl, _ = kernels.distill_loss_grad(s, t, labels, alphas, float(temperature), PROB_EPS)
    return breakdown_from_parts(l_cls, l_kl, alphas)
