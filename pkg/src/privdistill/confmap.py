"""Per-sample distillation weight from teacher loss.

Low teacher loss (a confident, correct teacher) maps to a high weight on the
distillation term; high teacher loss shifts weight to the hard label.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import CalibrationError, ParameterError

KINDS = ("threshold", "neg_sigmoid", "tanh", "exp_decay", "constant")
MAPPING_KINDS = ("threshold", "neg_sigmoid", "tanh", "exp_decay")
STATS_EPS = 1e-12


@dataclass(frozen=True)
class MappingConfig:
    kind: str
    tau: float = 0.1
    beta: float = 1.0
    l_center: float = 0.0
    alpha_max: float = 0.9
    alpha_min: float = 0.1
    l_min: float = 0.0
    l_max: float = 1.0
    constant_alpha: float = 0.5
    alpha_high: float = 0.9
    alpha_low: float = 0.1

    def validate(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown mapping kind {self.kind!r}; choose from {KINDS}")
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name != "kind" and not math.isfinite(v):
                raise ParameterError(f"mapping parameter {f.name} must be finite, got {v}")
        if self.kind == "threshold":
            if self.tau <= 0:
                raise ParameterError(f"tau must be positive, got {self.tau}")
            if not (0 <= self.alpha_low <= 1 and 0 <= self.alpha_high <= 1):
                raise ParameterError("threshold alphas must lie in [0, 1]")
        elif self.kind in ("neg_sigmoid", "tanh"):
            if self.beta <= 0:
                raise ParameterError(f"beta must be positive, got {self.beta}")
        elif self.kind == "exp_decay":
            if not 0 < self.alpha_max <= 1:
                raise ParameterError(f"alpha_max must lie in (0, 1], got {self.alpha_max}")
            # alpha_min = 0 would give an infinite decay rate
            if not 0 < self.alpha_min < self.alpha_max:
                raise ParameterError(f"need 0 < alpha_min < alpha_max, got {self.alpha_min}, {self.alpha_max}")
            if not self.l_min < self.l_max:
                raise ParameterError(f"need l_min < l_max, got {self.l_min}, {self.l_max}")
        elif not 0 <= self.constant_alpha <= 1:
            raise ParameterError(f"constant_alpha must lie in [0, 1], got {self.constant_alpha}")
        return self

    @property
    def decay_rate(self):
        return -math.log(self.alpha_min / self.alpha_max) / (self.l_max - self.l_min)

    def with_overrides(self, **kw):
        return replace(self, **kw).validate()


def map_alpha(config, l_teacher):
    """Distillation weight for a scalar or array of teacher losses."""
    config.validate()
    l = np.asarray(l_teacher, dtype=np.float64)
    kind = config.kind
    if kind == "threshold":
        a = np.where(l < config.tau, config.alpha_high, config.alpha_low)
    elif kind == "neg_sigmoid":
        with np.errstate(over="ignore"):
            a = 1.0 / (1.0 + np.exp(config.beta * (l - config.l_center)))
    elif kind == "tanh":
        a = 0.5 * (np.tanh(-config.beta * (l - config.l_center)) + 1.0)
    elif kind == "exp_decay":
        lc = np.clip(l, config.l_min, config.l_max)
        a = config.alpha_max * np.exp(-config.decay_rate * (lc - config.l_min))
    else:
        a = np.full(l.shape, config.constant_alpha)
    a = np.clip(a, 0.0, 1.0)
    return float(a) if a.ndim == 0 else a


@dataclass(frozen=True)
class TeacherStats:
    n: int
    p01: float
    p50: float
    p99: float
    mean: float


def nearest_rank(sorted_values, pct):
    n = len(sorted_values)
    rank = max(1, math.ceil(pct / 100.0 * n))
    return float(sorted_values[rank - 1])


def calibrate(teacher_losses, min_samples=100):
    values = np.sort(np.asarray(teacher_losses, dtype=np.float64).ravel())
    if values.size < min_samples:
        raise CalibrationError(f"need at least {min_samples} teacher losses, got {values.size}")
    if not np.all(np.isfinite(values)):
        raise CalibrationError("teacher losses must be finite")
    return TeacherStats(
        n=int(values.size),
        p01=nearest_rank(values, 1),
        p50=nearest_rank(values, 50),
        p99=nearest_rank(values, 99),
        mean=float(values.mean()),
    )


def default_config_from_stats(kind, stats, **overrides):
    if stats.p99 > stats.p01:
        beta = 4.0 / (stats.p99 - stats.p01 + STATS_EPS)
        l_min, l_max = stats.p01, stats.p99
    else:
        beta = 1.0
        l_min, l_max = stats.p01 - 0.5, stats.p99 + 0.5
    cfg = MappingConfig(
        kind=kind,
        tau=max(stats.p50, STATS_EPS),
        beta=beta,
        l_center=stats.p50,
        alpha_max=0.9,
        alpha_min=0.1,
        l_min=l_min,
        l_max=l_max,
    )
    return cfg.with_overrides(**overrides) if overrides else cfg.validate()


def alpha_curve(config, n_points=51):
    """Sampled (loss, alpha) pairs over [l_min, l_max] of ``config``."""
    grid = np.linspace(config.l_min, config.l_max, n_points)
    return grid, np.asarray(map_alpha(config, grid))
