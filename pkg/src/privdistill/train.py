"""Training loops for the teacher and the three student modes.

Student modes differ only in the per-sample weight vector fed to the fused
objective: ``plain`` uses zeros, ``pfd`` a constant, ``cpfd`` the mapped
teacher loss. Keeping one code path makes the degenerate modes agree
bit-for-bit with each other.
"""
from __future__ import annotations

import hashlib
import time
from dataclasses import asdict, dataclass, field, is_dataclass

import numpy as np

from . import ndcore
from .confmap import MappingConfig, default_config_from_stats, map_alpha
from .errors import ConfigError, NumericalError, ShapeError
from .losses import breakdown_from_parts
from .metrics import roc_auc
from .nn import MlpSpec, StudentModel, TeacherModel, load_checkpoint, positive_scores, save_checkpoint

MODES = ("teacher", "plain", "pfd", "cpfd")


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "teacher"
    epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 1e-3
    lr_decay: float = 0.9
    temperature: float = 1.0
    alpha: float = 0.5
    # cpfd: a MappingConfig, or a kind name to calibrate from TeacherStats
    mapping: object = None
    seed: int = 0
    eval_every: int = 1

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.epochs <= 0 or self.batch_size <= 0 or self.eval_every <= 0:
            raise ConfigError("epochs, batch_size and eval_every must be positive")
        if not self.learning_rate > 0 or not self.lr_decay > 0:
            raise ConfigError("learning_rate and lr_decay must be positive")
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.mode == "pfd" and not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"pfd alpha must lie in [0, 1], got {self.alpha}")
        if self.mode == "cpfd" and self.mapping is None:
            raise ConfigError("cpfd mode requires a mapping (config or kind)")
        return self

    def canonical(self):
        d = asdict(self)
        if is_dataclass(self.mapping):
            d["mapping"] = asdict(self.mapping)
        return repr(sorted(d.items()))

    @property
    def config_hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:12]


def lr_at(epoch, config):
    return config.learning_rate * config.lr_decay**epoch


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self, lr):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.value -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    l_cls: float
    l_distill: float
    l_student: float
    alpha: float


@dataclass
class TrainLog:
    mode: str
    seed: int
    config_hash: str
    initial_loss: float
    epochs: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # (epoch, eval roc auc)
    best_epoch: int = 0
    wall_clock: float = 0.0

    def trajectory(self):
        """Everything except identity fields and timing; equal for equivalent runs."""
        return (self.initial_loss, [asdict(e) for e in self.epochs], list(self.snapshots), self.best_epoch)

    def text(self):
        """Line-oriented log. Wall-clock time is left out so reruns are byte-identical."""
        lines = [
            f"#privdistill-trainlog-v1 mode={self.mode} seed={self.seed} config={self.config_hash}",
            f"initial_loss {self.initial_loss:.17g}",
        ]
        snaps = dict(self.snapshots)
        for e in self.epochs:
            auc = snaps.get(e.epoch)
            lines.append(
                f"epoch {e.epoch} lr={e.lr:.17g} l_cls={e.l_cls:.17g} l_distill={e.l_distill:.17g} "
                f"l_student={e.l_student:.17g} alpha={e.alpha:.17g}"
                + (f" eval_roc_auc={auc:.17g}" if auc is not None else "")
            )
        lines.append(f"best_epoch {self.best_epoch}")
        return "\n".join(lines) + "\n"


def _snapshot(model):
    return [p.value.copy() for p in model.parameters()]


def _restore(model, values):
    for p, v in zip(model.parameters(), values):
        p.value[...] = v


def _check_finite(epoch, batch, loss, params):
    if not np.isfinite(loss):
        raise NumericalError(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")
    for p in params:
        if not np.all(np.isfinite(p.value)):
            raise NumericalError(f"non-finite values in {p.name} after epoch {epoch}, batch {batch}")


def _fit(model, config, batch_loss, n, eval_score, full_loss):
    """Shared mini-batch Adam loop.

    ``batch_loss(tape, idx)`` returns (mean-loss Var, l_cls, l_kl, alphas).
    """
    started = time.perf_counter()
    params = model.parameters()
    opt = Adam(params)
    rng = np.random.default_rng([config.seed, 7])
    log = TrainLog(config.mode, config.seed, config.config_hash, initial_loss=full_loss())
    best_auc, best_params = -np.inf, _snapshot(model)
    for epoch in range(config.epochs):
        lr = lr_at(epoch, config)
        order = rng.permutation(n)
        sums = np.zeros(4)
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            opt.zero_grad()
            tape = ndcore.GradTape()
            loss, l_cls, l_kl, alphas = batch_loss(tape, idx)
            tape.backward(loss)
            value = float(loss.value[0, 0])
            opt.step(lr)
            _check_finite(epoch, b, value, params)
            sums += (l_cls.sum(), l_kl.sum(), value * idx.size, alphas.sum())
        means = sums / n
        log.epochs.append(EpochRecord(epoch + 1, lr, *map(float, means[:3]), float(means[3])))
        if (epoch + 1) % config.eval_every == 0 or epoch + 1 == config.epochs:
            auc = eval_score()
            log.snapshots.append((epoch + 1, auc))
            if auc > best_auc:
                best_auc, best_params, log.best_epoch = auc, _snapshot(model), epoch + 1
    _restore(model, best_params)
    log.wall_clock = time.perf_counter() - started
    return log


def default_raw_spec(d_raw):
    return MlpSpec((d_raw, 64, 32))


def default_priv_spec(d_priv):
    return MlpSpec((d_priv, 32, 16))


def train_teacher(config, train, eval_set, raw_spec=None, priv_spec=None):
    config.validate()
    if config.mode != "teacher":
        raise ConfigError(f"train_teacher needs mode=teacher, got {config.mode}")
    if train.d_raw != eval_set.d_raw or train.d_priv != eval_set.d_priv:
        raise ShapeError("train and eval feature widths differ")
    raw_spec = raw_spec or default_raw_spec(train.d_raw)
    priv_spec = priv_spec or default_priv_spec(train.d_priv)
    if raw_spec.in_features != train.d_raw or priv_spec.in_features != train.d_priv:
        raise ShapeError(
            f"encoder inputs ({raw_spec.in_features}, {priv_spec.in_features}) vs "
            f"data widths ({train.d_raw}, {train.d_priv})"
        )
    model = TeacherModel.build(raw_spec, priv_spec, train.n_classes, seed=config.seed)
    zeros = np.zeros(len(train))

    def batch_loss(tape, idx):
        logits = model.record(tape, train.raw[idx], train.priv[idx])
        col = ndcore.softmax_cross_entropy(logits, train.labels[idx])
        return ndcore.mean(col), col.value[:, 0], zeros[: idx.size], zeros[: idx.size]

    def full_loss():
        tape = ndcore.GradTape()
        col = ndcore.softmax_cross_entropy(tape.leaf(model.logits(train.raw, train.priv)), train.labels)
        return float(col.value.mean())

    def eval_score():
        return roc_auc(positive_scores(model.logits(eval_set.raw, eval_set.priv)), eval_set.labels)

    log = _fit(model, config, batch_loss, len(train), eval_score, full_loss)
    return model, log


def resolve_mapping(config, stats):
    m = config.mapping
    if isinstance(m, MappingConfig):
        return m.validate()
    if isinstance(m, str):
        if stats is None:
            raise ConfigError(f"cpfd mapping kind {m!r} needs teacher statistics to calibrate")
        return default_config_from_stats(m, stats)
    raise ConfigError("cpfd mode requires a mapping")


def student_alphas(config, records, stats=None):
    n = len(records)
    if config.mode == "plain":
        return np.zeros(n)
    if config.mode == "pfd":
        return np.full(n, float(config.alpha))
    if config.mode == "cpfd":
        return np.ascontiguousarray(map_alpha(resolve_mapping(config, stats), records.teacher_loss), dtype=np.float64)
    raise ConfigError(f"train_student needs a student mode, got {config.mode}")


def train_student(config, records, eval_set, stats=None, raw_spec=None):
    config.validate()
    if config.mode not in ("plain", "pfd", "cpfd"):
        raise ConfigError(f"train_student needs mode plain/pfd/cpfd, got {config.mode}")
    if records.d_raw != eval_set.d_raw:
        raise ShapeError(f"records d_raw={records.d_raw} vs eval d_raw={eval_set.d_raw}")
    raw_spec = raw_spec or default_raw_spec(records.d_raw)
    alphas = student_alphas(config, records, stats)
    model = StudentModel.build(raw_spec, records.n_classes, seed=config.seed)
    temperature = config.temperature

    def objective(tape, logits, idx):
        col, l_cls, l_kl = ndcore.distill_objective(
            logits, records.teacher_logits[idx], records.labels[idx], alphas[idx], temperature
        )
        return col, l_cls, l_kl

    def batch_loss(tape, idx):
        col, l_cls, l_kl = objective(tape, model.record(tape, records.raw[idx]), idx)
        return ndcore.mean(col), l_cls, l_kl, alphas[idx]

    def full_loss():
        tape = ndcore.GradTape()
        idx = np.arange(len(records))
        col, _, _ = objective(tape, tape.leaf(model.logits(records.raw)), idx)
        return float(col.value.mean())

    def eval_score():
        return roc_auc(positive_scores(model.logits(eval_set.raw)), eval_set.labels)

    log = _fit(model, config, batch_loss, len(records), eval_score, full_loss)
    return model, log


def student_breakdown(model, records, alphas, temperature):
    """Loss breakdown of a trained student over the whole record set."""
    tape = ndcore.GradTape()
    _, l_cls, l_kl = ndcore.distill_objective(
        tape.leaf(model.logits(records.raw)), records.teacher_logits, records.labels, alphas, temperature
    )
    return breakdown_from_parts(l_cls, l_kl, alphas)


__all__ = [
    "TrainConfig",
    "TrainLog",
    "Adam",
    "lr_at",
    "train_teacher",
    "train_student",
    "save_checkpoint",
    "load_checkpoint",
]
