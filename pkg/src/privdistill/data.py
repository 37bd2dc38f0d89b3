"""Synthetic privileged-feature data, splitting, and on-disk formats.

A latent vector ``h`` drives the label through a logistic link. Raw features
are a noisy linear view of ``h``; privileged features are a much cleaner
view plus a few post-hoc coordinates that depend on the label itself
(think "count of user reports", which only exists after the fact).

File format (text, one record per line)::

    #privdistill-v1 d_raw=32 d_priv=18 K=2
    id,label,raw_0,...,raw_{d_raw-1},priv_0,...

Distillation records use the same framing with ``kind=distill`` in the
header and ``teacher_logit_0..K-1,teacher_loss`` in place of the
privileged columns.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ParseError, SchemaError, ShapeError
from .losses import teacher_losses
from .nn import write_atomic

MAGIC = "#privdistill-v1"


@dataclass(frozen=True)
class GenConfig:
    n_samples: int = 24000
    d_latent: int = 16
    d_raw: int = 32
    d_priv: int = 16
    n_posthoc: int = 2
    positive_rate: float = 0.1
    raw_noise: float = 1.0
    priv_noise: float = 0.25
    post_hoc_strength: float = 2.0
    label_scale: float = 3.0
    share_projection: bool = False
    seed: int = 0

    def validate(self):
        for name in ("n_samples", "d_latent", "d_raw"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        if self.d_priv < 0 or self.n_posthoc < 0 or self.d_priv + self.n_posthoc == 0:
            raise ParameterError("need at least one privileged column")
        if not 0.0 < self.positive_rate < 1.0:
            raise ParameterError(f"positive_rate must lie strictly in (0, 1), got {self.positive_rate}")
        if self.raw_noise < 0 or self.priv_noise < 0 or self.post_hoc_strength < 0:
            raise ParameterError("noise scales and post_hoc_strength must be non-negative")
        if self.priv_noise > self.raw_noise:
            raise ParameterError("priv_noise must not exceed raw_noise")
        if self.share_projection and self.d_priv != self.d_raw:
            raise ParameterError("share_projection requires d_priv == d_raw")
        return self

    @property
    def d_priv_total(self):
        return self.d_priv + self.n_posthoc


@dataclass
class Sample:
    id: int
    raw: np.ndarray
    privileged: np.ndarray
    label: int


@dataclass
class Dataset:
    ids: np.ndarray
    labels: np.ndarray
    raw: np.ndarray
    priv: np.ndarray
    n_classes: int = 2

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.raw = np.ascontiguousarray(self.raw, dtype=np.float64)
        self.priv = np.ascontiguousarray(self.priv, dtype=np.float64)
        n = self.ids.shape[0]
        if not (self.labels.shape[0] == self.raw.shape[0] == self.priv.shape[0] == n):
            raise SchemaError("dataset columns have different lengths")

    def __len__(self):
        return self.ids.shape[0]

    def __getitem__(self, i):
        return Sample(int(self.ids[i]), self.raw[i], self.priv[i], int(self.labels[i]))

    @property
    def d_raw(self):
        return self.raw.shape[1]

    @property
    def d_priv(self):
        return self.priv.shape[1]

    @property
    def positive_rate(self):
        return float(self.labels.mean())

    def subset(self, idx):
        return Dataset(self.ids[idx], self.labels[idx], self.raw[idx], self.priv[idx], self.n_classes)

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and self.n_classes == other.n_classes
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.raw, other.raw)
            and np.array_equal(self.priv, other.priv)
        )


@dataclass
class DistillSet:
    """Frozen teacher outputs for training the student; no privileged columns."""

    ids: np.ndarray
    labels: np.ndarray
    raw: np.ndarray
    teacher_logits: np.ndarray
    teacher_loss: np.ndarray

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.raw = np.ascontiguousarray(self.raw, dtype=np.float64)
        self.teacher_logits = np.ascontiguousarray(self.teacher_logits, dtype=np.float64)
        self.teacher_loss = np.asarray(self.teacher_loss, dtype=np.float64)

    def __len__(self):
        return self.ids.shape[0]

    @property
    def d_raw(self):
        return self.raw.shape[1]

    @property
    def n_classes(self):
        return self.teacher_logits.shape[1]

    def __eq__(self, other):
        return isinstance(other, DistillSet) and all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("ids", "labels", "raw", "teacher_logits", "teacher_loss")
        )

    @classmethod
    def without_teacher(cls, dataset):
        """Records for label-only training: zero logits and zero teacher loss."""
        n = len(dataset)
        return cls(dataset.ids, dataset.labels, dataset.raw, np.zeros((n, dataset.n_classes)), np.zeros(n))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _calibrate_bias(z, u, target, iters=200):
    """Bias b such that mean(u < sigmoid(z + b)) is as close to target as bisection gets."""
    n = z.shape[0]
    lo, hi = -50.0, 50.0
    b = 0.0
    for _ in range(iters):
        b = 0.5 * (lo + hi)
        rate = np.mean(u < _sigmoid(z + b))
        if abs(rate - target) <= 0.5 / n:
            break
        if rate < target:
            lo = b
        else:
            hi = b
    return b


def generate(config):
    config.validate()
    rng = np.random.default_rng(config.seed)
    n, dl = config.n_samples, config.d_latent
    a = rng.standard_normal((config.d_raw, dl)) / np.sqrt(dl)
    b = a.copy() if config.share_projection else rng.standard_normal((config.d_priv, dl)) / np.sqrt(dl)
    w = rng.standard_normal(dl)
    w *= config.label_scale / np.linalg.norm(w)
    h = rng.standard_normal((n, dl))
    z = h @ w
    u = rng.random(n)
    bias = _calibrate_bias(z, u, config.positive_rate)
    y = (u < _sigmoid(z + bias)).astype(np.int64)
    raw_eps = rng.standard_normal((n, config.d_raw))
    raw = h @ a.T + config.raw_noise * raw_eps
    # a shared projection also shares the noise draw: the privileged block is then a
    # rescaled-noise copy of the raw view and adds no information when priv_noise == raw_noise
    priv_eps = raw_eps if config.share_projection else rng.standard_normal((n, config.d_priv))
    dense = h @ b.T + config.priv_noise * priv_eps
    posthoc = config.post_hoc_strength * y[:, None] + rng.standard_normal((n, config.n_posthoc))
    priv = np.hstack([dense, posthoc])
    return Dataset(np.arange(n), y, raw, priv, 2)


def split(dataset, eval_fraction, seed=0):
    """Stratified, seeded partition into (train, eval); both keep id order."""
    if not 0.0 < eval_fraction < 1.0:
        raise ParameterError(f"eval_fraction must lie in (0, 1), got {eval_fraction}")
    n = len(dataset)
    n_eval = int(round(eval_fraction * n))
    if n_eval == 0 or n_eval == n:
        raise ParameterError(f"eval_fraction {eval_fraction} leaves an empty side for {n} samples")
    rng = np.random.default_rng(seed)
    pos = np.flatnonzero(dataset.labels == 1)
    neg = np.flatnonzero(dataset.labels != 1)
    n_eval_pos = min(int(round(eval_fraction * pos.size)), n_eval, pos.size)
    n_eval_neg = n_eval - n_eval_pos
    if n_eval_neg > neg.size:
        n_eval_neg = neg.size
        n_eval_pos = n_eval - n_eval_neg
    pos = rng.permutation(pos)
    neg = rng.permutation(neg)
    eval_idx = np.sort(np.concatenate([pos[:n_eval_pos], neg[:n_eval_neg]]))
    mask = np.ones(n, dtype=bool)
    mask[eval_idx] = False
    return dataset.subset(np.flatnonzero(mask)), dataset.subset(eval_idx)


def export_distill(teacher, train):
    """Freeze teacher logits and per-sample teacher loss for every sample."""
    if teacher.d_raw != train.d_raw or teacher.d_priv != train.d_priv:
        raise ShapeError(
            f"teacher expects d_raw={teacher.d_raw}, d_priv={teacher.d_priv}; "
            f"dataset has d_raw={train.d_raw}, d_priv={train.d_priv}"
        )
    logits = teacher.logits(train.raw, train.priv)
    return DistillSet(train.ids, train.labels, train.raw, logits, teacher_losses(logits, train.labels))


# --- file IO ---------------------------------------------------------------

def _fmt_row(values):
    return ",".join(format(float(v), ".17g") for v in values)


def _header(fields):
    return MAGIC + " " + " ".join(f"{k}={v}" for k, v in fields.items())


def dataset_text(dataset):
    lines = [_header({"d_raw": dataset.d_raw, "d_priv": dataset.d_priv, "K": dataset.n_classes})]
    for i in range(len(dataset)):
        lines.append(f"{dataset.ids[i]},{dataset.labels[i]},{_fmt_row(dataset.raw[i])},{_fmt_row(dataset.priv[i])}")
    return "\n".join(lines) + "\n"


def distill_text(records):
    lines = [_header({"d_raw": records.d_raw, "K": records.n_classes, "kind": "distill"})]
    for i in range(len(records)):
        lines.append(
            f"{records.ids[i]},{records.labels[i]},{_fmt_row(records.raw[i])},"
            f"{_fmt_row(records.teacher_logits[i])},{format(float(records.teacher_loss[i]), '.17g')}"
        )
    return "\n".join(lines) + "\n"


def write_dataset(dataset, path):
    write_atomic(path, dataset_text(dataset))


def write_distill(records, path):
    write_atomic(path, distill_text(records))


def _parse_header(line, required):
    if not line.startswith(MAGIC):
        raise ParseError("missing '#privdistill-v1' header", 1)
    fields = {}
    for tok in line[len(MAGIC):].split():
        key, sep, value = tok.partition("=")
        if not sep:
            raise ParseError(f"bad header token {tok!r}", 1)
        fields[key] = value
    for key in required:
        if key not in fields:
            raise ParseError(f"header lacks {key}=", 1)
    return fields


def _read_rows(path, required):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty file", 1)
    return _parse_header(lines[0], required), lines[1:]


def _parse_line(line, lineno, width):
    parts = line.split(",")
    if len(parts) != width:
        raise SchemaError(f"line {lineno}: expected {width} columns, got {len(parts)}")
    try:
        ident, label = int(parts[0]), int(parts[1])
        values = [float(p) for p in parts[2:]]
    except ValueError as exc:
        raise ParseError(f"malformed value ({exc})", lineno) from None
    return ident, label, values


def read_dataset(path):
    header, rows = _read_rows(path, ("d_raw", "d_priv", "K"))
    if header.get("kind", "dataset") != "dataset":
        raise SchemaError(f"{path}: expected a dataset file, found kind={header['kind']}")
    d_raw, d_priv, k = int(header["d_raw"]), int(header["d_priv"]), int(header["K"])
    width = 2 + d_raw + d_priv
    ids, labels, values = _collect(rows, width, k)
    values = values.reshape(len(rows), width - 2)
    return Dataset(ids, labels, values[:, :d_raw], values[:, d_raw:], k)


def read_distill(path):
    header, rows = _read_rows(path, ("d_raw", "K", "kind"))
    if header["kind"] != "distill":
        raise SchemaError(f"{path}: expected kind=distill, found kind={header['kind']}")
    d_raw, k = int(header["d_raw"]), int(header["K"])
    width = 2 + d_raw + k + 1
    ids, labels, values = _collect(rows, width, k)
    values = values.reshape(len(rows), width - 2)
    return DistillSet(ids, labels, values[:, :d_raw], values[:, d_raw:d_raw + k], values[:, -1])


def _collect(rows, width, k):
    ids = np.empty(len(rows), dtype=np.int64)
    labels = np.empty(len(rows), dtype=np.int64)
    values = np.empty((len(rows), width - 2), dtype=np.float64)
    for i, line in enumerate(rows):
        lineno = i + 2
        n_cols = line.count(",") + 1
        # a short final record is an interrupted write; short records elsewhere are a schema change
        if n_cols < width and i == len(rows) - 1:
            raise ParseError(f"truncated record ({n_cols} of {width} columns)", lineno)
        ident, label, vals = _parse_line(line, lineno, width)
        if not 0 <= label < k:
            raise SchemaError(f"line {lineno}: label {label} outside [0, {k})")
        ids[i], labels[i] = ident, label
        values[i] = vals
    return ids, labels, values
