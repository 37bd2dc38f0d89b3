"""Models: MLP encoders, the two-branch teacher and the raw-only student.

The teacher encodes raw and privileged features separately and fuses the
two embeddings by concatenation followed by a linear head. The student is
a raw-feature encoder with its own linear head; it never receives
privileged features.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np

from . import ndcore
from .errors import ChecksumError, ParameterError, ParseError, SchemaError, ShapeError
from .ndcore import Linear, ReLU

CHECKPOINT_MAGIC = "#privdistill-ckpt-v1"


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths from input to output; relu between layers, none after the last."""

    widths: tuple

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) < 3:
            raise ParameterError(f"MLP needs input, >=1 hidden and output widths, got {widths}")
        if any(w <= 0 for w in widths):
            raise ParameterError(f"MLP widths must be positive, got {widths}")

    @property
    def in_features(self):
        return self.widths[0]

    @property
    def out_features(self):
        return self.widths[-1]


def glorot_linear(fan_in, fan_out, rng, name="linear"):
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return Linear(rng.uniform(-s, s, size=(fan_in, fan_out)), np.zeros(fan_out), name)


class Mlp:
    def __init__(self, layers, name="mlp"):
        self.layers = list(layers)
        self.name = name
        linears = [l for l in self.layers if isinstance(l, Linear)]
        if not linears:
            raise ParameterError("MLP needs at least one linear layer")
        self.in_features = linears[0].in_features
        self.out_features = linears[-1].out_features

    @property
    def widths(self):
        linears = [l for l in self.layers if isinstance(l, Linear)]
        return (linears[0].in_features,) + tuple(l.out_features for l in linears)

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def __call__(self, x, tape=None):
        return ndcore.forward(self.layers, x, tape)


def init_params(spec, seed=0, name="mlp", rng=None):
    """Glorot-uniform weights, zero biases. Deterministic in ``seed`` (or ``rng``)."""
    if rng is None:
        rng = np.random.default_rng(seed)
    layers = []
    w = spec.widths
    for i in range(len(w) - 1):
        layers.append(glorot_linear(w[i], w[i + 1], rng, f"{name}.{i}"))
        if i < len(w) - 2:
            layers.append(ReLU())
    return Mlp(layers, name)


def _check_width(x, expected, what):
    x = ndcore.as_matrix(x, what)
    if x.shape[1] != expected:
        raise ShapeError(f"{what} width {x.shape[1]} does not match encoder input {expected}")
    return x


class TeacherModel:
    kind = "teacher"

    def __init__(self, raw_encoder, priv_encoder, head, seed=None):
        if head.in_features != raw_encoder.out_features + priv_encoder.out_features:
            raise ShapeError(
                f"fusion head expects {head.in_features} inputs, embeddings give "
                f"{raw_encoder.out_features}+{priv_encoder.out_features}"
            )
        self.raw_encoder = raw_encoder
        self.priv_encoder = priv_encoder
        self.head = head
        self.seed = seed

    @classmethod
    def build(cls, raw_spec, priv_spec, n_classes=2, seed=0):
        rng = np.random.default_rng(seed)
        raw = init_params(raw_spec, name="raw_encoder", rng=rng)
        priv = init_params(priv_spec, name="priv_encoder", rng=rng)
        head = glorot_linear(raw.out_features + priv.out_features, n_classes, rng, "head")
        return cls(raw, priv, head, seed)

    @property
    def n_classes(self):
        return self.head.out_features

    @property
    def d_raw(self):
        return self.raw_encoder.in_features

    @property
    def d_priv(self):
        return self.priv_encoder.in_features

    def parameters(self):
        return self.raw_encoder.parameters() + self.priv_encoder.parameters() + self.head.parameters()

    def record(self, tape, raw, priv):
        raw = _check_width(raw, self.d_raw, "raw features")
        priv = _check_width(priv, self.d_priv, "privileged features")
        fused = ndcore.concat_cols(self.raw_encoder(raw, tape), self.priv_encoder(priv, tape))
        return self.head.record(tape, fused)

    def logits(self, raw, priv):
        raw = _check_width(raw, self.d_raw, "raw features")
        priv = _check_width(priv, self.d_priv, "privileged features")
        fused = np.hstack([self.raw_encoder(raw), self.priv_encoder(priv)])
        return self.head.apply(fused)


class StudentModel:
    kind = "student"

    def __init__(self, encoder, head, seed=None):
        if head.in_features != encoder.out_features:
            raise ShapeError(f"student head expects {head.in_features} inputs, encoder gives {encoder.out_features}")
        self.encoder = encoder
        self.head = head
        self.seed = seed

    @classmethod
    def build(cls, raw_spec, n_classes=2, seed=0):
        rng = np.random.default_rng(seed)
        enc = init_params(raw_spec, name="raw_encoder", rng=rng)
        head = glorot_linear(enc.out_features, n_classes, rng, "head")
        return cls(enc, head, seed)

    @property
    def n_classes(self):
        return self.head.out_features

    @property
    def d_raw(self):
        return self.encoder.in_features

    def parameters(self):
        return self.encoder.parameters() + self.head.parameters()

    def record(self, tape, raw):
        raw = _check_width(raw, self.d_raw, "raw features")
        return self.head.record(tape, self.encoder(raw, tape))

    def logits(self, raw):
        raw = _check_width(raw, self.d_raw, "raw features")
        return self.head.apply(self.encoder(raw))


def teacher_forward(model, raw, privileged):
    """Logits for one sample (1-D inputs -> 1-D logits) or a batch."""
    out = model.logits(raw, privileged)
    return out[0] if np.ndim(raw) == 1 else out


def student_forward(model, raw):
    out = model.logits(raw)
    return out[0] if np.ndim(raw) == 1 else out


def parameter_count(model):
    return sum(p.value.size for p in model.parameters())


def positive_scores(logits):
    """Probability of class 1 from a batch of logits."""
    return ndcore.softmax_t(logits, 1.0)[:, 1]


# --- checkpoints -----------------------------------------------------------

def _fmt(values):
    return " ".join(format(float(v), ".17g") for v in np.asarray(values).ravel())


def _mlp_lines(tag, mlp):
    lines = [f"mlp {tag} {','.join(str(w) for w in mlp.widths)}"]
    for i, layer in enumerate(l for l in mlp.layers if isinstance(l, Linear)):
        lines.append(f"tensor {tag}.{i}.weight {_fmt(layer.weight.value)}")
        lines.append(f"tensor {tag}.{i}.bias {_fmt(layer.bias.value)}")
    return lines


def _linear_lines(tag, lin):
    return [
        f"linear {tag} {lin.in_features},{lin.out_features}",
        f"tensor {tag}.weight {_fmt(lin.weight.value)}",
        f"tensor {tag}.bias {_fmt(lin.bias.value)}",
    ]


def checkpoint_text(model):
    lines = [CHECKPOINT_MAGIC, f"kind {model.kind}", f"seed {model.seed if model.seed is not None else 'none'}"]
    if model.kind == "teacher":
        lines += _mlp_lines("raw_encoder", model.raw_encoder)
        lines += _mlp_lines("priv_encoder", model.priv_encoder)
    else:
        lines += _mlp_lines("raw_encoder", model.encoder)
    lines += _linear_lines("head", model.head)
    body = "\n".join(lines) + "\n"
    digest = hashlib.sha256(body.encode()).hexdigest()
    return body + f"sha256 {digest}\n"


def write_atomic(path, text):
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_checkpoint(model, path):
    write_atomic(path, checkpoint_text(model))


def _parse_tensor(values, shape, where):
    arr = np.array([float(v) for v in values.split()], dtype=np.float64)
    if arr.size != int(np.prod(shape)):
        raise SchemaError(f"{where}: expected {int(np.prod(shape))} values, got {arr.size}")
    return arr.reshape(shape)


def load_checkpoint(path, kind=None):
    """Load a model; ``kind`` ('teacher'/'student') rejects the other shape."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    body, sep, tail = text.rpartition("sha256 ")
    if not sep or not tail.endswith("\n") or len(tail.strip()) != 64:
        raise ChecksumError(f"{path}: missing or truncated checksum")
    if hashlib.sha256(body.encode()).hexdigest() != tail.strip():
        raise ChecksumError(f"{path}: checksum mismatch")
    lines = body.splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise SchemaError(f"{path}: not a privdistill checkpoint")
    header = {}
    blocks = {}
    tensors = {}
    for lineno, line in enumerate(lines[1:], start=2):
        key, _, rest = line.partition(" ")
        if key in ("kind", "seed"):
            header[key] = rest
        elif key in ("mlp", "linear"):
            tag, _, widths = rest.partition(" ")
            blocks[tag] = (key, tuple(int(w) for w in widths.split(",")))
        elif key == "tensor":
            tag, _, values = rest.partition(" ")
            tensors[tag] = values
        else:
            raise ParseError(f"unknown record {key!r}", lineno)
    found = header.get("kind")
    if kind is not None and found != kind:
        raise SchemaError(f"{path}: expected a {kind} checkpoint, found {found}")
    expected_blocks = {"teacher": {"raw_encoder", "priv_encoder", "head"}, "student": {"raw_encoder", "head"}}
    if found not in expected_blocks or set(blocks) != expected_blocks[found]:
        raise SchemaError(f"{path}: inconsistent {found} checkpoint blocks {sorted(blocks)}")
    seed = None if header.get("seed", "none") == "none" else int(header["seed"])

    def build_mlp(tag):
        _, widths = blocks[tag]
        layers = []
        for i in range(len(widths) - 1):
            shape = (widths[i], widths[i + 1])
            w = _parse_tensor(tensors.get(f"{tag}.{i}.weight", ""), shape, f"{tag}.{i}.weight")
            b = _parse_tensor(tensors.get(f"{tag}.{i}.bias", ""), (shape[1],), f"{tag}.{i}.bias")
            layers.append(Linear(w, b, f"{tag}.{i}"))
            if i < len(widths) - 2:
                layers.append(ReLU())
        return Mlp(layers, tag)

    _, (h_in, h_out) = blocks["head"]
    head = Linear(
        _parse_tensor(tensors.get("head.weight", ""), (h_in, h_out), "head.weight"),
        _parse_tensor(tensors.get("head.bias", ""), (h_out,), "head.bias"),
        "head",
    )
    if found == "teacher":
        return TeacherModel(build_mlp("raw_encoder"), build_mlp("priv_encoder"), head, seed)
    return StudentModel(build_mlp("raw_encoder"), head, seed)
