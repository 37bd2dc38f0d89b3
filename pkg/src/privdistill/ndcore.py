"""Dense matrix helpers and a small tape-based reverse-mode differentiator.

Matrices are 2-D C-contiguous ``float64`` numpy arrays. A forward pass
records each primitive on a :class:`GradTape`; :meth:`GradTape.backward`
replays the records in reverse and accumulates gradients into leaves and
:class:`Parameter` objects.

The primitive set is deliberately small: matmul, bias-add, relu,
temperature softmax, log, elementwise arithmetic, concatenation and
reductions, plus two fused loss ops backed by :mod:`privdistill.kernels`.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ParameterError, ShapeError, StateError

PROB_EPS = 1e-12


def as_matrix(x, name="matrix"):
    """Coerce to a 2-D contiguous float64 array; vectors become one row."""
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 1-D or 2-D, got shape {a.shape}")
    return a


def matmul(a, b):
    if isinstance(a, Var) or isinstance(b, Var):
        return _matmul_op(a, b)
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    _check_matmul(a.shape, b.shape)
    return a @ b


def _check_matmul(sa, sb):
    if sa[1] != sb[0]:
        raise ShapeError(f"matmul shape mismatch: {sa[0]}x{sa[1]} @ {sb[0]}x{sb[1]}")


def _softmax_value(x, temperature):
    # shift before scaling so tiny temperatures cannot overflow
    with np.errstate(over="ignore"):
        z = (x - x.max(axis=-1, keepdims=True)) / temperature
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_t(logits, temperature=1.0):
    """Temperature softmax along the last axis.

    Accepts a vector, a batch of row vectors, or a :class:`Var` (recorded).
    """
    if not temperature > 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    if isinstance(logits, Var):
        return _softmax_op(logits, float(temperature))
    x = np.asarray(logits, dtype=np.float64)
    if x.shape[-1] < 2:
        raise ShapeError(f"softmax needs at least 2 classes, got {x.shape[-1]}")
    return _softmax_value(x, temperature)


class Parameter:
    """Trainable array with a persistent gradient buffer."""

    __slots__ = ("value", "grad", "name")

    def __init__(self, value, name=""):
        self.value = np.array(value, dtype=np.float64, order="C")
        self.grad = np.zeros_like(self.value)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class Var:
    """A value recorded on a tape."""

    __slots__ = ("value", "grad", "tape", "requires_grad", "param")

    def __init__(self, value, tape, requires_grad=False, param=None):
        self.value = value
        self.tape = tape
        self.requires_grad = requires_grad
        self.param = param
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad = self.grad + g

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __repr__(self):
        return f"Var(shape={self.value.shape}, requires_grad={self.requires_grad})"


class GradTape:
    """Ordered record of primitive operations for one forward pass.

    Not thread-safe; use one tape per forward/backward pass.
    """

    def __init__(self):
        self._records = []
        self._leaves = []
        self._params = []
        self._done = False

    def __len__(self):
        return len(self._records)

    def leaf(self, value, requires_grad=False):
        """Register an input array; set ``requires_grad`` to get its gradient."""
        v = Var(np.asarray(value, dtype=np.float64), self, requires_grad)
        if requires_grad:
            self._leaves.append(v)
        return v

    def param(self, p):
        v = Var(p.value, self, True, param=p)
        self._params.append(v)
        return v

    def record(self, value, parents, backward):
        parents = tuple(parents)
        out = Var(value, self, any(p.requires_grad for p in parents))
        if out.requires_grad:
            self._records.append((out, parents, backward))
        return out

    def backward(self, output, output_gradient=None):
        """Propagate ``output_gradient`` from ``output`` back to every leaf.

        Parameter gradients are *added* to ``Parameter.grad``; zero them
        between optimizer steps. Returns ``{leaf_or_parameter: gradient}``.
        """
        if self._done:
            raise StateError("backward already ran on this tape")
        if not self._records:
            raise StateError("backward called before any recorded forward pass")
        if output.tape is not self:
            raise StateError("output was not produced on this tape")
        if output_gradient is None:
            if output.value.size != 1:
                raise ShapeError("output_gradient required for non-scalar output")
            output_gradient = np.ones_like(output.value)
        g = np.asarray(output_gradient, dtype=np.float64)
        if g.shape != output.value.shape:
            raise ShapeError(f"output_gradient shape {g.shape} != output shape {output.value.shape}")
        output._accumulate(g)
        for out, parents, fn in reversed(self._records):
            if out.grad is None:
                continue
            grads = fn(out.grad)
            for p, pg in zip(parents, grads):
                if p.requires_grad and pg is not None:
                    p._accumulate(pg)
        self._done = True
        result = {}
        for v in self._params:
            g = v.grad if v.grad is not None else np.zeros_like(v.value)
            v.param.grad += g
            result[v.param] = v.param.grad
        for v in self._leaves:
            result[v] = v.grad if v.grad is not None else np.zeros_like(v.value)
        return result


def _lift(x, tape):
    if isinstance(x, Var):
        return x
    return Var(np.asarray(x, dtype=np.float64), tape, False)


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    raise StateError("operation needs at least one recorded value")


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _matmul_op(a, b):
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    _check_matmul(a.value.shape, b.value.shape)
    av, bv = a.value, b.value
    return tape.record(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def add_bias(x, b):
    tape = _tape_of(x, b)
    x, b = _lift(x, tape), _lift(b, tape)
    if b.value.shape[-1] != x.value.shape[1]:
        raise ShapeError(f"bias width {b.value.shape[-1]} != input width {x.value.shape[1]}")
    bshape = b.value.shape
    return tape.record(x.value + b.value, (x, b), lambda g: (g, g.sum(axis=0).reshape(bshape)))


def relu(x):
    tape = _tape_of(x)
    mask = x.value > 0
    return tape.record(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def add(a, b):
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    sa, sb = a.value.shape, b.value.shape
    return tape.record(a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    sa, sb = a.value.shape, b.value.shape
    return tape.record(a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    av, bv = a.value, b.value
    return tape.record(
        av * bv, (a, b), lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape))
    )


def log(x):
    tape = _tape_of(x)
    xv = x.value
    return tape.record(np.log(xv), (x,), lambda g: (g / xv,))


def exp(x):
    tape = _tape_of(x)
    out = np.exp(x.value)
    return tape.record(out, (x,), lambda g: (g * out,))


def clamp_min(x, floor):
    """max(x, floor); the gradient is zero where the floor is active."""
    tape = _tape_of(x)
    mask = x.value > floor
    return tape.record(np.where(mask, x.value, floor), (x,), lambda g: (g * mask,))


def concat_cols(a, b):
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    if a.value.shape[0] != b.value.shape[0]:
        raise ShapeError(f"concat row mismatch: {a.value.shape} vs {b.value.shape}")
    k = a.value.shape[1]
    return tape.record(np.hstack([a.value, b.value]), (a, b), lambda g: (g[:, :k], g[:, k:]))


def select(x, rows, cols):
    """Gather ``x[rows, cols]`` into a column vector."""
    tape = _tape_of(x)
    shape = x.value.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, (rows, cols), g[:, 0])
        return (out,)

    return tape.record(x.value[rows, cols].reshape(-1, 1), (x,), back)


def total(x):
    tape = _tape_of(x)
    shape = x.value.shape
    return tape.record(np.array([[x.value.sum()]]), (x,), lambda g: (np.full(shape, g[0, 0]),))


def mean(x):
    tape = _tape_of(x)
    shape = x.value.shape
    n = x.value.size
    return tape.record(np.array([[x.value.sum() / n]]), (x,), lambda g: (np.full(shape, g[0, 0] / n),))


def sum_rows(x):
    """Row sums as an n x 1 column."""
    tape = _tape_of(x)
    shape = x.value.shape
    return tape.record(
        x.value.sum(axis=1, keepdims=True), (x,), lambda g: (np.broadcast_to(g, shape).copy(),)
    )


def _softmax_op(x, temperature):
    tape = x.tape
    p = _softmax_value(x.value, temperature)

    def back(g):
        inner = (g * p).sum(axis=-1, keepdims=True)
        return (p * (g - inner) / temperature,)

    return tape.record(p, (x,), back)


def softmax_cross_entropy(logits, labels):
    """Per-sample -log(max(softmax(logits)[label], eps)) as an n x 1 column (fused)."""
    tape = logits.tape
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    loss, grad = kernels.ce_loss_grad(logits.value, labels, PROB_EPS)
    return tape.record(loss.reshape(-1, 1), (logits,), lambda g: (grad * g,))


def distill_objective(student_logits, teacher_logits, labels, alphas, temperature):
    """Fused per-sample ``(1-a)*CE + a*T^2*KL(teacher || student)``.

    Teacher logits are constants. Returns ``(loss_column_var, l_cls, l_kl)``
    where the last two are plain per-sample arrays.
    """
    tape = student_logits.tape
    t = np.ascontiguousarray(teacher_logits, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    alphas = np.ascontiguousarray(alphas, dtype=np.float64)
    l_cls, l_kl, grad = kernels.distill_loss_grad(
        student_logits.value, t, labels, alphas, float(temperature), PROB_EPS
    )
    per_sample = (1.0 - alphas) * l_cls + alphas * l_kl
    out = tape.record(per_sample.reshape(-1, 1), (student_logits,), lambda g: (grad * g,))
    return out, l_cls, l_kl


class Linear:
    """y = x @ W + b with W of shape (in, out)."""

    def __init__(self, weight, bias, name="linear"):
        weight = as_matrix(weight, "weight")
        bias = np.asarray(bias, dtype=np.float64).reshape(-1)
        if bias.shape[0] != weight.shape[1]:
            raise ShapeError(f"bias length {bias.shape[0]} != weight columns {weight.shape[1]}")
        self.weight = Parameter(weight, f"{name}.weight")
        self.bias = Parameter(bias, f"{name}.bias")

    @property
    def in_features(self):
        return self.weight.value.shape[0]

    @property
    def out_features(self):
        return self.weight.value.shape[1]

    def parameters(self):
        return [self.weight, self.bias]

    def apply(self, x):
        return x @ self.weight.value + self.bias.value

    def record(self, tape, x):
        return add_bias(matmul(x, tape.param(self.weight)), tape.param(self.bias))

    def __repr__(self):
        return f"Linear({self.in_features}->{self.out_features})"


class ReLU:
    in_features = out_features = None

    def parameters(self):
        return []

    def apply(self, x):
        return np.where(x > 0, x, 0.0)

    def record(self, tape, x):
        return relu(x)

    def __repr__(self):
        return "ReLU()"


def _check_layer(i, layer, width):
    if layer.in_features is not None and layer.in_features != width:
        raise ShapeError(f"layer {i} ({layer!r}) expects {layer.in_features} input columns, got {width}")


def forward(graph, x, tape=None):
    """Run a layer sequence. With a tape, records for backward; returns a Var."""
    if tape is None:
        h = as_matrix(x, "input")
        for i, layer in enumerate(graph):
            _check_layer(i, layer, h.shape[1])
            h = layer.apply(h)
        return h
    h = x if isinstance(x, Var) else tape.leaf(as_matrix(x, "input"))
    for i, layer in enumerate(graph):
        _check_layer(i, layer, h.value.shape[1])
        h = layer.record(tape, h)
    return h


def backward(tape, output, output_gradient=None):
    return tape.backward(output, output_gradient)
