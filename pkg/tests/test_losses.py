import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from privdistill import losses
from privdistill.errors import ParameterError, ShapeError

import oracles

LN2 = math.log(2)


def test_cross_entropy_examples():
    assert losses.cross_entropy([1 - 1e-12, 1e-12], 0) < 1e-11
    assert abs(losses.cross_entropy([0.5, 0.5], 0) - LN2) < 1e-15
    assert abs(losses.cross_entropy([0.1, 0.9], 0) - 2.302585092994046) < 1e-12


def test_cross_entropy_clamps_zero_probability():
    assert losses.cross_entropy([1.0, 0.0], 1) == pytest.approx(-math.log(1e-12), rel=1e-15)


def test_cross_entropy_label_out_of_range():
    with pytest.raises(ParameterError):
        losses.cross_entropy([0.5, 0.5], 2)


def test_kl_distill_examples():
    assert losses.kl_distill([1.0, -2.0], [1.0, -2.0], 3.0) == 0.0
    t = [math.log(9), 0.0]  # softmax = [0.9, 0.1]
    expected = 0.9 * math.log(1.8) + 0.1 * math.log(0.2)
    assert abs(losses.kl_distill(t, [0.0, 0.0], 1.0) - expected) < 1e-12
    assert abs(expected - 0.368061) < 1e-5  # quoted value is rounded; exact 0.3680642
    for temp in (0.5, 2.0):
        assert losses.kl_distill([2.0, 0.0], [2.0, 0.0], temp) == 0.0


def test_kl_distill_errors():
    with pytest.raises(ShapeError):
        losses.kl_distill([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ParameterError):
        losses.kl_distill([1.0, 2.0], [1.0, 2.0], 0.0)


def test_combined_loss_examples():
    assert losses.combined_loss(0.4, 0.2, 0.0) == 0.4
    assert losses.combined_loss(0.4, 0.2, 1.0) == 0.2
    assert abs(losses.combined_loss(0.4, 0.2, 0.5) - 0.3) < 1e-15
    with pytest.raises(ParameterError):
        losses.combined_loss(0.4, 0.2, 1.5)


def test_teacher_sample_loss_examples():
    assert losses.teacher_sample_loss([10.0, -10.0], 0) < 1e-8
    assert abs(losses.teacher_sample_loss([0.0, 0.0], 1) - LN2) < 1e-15
    assert abs(losses.teacher_sample_loss([0.0, math.log(9)], 0) - 2.302585092994046) < 1e-12


def test_batch_singleton_is_combined_loss():
    s, t = np.array([[0.3, -0.2]]), np.array([[1.0, 0.5]])
    b = losses.batch_student_loss(s, t, [1], [0.3], 2.0)
    l_cls = oracles.cross_entropy(oracles.softmax([0.3, -0.2]), 1)
    l_kl = oracles.kl_distill([1.0, 0.5], [0.3, -0.2], 2.0)
    assert abs(b.l_student - losses.combined_loss(l_cls, l_kl, 0.3)) < 1e-12


def test_batch_two_extreme_alphas():
    rng = np.random.default_rng(0)
    s, t = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
    b = losses.batch_student_loss(s, t, [0, 2], [0.0, 1.0], 1.0)
    want = 0.5 * (oracles.cross_entropy(oracles.softmax(list(s[0])), 0) + oracles.kl_distill(list(t[1]), list(s[1]), 1.0))
    assert abs(b.l_student - want) < 1e-12


def test_uniform_alpha_batch_equals_scalar_alpha():
    rng = np.random.default_rng(1)
    s, t = rng.normal(size=(16, 2)), rng.normal(size=(16, 2))
    y = rng.integers(0, 2, 16)
    per = losses.batch_student_loss(s, t, y, np.full(16, 0.4), 2.0)
    scalar = losses.batch_student_loss(s, t, y, 0.4, 2.0)
    assert per.l_student == scalar.l_student
    assert abs(scalar.l_student - losses.combined_loss(scalar.l_cls, scalar.l_distill, 0.4)) < 1e-12


def test_batch_breakdown_invariants():
    rng = np.random.default_rng(2)
    s, t = rng.normal(size=(32, 3)) * 3, rng.normal(size=(32, 3)) * 3
    a = rng.uniform(size=32)
    b = losses.batch_student_loss(s, t, rng.integers(0, 3, 32), a, 0.7)
    assert np.all(b.per_cls >= 0) and np.all(b.per_distill >= 0)
    assert np.max(np.abs(b.per_student - ((1 - a) * b.per_cls + a * b.per_distill))) < 1e-12
    assert b.n == 32


def test_batch_errors():
    with pytest.raises(ParameterError):
        losses.batch_student_loss(np.zeros((0, 2)), np.zeros((0, 2)), [], [], 1.0)
    with pytest.raises(ParameterError):
        losses.batch_student_loss(np.zeros((1, 2)), np.zeros((1, 2)), [0], [1.2], 1.0)


small_logits = st.lists(st.floats(-8, 8), min_size=2, max_size=4)


@settings(max_examples=200, deadline=None)
@given(small_logits, st.data(), st.sampled_from([0.5, 1.0, 2.0]))
def test_kl_matches_oracle_and_is_nonnegative(t, data, temp):
    s = data.draw(st.lists(st.floats(-8, 8), min_size=len(t), max_size=len(t)))
    got = losses.kl_distill(t, s, temp)
    assert got >= 0
    assert abs(got - oracles.kl_distill(t, s, temp)) < 1e-9


@settings(max_examples=100, deadline=None)
@given(small_logits, st.data())
def test_kl_at_unit_temperature_is_plain_kl(t, data):
    s = data.draw(st.lists(st.floats(-8, 8), min_size=len(t), max_size=len(t)))
    p, q = oracles.softmax(t), oracles.softmax(s)
    plain = math.fsum(a * math.log(a / b) for a, b in zip(p, q) if a > 0)
    assert abs(losses.kl_distill(t, s, 1.0) - plain) < 1e-9


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 5), st.floats(0, 5), st.floats(0, 1), st.floats(0, 1))
def test_combined_loss_monotone_in_alpha(l_cls, l_kl, a1, a2):
    lo, hi = sorted((a1, a2))
    f_lo, f_hi = losses.combined_loss(l_cls, l_kl, lo), losses.combined_loss(l_cls, l_kl, hi)
    if l_kl < l_cls:
        assert f_hi <= f_lo + 1e-15
    elif l_kl > l_cls:
        assert f_hi >= f_lo - 1e-15
