"""Compiled and numpy kernels must agree."""
import numpy as np
import pytest

from privdistill import _kernels_fallback as py
from privdistill import kernels

import oracles

compiled = kernels.backends().get("cython")
needs_ext = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def _batch(rng, n=40, k=3, scale=4.0):
    s = rng.normal(size=(n, k)) * scale
    t = rng.normal(size=(n, k)) * scale
    return s, t, rng.integers(0, k, n).astype(np.int64), rng.uniform(size=n)


@needs_ext
@pytest.mark.parametrize("temp", [0.5, 1.0, 2.0, 7.0])
def test_distill_backends_agree(temp):
    rng = np.random.default_rng(int(temp * 10))
    for _ in range(20):
        s, t, y, a = _batch(rng)
        ref = py.distill_loss_grad(s, t, y, a, temp, 1e-12)
        got = compiled.distill_loss_grad(s, t, y, a, temp, 1e-12)
        for r, g in zip(ref, got):
            assert np.max(np.abs(np.asarray(r) - np.asarray(g))) <= 1e-12


@needs_ext
def test_ce_backends_agree():
    rng = np.random.default_rng(0)
    for _ in range(20):
        s, _, y, _ = _batch(rng, scale=20.0)
        for r, g in zip(py.ce_loss_grad(s, y, 1e-12), compiled.ce_loss_grad(s, y, 1e-12)):
            assert np.max(np.abs(r - g)) <= 1e-12


@needs_ext
def test_ranking_backends_agree():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(2, 200))
        s = np.sort(rng.integers(0, 10, n) / 9.0)[::-1].copy()
        y = rng.integers(0, 2, n).astype(np.int64)
        ref, got = py.ranking_summary(s, y), compiled.ranking_summary(s, y)
        assert ref[4:] == got[4:]
        assert all(abs(a - b) <= 1e-12 for a, b in zip(ref[:3], got[:3]))
        assert ref[3] == got[3]


@pytest.mark.parametrize("impl", [py] + ([compiled] if compiled else []), ids=lambda m: m.__name__)
def test_distill_kernel_matches_oracle(impl):
    rng = np.random.default_rng(5)
    s, t, y, a = _batch(rng, n=25)
    l_cls, l_kl, _ = impl.distill_loss_grad(s, t, y, a, 2.0, 1e-12)
    for i in range(25):
        assert abs(l_cls[i] - oracles.cross_entropy(oracles.softmax(list(s[i])), int(y[i]))) <= 1e-9
        assert abs(l_kl[i] - oracles.kl_distill(list(t[i]), list(s[i]), 2.0)) <= 1e-9


def test_backend_selection():
    assert kernels.BACKEND in ("cython", "python")
    assert "python" in kernels.backends()
