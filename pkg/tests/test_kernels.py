import importlib
import os

import numpy as np

from blockrandom import _kernels_py, kernels


def _args(seed, n=1000):
    g = np.random.default_rng(seed)
    return [g.standard_normal(n), g.standard_normal(n), g.standard_normal(n) * 0.1, g.random(n) * 0.1]


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_adam_kernel_bitwise_equal_to_fallback():
    a, b = _args(0), _args(0)
    for t in range(1, 4):
        c1, c2 = 1 - 0.9 ** t, 1 - 0.999 ** t
        kernels.adam_update(*a, 1e-3, 0.9, 0.999, c1, c2, 1e-8)
        _kernels_py.adam_update(*b, 1e-3, 0.9, 0.999, c1, c2, 1e-8)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_sgd_kernel_bitwise_equal_to_fallback():
    a, b = _args(1), _args(1)
    kernels.sgd_update(a[0], a[1], 0.3)
    _kernels_py.sgd_update(b[0], b[1], 0.3)
    assert np.array_equal(a[0], b[0])


def test_env_forces_fallback(monkeypatch):
    monkeypatch.setenv("BLOCKRANDOM_PURE_PYTHON", "1")
    mod = importlib.reload(kernels)
    try:
        assert mod.BACKEND == "python"
    finally:
        monkeypatch.delenv("BLOCKRANDOM_PURE_PYTHON")
        importlib.reload(kernels)
