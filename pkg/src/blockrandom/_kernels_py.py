"""Numpy fallback for the compiled optimizer kernels (same operation order)."""
import numpy as np


def adam_update(p, g, m, v, eta, beta1, beta2, c1, c2, eps):
    if not (len(g) == len(m) == len(v) == len(p)):
        raise ValueError("buffer lengths differ")
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    step = m / c1
    step *= eta
    step /= np.sqrt(v / c2) + eps
    p -= step


def sgd_update(p, g, eta):
    if len(g) != len(p):
        raise ValueError("buffer lengths differ")
    p -= eta * g
