import numpy as np
import pytest

from blockrandom import data


def class_dataset(sizes, dim=3, seed=0):
    """Classification dataset whose class c has sizes[c] rows, interleaved."""
    gen = np.random.default_rng(seed)
    y = np.concatenate([np.full(n, c) for c, n in enumerate(sizes)])
    gen.shuffle(y)
    return data.Dataset(gen.standard_normal((len(y), dim)), y, len(sizes))


@pytest.fixture
def blobs():
    return data.synth_blobs(4, 50, 5, 6.0, seed=3)


@pytest.fixture
def tmp_out(tmp_path):
    return tmp_path / "out"
