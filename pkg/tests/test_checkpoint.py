import numpy as np
import pytest

from blockrandom import nn
from blockrandom.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from blockrandom.rng import make_generator


def test_roundtrip_exact(tmp_path):
    net = nn.Network.init(nn.mlp([3, 4, 2], [nn.Activation("leaky_relu", 0.2)], nn.SOFTMAX, 0.1),
                          make_generator(5))
    path = tmp_path / "m.ckpt"
    save_checkpoint(net, path, seed=9)
    back, seed = load_checkpoint(path)
    assert seed == 9
    assert back.layers == net.layers
    for a, b in zip(back.params(), net.params()):
        assert np.array_equal(a, b)


@pytest.mark.parametrize("mangle", [lambda b: b"XXXX" + b[4:], lambda b: b[:-3], lambda b: b + b"\0"])
def test_corrupt_files_rejected(tmp_path, mangle):
    net = nn.Network.init(nn.mlp([2, 1], [], nn.IDENTITY), make_generator(0))
    path = tmp_path / "m.ckpt"
    save_checkpoint(net, path)
    path.write_bytes(mangle(path.read_bytes()))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
