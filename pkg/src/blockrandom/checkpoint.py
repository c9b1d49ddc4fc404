"""Binary network checkpoints.

Layout (all integers little-endian)::

    bytes 0-3   magic  b"BRNN"
    bytes 4-7   uint32 format version (1)
    bytes 8-11  uint32 header length H
    bytes 12..  H bytes of UTF-8 JSON header
    then        float64 little-endian arrays, in order W0, b0, W1, b1, ...
                each W row-major with shape (output_dim, input_dim)

The header holds ``{"format": "blockrandom-checkpoint", "version": 1,
"seed": <int or null>, "layers": [{"input_dim", "output_dim", "activation",
"dropout_rate"}, ...]}``. Array shapes follow from the layer list.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .nn import Activation, LayerSpec, Network

MAGIC = b"BRNN"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(net: Network, path, seed: int | None = None) -> None:
    header = {
        "format": "blockrandom-checkpoint",
        "version": VERSION,
        "seed": seed,
        "layers": [
            {
                "input_dim": s.input_dim,
                "output_dim": s.output_dim,
                "activation": s.activation.to_dict(),
                "dropout_rate": s.dropout_rate,
            }
            for s in net.layers
        ],
    }
    raw = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC + struct.pack("<II", VERSION, len(raw)) + raw)
        for p in net.params():
            f.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[Network, int | None]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    header = json.loads(data[12:12 + hlen])
    layers = [
        LayerSpec(d["input_dim"], d["output_dim"], Activation.from_dict(d["activation"]), d["dropout_rate"])
        for d in header["layers"]
    ]
    pos = 12 + hlen
    params = []
    for s in layers:
        for shape in ((s.output_dim, s.input_dim), (s.output_dim,)):
            n = int(np.prod(shape))
            chunk = data[pos:pos + 8 * n]
            if len(chunk) != 8 * n:
                raise CheckpointError(f"{path}: truncated parameter data")
            params.append(np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64))
            pos += 8 * n
    if pos != len(data):
        raise CheckpointError(f"{path}: trailing bytes after parameters")
    net = Network(layers, params[0::2], params[1::2])
    return net, header.get("seed")
