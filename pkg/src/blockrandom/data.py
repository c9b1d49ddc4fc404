"""Datasets, loaders, synthetic generators and the simulated block store.

A :class:`BlockStore` holds the training set cut into homogeneous blocks, each
pinned to a simulated node. Every batch gather is logged to an
:class:`AccessTrace` so the communication cost of a batch ordering can be
measured without any real transport.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .rng import make_generator, permutation, randbelow

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
HETERO_FEATURES = 12


class DataError(ValueError):
    pass


class IdxMagicError(DataError):
    pass


class IdxTruncatedError(DataError):
    pass


class IdxCountMismatchError(DataError):
    pass


class SchemaError(DataError):
    pass


class CsvRowError(DataError):
    def __init__(self, row: int, msg: str):
        super().__init__(f"row {row}: {msg}")
        self.row = row


class PartitionError(DataError):
    pass


class EpochExhausted(Exception):
    """No block has an unconsumed run of ``n_b`` samples left this epoch."""


@dataclass
class Dataset:
    """Feature rows with class ids or real-valued targets.

    ``y`` is an int array of shape (N,) when ``n_classes`` is set, otherwise a
    float array of shape (N, k). ``coords`` optionally holds (i, j, k) grid
    positions and ``grid`` the full grid shape.
    """

    x: np.ndarray
    y: np.ndarray
    n_classes: int | None = None
    coords: np.ndarray | None = None
    grid: tuple[int, int, int] | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 2:
            raise DataError("features must be a 2-D array")
        if not np.all(np.isfinite(self.x)):
            raise DataError("features must be finite")
        if self.n_classes is not None:
            self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
            if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.n_classes):
                raise DataError("class id outside [0, n_classes)")
        else:
            y = np.asarray(self.y, dtype=np.float64)
            self.y = y.reshape(len(y), -1) if y.ndim < 2 else y
        if len(self.y) != len(self.x):
            raise DataError("feature and target counts differ")
        if self.coords is not None:
            self.coords = np.asarray(self.coords, dtype=np.int64)
            if self.coords.shape != (len(self.x), 3):
                raise DataError("coords must have shape (N, 3)")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def feature_dim(self) -> int:
        return self.x.shape[1]

    @property
    def is_classification(self) -> bool:
        return self.n_classes is not None

    @property
    def target_dim(self) -> int:
        return self.n_classes if self.is_classification else self.y.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        coords = None if self.coords is None else self.coords[idx]
        return Dataset(self.x[idx], self.y[idx], self.n_classes, coords, self.grid)

    def scalar_targets(self) -> np.ndarray:
        """Targets as a flat float array, for histogram diagnostics."""
        if self.is_classification:
            return self.y.astype(np.float64)
        return self.y[:, 0]


# --- synthetic generators -------------------------------------------------

def synth_blobs(n_classes: int, n_c: int, dim: int, separation: float, seed: int) -> Dataset:
    """Isotropic unit-variance Gaussian clouds, exactly ``n_c`` per class.

    Centers are standard-normal draws rescaled so the closest pair sits exactly
    ``separation`` apart. Rows come out in a seeded random order.
    """
    if n_classes < 2 or n_c < 1 or dim < 1 or not separation > 0:
        raise DataError("need n_classes >= 2, n_c >= 1, dim >= 1, separation > 0")
    gen = make_generator(seed)
    centers = gen.standard_normal((n_classes, dim))
    gaps = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
    closest = gaps[np.triu_indices(n_classes, 1)].min()
    if closest == 0.0:
        raise DataError("degenerate centers; try another seed")
    centers *= separation / closest
    labels = np.repeat(np.arange(n_classes), n_c)
    x = centers[labels] + gen.standard_normal((len(labels), dim))
    order = permutation(len(labels), gen)
    return Dataset(x[order], labels[order], n_classes)


def _wall_coordinate(j: np.ndarray, ny: int) -> np.ndarray:
    return 2.0 * (j + 0.5) / ny - 1.0


# Row k describes feature f{k}: mean = c1 eta + c2 eta**2 and
# std = exp(d0 + d1 eta + d2 eta**2).
_HETERO_MEAN = np.array([
    [1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.3, 0.5], [-0.8, 0.0], [0.0, 0.0],
    [0.0, 0.6], [0.0, 0.0], [0.5, -0.4], [0.0, 0.0], [-0.3, 0.3], [0.0, 0.0],
])
_HETERO_LOGSTD = np.array([
    [np.log(0.6), 0.0, 0.0], [0.0, 0.0, 0.4], [0.0, 0.0, 0.6], [0.0, 0.2, 0.3],
    [0.0, 0.0, 0.5], [0.0, 0.0, 0.0], [0.0, 0.3, 0.0], [0.0, 0.0, 0.4],
    [0.0, 0.0, 0.2], [0.0, -0.2, 0.0], [0.0, 0.0, 0.3], [0.0, 0.0, 0.5],
])


def hetero_wall_term(eta) -> np.ndarray:
    """Mean target as a function of wall coordinate; strictly decreasing."""
    eta = np.asarray(eta, dtype=np.float64)
    return -1.2 * eta ** 5 - 0.3 * eta


def hetero_target(x: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Noise-free target for raw (unstandardized) hetero-regression features.

    ``y = A(eta) * (1 + 0.3 f5) + B(eta) * tanh(f6) * f7 + 0.25 * f1 * f2
    + 0.2 * sin(f9) * f11`` with ``A = hetero_wall_term`` and
    ``B(eta) = 0.4 + 0.6 eta**2``. Given eta, every term after the first has
    zero mean, so the conditional mean of ``y`` is exactly ``A(eta)``.
    """
    a = hetero_wall_term(eta)
    b = 0.4 + 0.6 * eta ** 2
    return (a * (1.0 + 0.3 * x[:, 5]) + b * np.tanh(x[:, 6]) * x[:, 7]
            + 0.25 * x[:, 1] * x[:, 2] + 0.2 * np.sin(x[:, 9]) * x[:, 11])


def synth_hetero_regression(grid, extent, seed: int) -> Dataset:
    """Pointwise 12-input, 1-output regression on a 3-D grid.

    Axis 1 (index ``j``) plays the wall-normal direction, mapped to
    ``eta = 2 (j + 0.5) / ny - 1`` in (-1, 1). Feature ``f_k`` at a point is
    ``m_k(eta) + s_k(eta) * z`` with standard-normal ``z``, mean
    ``m_k = c1 eta + c2 eta**2`` and std ``s_k = exp(d0 + d1 eta + d2 eta**2)``
    (coefficients in ``_HETERO_MEAN`` / ``_HETERO_LOGSTD``). Feature f0 is
    ``eta`` plus 0.6-std noise, so wall position is only loosely observable.
    The target is :func:`hetero_target` with no added noise.
    """
    grid = tuple(int(g) for g in grid)
    extent = tuple(int(e) for e in extent)
    if len(grid) != 3 or len(extent) != 3 or min(grid) < 1 or min(extent) < 1:
        raise DataError("grid and extent must be positive integer triples")
    for name, g, e in zip("ijk", grid, extent):
        if g % e:
            raise PartitionError(f"grid dimension {name} ({g}) not divisible by extent {e}")
    gen = make_generator(seed)
    nx, ny, nz = grid
    coords = np.stack(np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"), -1).reshape(-1, 3)
    eta = _wall_coordinate(coords[:, 1], ny)
    mean = np.stack([eta, eta ** 2], 1) @ _HETERO_MEAN.T
    std = np.exp(np.stack([np.ones_like(eta), eta, eta ** 2], 1) @ _HETERO_LOGSTD.T)
    x = mean + std * gen.standard_normal((len(coords), HETERO_FEATURES))
    y = hetero_target(x, eta)
    return Dataset(x, y[:, None], None, coords, grid)


# --- file formats ---------------------------------------------------------

def _read_idx(path, magic: int, ndim: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4 + 4 * ndim:
        raise IdxTruncatedError(f"{path}: header truncated")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise IdxMagicError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    body = raw[4 + 4 * ndim:]
    need = int(np.prod(dims))
    if len(body) < need:
        raise IdxTruncatedError(f"{path}: expected {need} data bytes, found {len(body)}")
    return np.frombuffer(body[:need], dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path, n_classes: int | None = None) -> Dataset:
    """Images scaled to [0, 1] (row-major pixels) with their class ids."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise IdxCountMismatchError(f"{images_path} has {len(images)} images but {labels_path} has {len(labels)} labels")
    x = images.reshape(len(images), -1).astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    n = n_classes if n_classes is not None else (int(y.max()) + 1 if len(y) else 1)
    return Dataset(x, y, n)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">4I", IDX_IMAGES_MAGIC, *images.shape) + images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">2I", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())


@dataclass
class CsvSchema:
    """Expected CSV layout; ``None`` fields are inferred from the header."""

    kind: str | None = None  # "classification" | "regression"
    feature_dim: int | None = None
    n_classes: int | None = None


def load_csv(path, schema: CsvSchema | None = None) -> Dataset:
    """Columns ``f0..f{d-1}``, then ``y`` or ``label``, optionally ``i,j,k``."""
    schema = schema or CsvSchema()
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    feats = [h for h in header if h.startswith("f") and h[1:].isdigit()]
    if feats != [f"f{i}" for i in range(len(feats))] or not feats:
        raise SchemaError(f"{path}: feature columns must be f0..f{{d-1}}")
    if schema.feature_dim is not None and len(feats) != schema.feature_dim:
        raise SchemaError(f"{path}: expected {schema.feature_dim} features, found {len(feats)}")
    if "label" in header and "y" in header:
        raise SchemaError(f"{path}: both 'y' and 'label' present")
    if "label" in header:
        kind, tcol = "classification", "label"
    elif "y" in header:
        kind, tcol = "regression", "y"
    else:
        raise SchemaError(f"{path}: missing target column ('y' or 'label')")
    if schema.kind is not None and schema.kind != kind:
        raise SchemaError(f"{path}: expected a {schema.kind} target column")
    has_coords = all(c in header for c in "ijk")
    if any(c in header for c in "ijk") and not has_coords:
        raise SchemaError(f"{path}: coordinate columns must be all of i,j,k")
    fpos = [header.index(c) for c in feats]
    tpos = header.index(tcol)
    cpos = [header.index(c) for c in "ijk"] if has_coords else []

    x, y, coords = [], [], []
    for r, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise CsvRowError(r, f"expected {len(header)} cells, found {len(row)}")
        try:
            x.append([float(row[p]) for p in fpos])
            y.append(int(row[tpos]) if kind == "classification" else float(row[tpos]))
            if cpos:
                coords.append([int(row[p]) for p in cpos])
        except ValueError as exc:
            raise CsvRowError(r, f"non-numeric cell ({exc})") from None
    x = np.asarray(x, dtype=np.float64).reshape(len(x), len(feats))
    crd = np.asarray(coords, dtype=np.int64).reshape(-1, 3) if cpos else None
    grid = tuple(int(v) for v in crd.max(axis=0) + 1) if crd is not None and len(crd) else None
    if kind == "classification":
        n = schema.n_classes if schema.n_classes is not None else (max(y) + 1 if y else 1)
        return Dataset(x, np.asarray(y, dtype=np.int64), n, crd, grid)
    return Dataset(x, np.asarray(y, dtype=np.float64)[:, None], None, crd, grid)


def write_csv(ds: Dataset, path) -> None:
    if not ds.is_classification and ds.y.shape[1] != 1:
        raise SchemaError("CSV holds a single target column")
    header = [f"f{i}" for i in range(ds.feature_dim)]
    header.append("label" if ds.is_classification else "y")
    if ds.coords is not None:
        header += ["i", "j", "k"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for n in range(len(ds)):
            row = [repr(float(v)) for v in ds.x[n]]
            row.append(str(int(ds.y[n])) if ds.is_classification else repr(float(ds.y[n, 0])))
            if ds.coords is not None:
                row += [str(int(c)) for c in ds.coords[n]]
            w.writerow(row)


# --- splitting and scaling --------------------------------------------------

def spatial_keys(coords: np.ndarray, extent) -> np.ndarray:
    return np.asarray(coords) // np.asarray(extent, dtype=np.int64)


def split(ds: Dataset, valid_fraction: float, seed: int, strata: np.ndarray | None = None) -> tuple[Dataset, Dataset]:
    """Disjoint train/validation split, stratified so every stratum loses the
    same share. Both halves keep the original relative row order."""
    if not 0.0 < valid_fraction < 1.0:
        raise DataError("valid_fraction must lie in (0, 1)")
    gen = make_generator(seed)
    if strata is None:
        strata = np.zeros(len(ds), dtype=np.int64)
    strata = np.asarray(strata)
    if strata.ndim == 2:
        _, strata = np.unique(strata, axis=0, return_inverse=True)
        strata = strata.reshape(-1)
    valid = np.zeros(len(ds), dtype=bool)
    for s in np.unique(strata):
        members = np.flatnonzero(strata == s)
        n_valid = int(round(valid_fraction * len(members)))
        valid[members[permutation(len(members), gen)[:n_valid]]] = True
    return ds.subset(np.flatnonzero(~valid)), ds.subset(np.flatnonzero(valid))


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        std = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(std > 0, std, 1.0))

    def apply(self, ds: Dataset) -> Dataset:
        return Dataset((ds.x - self.mean) / self.std, ds.y, ds.n_classes, ds.coords, ds.grid)


# --- block store ------------------------------------------------------------

@dataclass
class Block:
    block_id: int
    node_id: int
    key: int | tuple[int, int, int]
    indices: np.ndarray  # dataset rows, in block order

    @property
    def size(self) -> int:
        return len(self.indices)


class TraceRecord(NamedTuple):
    epoch: int
    batch: int
    nodes: frozenset
    samples: int


@dataclass
class AccessTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def append(self, rec: TraceRecord) -> None:
        if self.records:
            last = self.records[-1]
            if rec.epoch < last.epoch or (rec.epoch == last.epoch and rec.batch <= last.batch):
                raise ValueError("trace records must advance")
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["epoch", "batch", "nodes_touched", "samples_fetched"])
            for r in self.records:
                w.writerow([r.epoch, r.batch, len(r.nodes), r.samples])


class Batch(NamedTuple):
    indices: np.ndarray
    x: np.ndarray
    y: np.ndarray


class BlockStore:
    """Blocks of one dataset, each pinned to a simulated node.

    Samples are also addressable by *slot*: slots number every sample block by
    block, so slot ``starts[b] + o`` is offset ``o`` of block ``b``.
    """

    def __init__(self, dataset: Dataset, blocks: list[Block], node_count: int):
        ids = [b.block_id for b in blocks]
        if ids != list(range(len(blocks))):
            raise PartitionError("block ids must be 0..B-1 in order")
        if any(not 0 <= b.node_id < node_count for b in blocks):
            raise PartitionError("node id outside [0, node_count)")
        self.dataset = dataset
        self.blocks = blocks
        self.node_count = node_count
        self.trace = AccessTrace()
        sizes = np.array([b.size for b in blocks], dtype=np.int64)
        self.starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        self.slot_index = np.concatenate([b.indices for b in blocks]) if blocks else np.zeros(0, np.int64)
        self.slot_block = np.repeat(np.arange(len(blocks)), sizes)
        self.block_node = np.array([b.node_id for b in blocks], dtype=np.int64)
        self.epoch = 0
        self._next_batch = 0
        self._cursor = np.zeros(len(blocks), dtype=np.int64)

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def n_samples(self) -> int:
        return len(self.slot_index)

    def reset_trace(self) -> None:
        self.trace = AccessTrace()
        self.begin_epoch(0)

    def begin_epoch(self, epoch: int) -> None:
        """Reset per-epoch batch numbering and draw cursors."""
        self.epoch = epoch
        self._next_batch = 0
        self._cursor[:] = 0

    def _record(self, nodes, samples: int) -> None:
        self.trace.append(TraceRecord(self.epoch, self._next_batch, frozenset(int(n) for n in nodes), samples))
        self._next_batch += 1

    def fetch_batch(self, block_id: int, offset: int, n_b: int) -> Batch:
        """Contiguous slice of one block; logs a single-node trace record."""
        if not 0 <= block_id < len(self.blocks):
            raise PartitionError(f"no block {block_id}")
        block = self.blocks[block_id]
        if offset < 0 or n_b < 1 or offset + n_b > block.size:
            raise PartitionError(f"slice [{offset}, {offset + n_b}) outside block {block_id} of size {block.size}")
        idx = block.indices[offset:offset + n_b]
        self._record([block.node_id], n_b)
        return Batch(idx, self.dataset.x[idx], self.dataset.y[idx])

    def gather(self, slots: np.ndarray) -> Batch:
        """Arbitrary samples by slot; the record lists every node they live on."""
        slots = np.asarray(slots, dtype=np.int64)
        idx = self.slot_index[slots]
        self._record(np.unique(self.block_node[self.slot_block[slots]]), len(slots))
        return Batch(idx, self.dataset.x[idx], self.dataset.y[idx])

    def remaining(self, n_b: int) -> np.ndarray:
        """Blocks that still hold an unconsumed run of ``n_b`` this epoch."""
        sizes = np.array([b.size for b in self.blocks])
        return np.flatnonzero(self._cursor + n_b <= sizes)

    def draw(self, gen: np.random.Generator, n_b: int) -> Batch:
        open_blocks = self.remaining(n_b)
        if not len(open_blocks):
            raise EpochExhausted(f"epoch {self.epoch} exhausted")
        b = int(open_blocks[randbelow(len(open_blocks), gen)])
        offset = int(self._cursor[b])
        self._cursor[b] += n_b
        return self.fetch_batch(b, offset, n_b)


def partition_by_class(ds: Dataset, node_count: int | None = None) -> BlockStore:
    """One block per present class, ascending class id, original row order.

    Blocks sit on node ``class_id % node_count``; by default every class gets
    its own node.
    """
    if not ds.is_classification:
        raise PartitionError("partition_by_class needs a classification dataset")
    node_count = node_count or ds.n_classes
    blocks = []
    for c in np.unique(ds.y):
        blocks.append(Block(len(blocks), int(c) % node_count, int(c), np.flatnonzero(ds.y == c)))
    return BlockStore(ds, blocks, node_count)


def partition_spatial(ds: Dataset, extent, node_count: int | None = None) -> BlockStore:
    """Tile the grid with boxes of ``extent`` cells.

    Blocks are ordered lexicographically with the wall-normal block index
    outermost, i.e. by (j, i, k); empty boxes (possible on subsets) are skipped.
    Nodes are assigned round-robin over blocks.
    """
    if ds.coords is None:
        raise PartitionError("partition_spatial needs sample coords")
    extent = tuple(int(e) for e in extent)
    grid = ds.grid or tuple(int(v) for v in ds.coords.max(axis=0) + 1)
    for name, g, e in zip("ijk", grid, extent):
        if e < 1 or g % e:
            raise PartitionError(f"grid dimension {name} ({g}) not divisible by extent {e}")
    keys = spatial_keys(ds.coords, extent)
    nb = [g // e for g, e in zip(grid, extent)]
    flat = (keys[:, 1] * nb[0] + keys[:, 0]) * nb[2] + keys[:, 2]
    order = np.argsort(flat, kind="stable")
    present, starts = np.unique(flat[order], return_index=True)
    bounds = list(starts[1:]) + [len(order)]
    node_count = node_count or len(present)
    blocks = []
    for f, lo, hi in zip(present, starts, bounds):
        bj, rest = divmod(int(f), nb[0] * nb[2])
        bi, bk = divmod(rest, nb[2])
        bid = len(blocks)
        blocks.append(Block(bid, bid % node_count, (bi, bj, bk), order[lo:hi]))
    return BlockStore(ds, blocks, node_count)
