"""Batch orderings and the training loop that consumes them.

Three orderings are supported:

* ``shuffled``: every epoch permutes all samples, then cuts consecutive
  batches, so a batch usually spans many blocks.
* ``block-unshuffled``: batches are cut inside blocks at multiples of
  ``n_b`` from the block start and replayed in block order every epoch.
* ``block-random``: the same single-block batches, with their order
  permuted afresh each epoch.

Samples that do not fill a whole batch are left out of training (the tail of
each block, or the tail of the shuffled permutation).
"""
from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .data import Batch, BlockStore, Dataset, EpochExhausted
from .nn import LossKind, Network, NumericOverflowError, Optimizer, evaluate, loss_and_grad
from .rng import derive_seed, make_generator, permutation


class Strategy(str, enum.Enum):
    SHUFFLED = "shuffled"
    BLOCK_UNSHUFFLED = "block-unshuffled"
    BLOCK_RANDOM = "block-random"


class ScheduleError(ValueError):
    pass


class TrainingError(RuntimeError):
    def __init__(self, epoch: int, batch: int, cause: Exception):
        super().__init__(f"epoch {epoch}, batch {batch}: {cause}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True, eq=False)
class BatchDescriptor:
    index: int
    slots: np.ndarray
    blocks: tuple[int, ...]

    @property
    def count(self) -> int:
        return len(self.slots)

    @property
    def single_block(self) -> bool:
        return len(self.blocks) == 1

    @property
    def contiguous(self) -> bool:
        """One ascending run inside one block, i.e. servable by ``fetch_batch``."""
        return self.single_block and bool(np.all(np.diff(self.slots) == 1))

    def sources(self, store: BlockStore) -> list[tuple[int, int, int]]:
        """Runs of consecutive slots as ``(block_id, start, stop)`` offsets."""
        runs = []
        for s in self.slots.tolist():
            b = int(store.slot_block[s])
            o = s - int(store.starts[b])
            if runs and runs[-1][0] == b and runs[-1][2] == o:
                runs[-1][2] = o + 1
            else:
                runs.append([b, o, o + 1])
        return [tuple(r) for r in runs]


@dataclass
class Schedule:
    strategy: Strategy
    n_b: int
    n_e: int
    seed: int
    epochs: list[list[BatchDescriptor]]
    n_slots: int

    def to_jsonl(self, path) -> None:
        with open(path, "w") as f:
            for e, batches in enumerate(self.epochs):
                for b in batches:
                    f.write(json.dumps({"epoch": e, "batch": b.index, "blocks": list(b.blocks),
                                        "count": b.count}) + "\n")


def block_batches(store: BlockStore, n_b: int) -> list[tuple[int, int]]:
    """``(block_id, offset)`` of every full in-block batch, in block order."""
    out = []
    for block in store.blocks:
        out += [(block.block_id, k * n_b) for k in range(block.size // n_b)]
    return out


def build_schedule(strategy, store: BlockStore, n_b: int, n_e: int, seed: int) -> Schedule:
    strategy = Strategy(strategy)
    if n_b < 1 or n_e < 0:
        raise ScheduleError("need n_b >= 1 and n_e >= 0")
    if n_b > store.n_samples:
        raise ScheduleError(f"batch size {n_b} exceeds the {store.n_samples} available samples")
    gen = make_generator(seed)
    epochs: list[list[BatchDescriptor]] = []

    if strategy is Strategy.SHUFFLED:
        n_batches = store.n_samples // n_b
        for _ in range(n_e):
            perm = permutation(store.n_samples, gen)
            batches = []
            for k in range(n_batches):
                slots = perm[k * n_b:(k + 1) * n_b]
                batches.append(BatchDescriptor(k, slots, tuple(np.unique(store.slot_block[slots]).tolist())))
            epochs.append(batches)
        return Schedule(strategy, n_b, n_e, seed, epochs, store.n_samples)

    smallest = min(b.size for b in store.blocks)
    if n_b > smallest:
        raise ScheduleError(f"batch size {n_b} exceeds the smallest block ({smallest} samples); "
                            "single-block batches are impossible")
    fixed = [
        (bid, np.arange(store.starts[bid] + off, store.starts[bid] + off + n_b))
        for bid, off in block_batches(store, n_b)
    ]
    for _ in range(n_e):
        order = range(len(fixed)) if strategy is Strategy.BLOCK_UNSHUFFLED else permutation(len(fixed), gen)
        epochs.append([BatchDescriptor(k, fixed[i][1], (fixed[i][0],)) for k, i in enumerate(order)])
    return Schedule(strategy, n_b, n_e, seed, epochs, store.n_samples)


def distributed_draw(store: BlockStore, gen: np.random.Generator, n_b: int) -> Batch:
    """Pick a block uniformly among those with an unconsumed run of ``n_b``
    samples this epoch and fetch that run. Raises :class:`EpochExhausted`
    when none is left."""
    return store.draw(gen, n_b)


def draw_epoch(store: BlockStore, gen: np.random.Generator, n_b: int) -> list[Batch]:
    batches = []
    while True:
        try:
            batches.append(distributed_draw(store, gen, n_b))
        except EpochExhausted:
            return batches


@dataclass
class TrainConfig:
    eta: float
    n_b: int
    n_e: int
    seed: int = 0
    optimizer: str = "sgd"
    loss: LossKind = LossKind.MSE
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def make_optimizer(self) -> Optimizer:
        return Optimizer(self.optimizer, self.eta, self.beta1, self.beta2, self.epsilon)


@dataclass
class MetricsLog:
    batches: list[tuple[int, int, float]] = field(default_factory=list)
    epochs: list[tuple[int, float | None, float | None]] = field(default_factory=list)
    jsd: dict = field(default_factory=dict)
    access: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


def _targets(batch_y: np.ndarray, kind: LossKind) -> np.ndarray:
    return batch_y if kind is LossKind.CROSS_ENTROPY else batch_y.reshape(len(batch_y), -1)


def train(net: Network, schedule: Schedule, store: BlockStore, cfg: TrainConfig,
          eval_sets: dict[str, Dataset] | None = None) -> tuple[Network, MetricsLog]:
    """Run ``schedule`` on ``store``, one optimizer step per batch.

    ``eval_sets`` may carry ``"train"`` and ``"valid"`` datasets, scored after
    every epoch. The input network is not modified; the store's access trace
    is restarted.
    """
    if schedule.n_slots != store.n_samples:
        raise ScheduleError("schedule was built for a different store")
    kind = LossKind(cfg.loss)
    eval_sets = eval_sets or {}
    log = MetricsLog()
    net = net.copy()
    opt = cfg.make_optimizer()
    dropout_gen = make_generator(derive_seed(cfg.seed, "dropout"))
    params = net.params()
    store.reset_trace()
    t0 = time.perf_counter()
    for e, batches in enumerate(schedule.epochs):
        store.begin_epoch(e)
        for b in batches:
            if b.contiguous:
                bid = b.blocks[0]
                batch = store.fetch_batch(bid, int(b.slots[0] - store.starts[bid]), b.count)
            else:
                batch = store.gather(b.slots)
            try:
                value, grads = loss_and_grad(net, batch.x, _targets(batch.y, kind), kind, True, dropout_gen)
                params = opt.step(params, grads)
            except (NumericOverflowError, FloatingPointError) as exc:
                raise TrainingError(e, b.index, exc) from exc
            net.weights = params[0::2]
            net.biases = params[1::2]
            log.batches.append((e, b.index, value))
        scores = {name: evaluate(net, ds.x, _targets(ds.y, kind), kind) for name, ds in eval_sets.items()}
        log.epochs.append((e, scores.get("train"), scores.get("valid")))
    log.timings["train_seconds"] = time.perf_counter() - t0
    return net, log
