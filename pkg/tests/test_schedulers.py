from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blockrandom import data, nn, schedulers as S
from blockrandom.rng import make_generator
from conftest import class_dataset


def _store(sizes):
    return data.partition_by_class(class_dataset(sizes))


def test_shuffled_drops_remainder_and_varies_by_epoch():
    store = _store([10, 7])
    sch = S.build_schedule("shuffled", store, 5, 3, seed=1)
    assert all(len(ep) == 3 for ep in sch.epochs)
    e0 = [b.slots.tolist() for b in sch.epochs[0]]
    e1 = [b.slots.tolist() for b in sch.epochs[1]]
    assert e0 != e1


def test_block_unshuffled_order_and_block_tails():
    store = _store([5, 4])
    sch = S.build_schedule("block-unshuffled", store, 2, 2, seed=0)
    assert [(b.blocks[0], int(b.slots[0])) for b in sch.epochs[0]] == [(0, 0), (0, 2), (1, 5), (1, 7)]
    assert [b.slots.tolist() for b in sch.epochs[0]] == [b.slots.tolist() for b in sch.epochs[1]]


def test_block_random_is_seeded():
    store = _store([8, 8, 8])
    a = S.build_schedule("block-random", store, 2, 2, seed=3)
    b = S.build_schedule("block-random", store, 2, 2, seed=3)
    c = S.build_schedule("block-random", store, 2, 2, seed=4)
    key = lambda s: [[b.slots.tolist() for b in ep] for ep in s.epochs]
    assert key(a) == key(b) and key(a) != key(c)


def test_batch_larger_than_block_rejected():
    with pytest.raises(S.ScheduleError, match="smallest block"):
        S.build_schedule("block-random", _store([8, 3]), 4, 1, seed=0)
    S.build_schedule("shuffled", _store([8, 3]), 4, 1, seed=0)


def test_ratio_one_gives_one_batch_per_class():
    store = _store([6, 6, 6])
    sch = S.build_schedule("block-random", store, 6, 2, seed=0)
    assert all(sorted(b.blocks[0] for b in ep) == [0, 1, 2] for ep in sch.epochs)


def test_schedule_jsonl(tmp_path):
    sch = S.build_schedule("block-unshuffled", _store([4, 4]), 2, 1, seed=0)
    sch.to_jsonl(tmp_path / "s.jsonl")
    lines = (tmp_path / "s.jsonl").read_text().splitlines()
    assert lines[0] == '{"epoch": 0, "batch": 0, "blocks": [0], "count": 2}'
    assert len(lines) == 4


def test_draw_epoch_single_block_batches():
    store = _store([6, 4])
    batches = S.draw_epoch(store, make_generator(0), 2)
    assert len(batches) == 5
    assert all(len(r.nodes) == 1 for r in store.trace.records)


sizes_st = st.lists(st.integers(1, 12), min_size=1, max_size=6)


@settings(max_examples=60, deadline=None)
@given(sizes_st, st.integers(1, 6), st.integers(0, 2 ** 32))
def test_exact_once_coverage(sizes, n_b, seed):
    store = _store(sizes)
    for strategy in S.Strategy:
        if strategy is not S.Strategy.SHUFFLED and n_b > min(sizes):
            continue
        if n_b > sum(sizes):
            continue
        sch = S.build_schedule(strategy, store, n_b, 2, seed)
        for ep in sch.epochs:
            slots = np.concatenate([b.slots for b in ep]) if ep else np.zeros(0, int)
            assert len(slots) == len(set(slots.tolist()))
            if strategy is S.Strategy.SHUFFLED:
                expected = sum(sizes) // n_b * n_b
            else:
                expected = sum(s // n_b * n_b for s in sizes)
            assert len(slots) == expected
            assert all(b.count == n_b for b in ep)


@settings(max_examples=60, deadline=None)
@given(sizes_st, st.integers(1, 4), st.integers(0, 2 ** 32))
def test_block_random_multiset_equals_unshuffled_and_single_class(sizes, n_b, seed):
    if n_b > min(sizes):
        return
    ds = class_dataset(sizes)
    store = data.partition_by_class(ds)
    un = S.build_schedule("block-unshuffled", store, n_b, 3, seed)
    rnd = S.build_schedule("block-random", store, n_b, 3, seed)
    key = lambda ep: Counter(tuple(b.slots.tolist()) for b in ep)
    for e in range(3):
        assert key(un.epochs[e]) == key(rnd.epochs[e])
        for b in rnd.epochs[e]:
            assert len(set(ds.y[store.slot_index[b.slots]].tolist())) == 1


def test_train_leaves_input_network_and_logs():
    ds = data.synth_blobs(3, 20, 4, 6.0, seed=0)
    store = data.partition_by_class(ds)
    net0 = nn.Network.init(nn.mlp([4, 8, 3], nn.RELU, nn.SOFTMAX), make_generator(0))
    before = [p.copy() for p in net0.params()]
    sch = S.build_schedule("block-random", store, 5, 2, seed=0)
    cfg = S.TrainConfig(0.01, 5, 2, optimizer="adam", loss=nn.LossKind.CROSS_ENTROPY)
    net, log = S.train(net0, sch, store, cfg, {"valid": ds})
    assert all(np.array_equal(a, b) for a, b in zip(before, net0.params()))
    assert len(log.batches) == 24 and len(log.epochs) == 2
    assert log.epochs[-1][1] is None and 0 <= log.epochs[-1][2] <= 1
    assert len(store.trace) == 24


def test_train_wraps_numeric_failure():
    ds = data.Dataset(np.ones((4, 1)) * 1e200, np.ones((4, 1)))
    blocks = [data.Block(0, 0, 0, np.arange(4))]
    store = data.BlockStore(ds, blocks, 1)
    net0 = nn.Network.init(nn.mlp([1, 1], [], nn.IDENTITY), make_generator(0))
    net0.weights[0][:] = 1e200
    sch = S.build_schedule("block-unshuffled", store, 2, 1, seed=0)
    with pytest.raises(S.TrainingError) as e:
        S.train(net0, sch, store, S.TrainConfig(0.1, 2, 1))
    assert e.value.epoch == 0 and e.value.batch == 0
