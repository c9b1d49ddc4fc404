"""End-to-end experiment driver: dataset -> blocks -> schedule -> training -> reports."""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, data, diagnostics, nn
from .checkpoint import save_checkpoint
from .config import ConfigError, deep_merge
from .schedulers import MetricsLog, Strategy, TrainConfig, build_schedule, train
from .rng import derive_seed, make_generator


@dataclass
class Prepared:
    train: data.Dataset
    valid: data.Dataset
    store: data.BlockStore
    classify: bool


def _activation(spec) -> nn.Activation:
    if isinstance(spec, str):
        return nn.Activation(spec)
    return nn.Activation(spec["name"], spec.get("gamma", 1e-2))


def build_dataset(cfg: dict) -> data.Dataset:
    d, seed = cfg["dataset"], derive_seed(cfg["seed"], "data")
    kind = d["kind"]
    if kind == "blobs":
        return data.synth_blobs(d["n_classes"], d["n_c"], d["dim"], d["separation"], seed)
    if kind == "hetero":
        return data.synth_hetero_regression(d["grid"], cfg["partition"]["extent"], seed)
    if kind == "idx":
        return data.load_idx(d["images"], d["labels"], d.get("n_classes"))
    schema = data.CsvSchema("classification" if cfg["train"]["loss"] == "cross_entropy" else "regression",
                            None, d.get("n_classes"))
    return data.load_csv(d["path"], schema)


def prepare(cfg: dict) -> Prepared:
    """Load, split, standardize (regression) and partition the data."""
    ds = build_dataset(cfg)
    part = cfg["partition"]
    split_seed = derive_seed(cfg["seed"], "split")
    frac = cfg["split"]["valid_fraction"]
    if part["kind"] == "class":
        if not ds.is_classification:
            raise ConfigError("config.partition.kind", "class partitioning needs class labels")
        tr, va = data.split(ds, frac, split_seed, ds.y)
        store = data.partition_by_class(tr, part.get("node_count"))
        return Prepared(tr, va, store, True)
    if ds.coords is None:
        raise ConfigError("config.partition.kind", "spatial partitioning needs i,j,k coordinates")
    tr, va = data.split(ds, frac, split_seed, data.spatial_keys(ds.coords, part["extent"]))
    if not ds.is_classification:
        sc = data.Standardizer.fit(tr.x)
        tr, va = sc.apply(tr), sc.apply(va)
    store = data.partition_spatial(tr, part["extent"], part.get("node_count"))
    return Prepared(tr, va, store, ds.is_classification)


def build_network(cfg: dict, prep: Prepared) -> nn.Network:
    net = cfg["network"]
    hidden = net["hidden"]
    acts = net["activations"]
    acts = [_activation(a) for a in acts] if isinstance(acts, list) else [_activation(acts)] * len(hidden)
    out_dim = prep.train.n_classes if prep.classify else prep.train.target_dim
    layers = nn.mlp([prep.train.feature_dim, *hidden, out_dim], acts, _activation(net["output"]),
                    net.get("dropout", 0.0))
    return nn.Network.init(layers, make_generator(derive_seed(cfg["seed"], "init")))


def train_config(cfg: dict) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(t["eta"], t["n_b"], t["n_e"], cfg["seed"], t["optimizer"], nn.LossKind(t["loss"]),
                       t.get("beta1", 0.9), t.get("beta2", 0.999), t.get("epsilon", 1e-8))


def _check_batch_size(cfg: dict, prep: Prepared, strategy: Strategy) -> None:
    n_b = cfg["train"]["n_b"]
    if n_b > prep.store.n_samples:
        raise ConfigError("config.train.n_b", f"{n_b} exceeds the {prep.store.n_samples} training samples")
    smallest = min(b.size for b in prep.store.blocks)
    if strategy is not Strategy.SHUFFLED and n_b > smallest:
        raise ConfigError("config.train.n_b",
                          f"{n_b} exceeds the smallest block ({smallest} samples) under {strategy.value}")


@dataclass
class RunResult:
    strategy: Strategy
    metric: str
    train_metric: float
    valid_metric: float
    summary: dict
    log: MetricsLog
    network: nn.Network


def _jsd_report(cfg: dict, prep: Prepared, schedule):
    """Per-batch JSD series for the configured epoch, or ``None``."""
    diag = cfg["diagnostics"]
    if not diag["jsd"] or not schedule.epochs or not schedule.epochs[0]:
        return None, None
    epoch = min(diag["epoch"], len(schedule.epochs) - 1)
    targets = prep.train.scalar_targets()
    if prep.classify:
        edges = np.arange(prep.train.n_classes + 1, dtype=np.float64) - 0.5
    else:
        edges = diagnostics.uniform_edges(prep.valid.scalar_targets(), diag["bins"])
    vs = diagnostics.batch_vs_global_series(schedule, prep.store, targets, edges, epoch, targets)
    cons = None
    if len(schedule.epochs[epoch]) > 1:
        cons = diagnostics.consecutive_series(schedule, prep.store, edges, epoch, targets)
    return vs, cons


def _stats(v: np.ndarray) -> dict:
    return {"median": float(np.median(v)), "max": float(np.max(v)), "mean": float(np.mean(v)),
            "position_correlation": diagnostics.position_correlation(v)}


def run_strategy(cfg: dict, strategy, prep: Prepared | None = None, net0: nn.Network | None = None,
                 out: Path | None = None) -> RunResult:
    """Train one strategy. Writes the full artifact set when ``out`` is given."""
    strategy = Strategy(strategy)
    prep = prep or prepare(cfg)
    _check_batch_size(cfg, prep, strategy)
    net0 = net0 or build_network(cfg, prep)
    tc = train_config(cfg)
    schedule = build_schedule(strategy, prep.store, tc.n_b, tc.n_e, derive_seed(cfg["seed"], "schedule"))
    kind = tc.loss
    net, log = train(net0, schedule, prep.store, tc, {"train": prep.train, "valid": prep.valid})
    metric = "accuracy" if kind is nn.LossKind.CROSS_ENTROPY else "mse"
    if log.epochs:
        _, tm, vm = log.epochs[-1]
    else:
        tm = nn.evaluate(net, prep.train.x, _eval_targets(prep.train, kind), kind)
        vm = nn.evaluate(net, prep.valid.x, _eval_targets(prep.valid, kind), kind)
    vs, cons = _jsd_report(cfg, prep, schedule)
    summary = {
        "version": __version__,
        "strategy": strategy.value,
        "metric": metric,
        "final": {"train": tm, "valid": vm},
        "batches_per_epoch": len(schedule.epochs[0]) if schedule.epochs else 0,
        "n_train": len(prep.train),
        "n_valid": len(prep.valid),
        "blocks": len(prep.store.blocks),
        "nodes": prep.store.node_count,
        "access": {k: v for k, v in diagnostics.access_summary(prep.store.trace).items() if k != "epochs"}
        if len(prep.store.trace) else None,
        "jsd": None if vs is None else {
            "epoch": vs.epoch,
            "vs_global": _stats(vs.values),
            "consecutive": None if cons is None else _stats(cons.values),
        },
        "config": cfg,
    }
    if out is not None:
        write_run(out, summary, log, prep, net, schedule, vs, cons, cfg)
    return RunResult(strategy, metric, tm, vm, summary, log, net)


def _eval_targets(ds: data.Dataset, kind) -> np.ndarray:
    return ds.y if kind is nn.LossKind.CROSS_ENTROPY else ds.y.reshape(len(ds.y), -1)


def write_run(out: Path, summary, log: MetricsLog, prep: Prepared, net, schedule, vs, cons, cfg) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "batch", "train_loss"])
        w.writerows((e, b, repr(float(v))) for e, b, v in log.batches)
    with open(out / "epochs.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "train_metric", "valid_metric"])
        w.writerows((e, repr(float(t)), repr(float(v))) for e, t, v in log.epochs)
    if vs is not None:
        diagnostics.write_series_csv(out / "jsd.csv", vs, cons)
    prep.store.trace.to_csv(out / "trace.csv")
    if cfg["diagnostics"].get("export_schedule"):
        schedule.to_jsonl(out / "schedule.jsonl")
    save_checkpoint(net, out / "model.ckpt", cfg["seed"])
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    (out / "timings.json").write_text(json.dumps(log.timings, indent=2, sort_keys=True) + "\n")


def _out(cfg: dict) -> Path:
    return Path(cfg["out"])


def run(cfg: dict, strategy=None, write: bool = True) -> RunResult:
    """Train ``strategy`` (default: the first configured one)."""
    strategy = Strategy(strategy or cfg["strategies"][0])
    return run_strategy(cfg, strategy, out=_out(cfg) if write else None)


def _write_table(path_stem: Path, header: list[str], rows: list[list]) -> None:
    path_stem.parent.mkdir(parents=True, exist_ok=True)
    with open(path_stem.with_suffix(".csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows([[repr(v) if isinstance(v, float) else v for v in r] for r in rows])
    path_stem.with_suffix(".json").write_text(
        json.dumps([dict(zip(header, r)) for r in rows], indent=2, sort_keys=True) + "\n")


def _metric_columns(classify: bool) -> tuple[str, str]:
    return ("alpha_train", "alpha_valid") if classify else ("eps_t", "eps_v")


def compare(cfg: dict, write: bool = True) -> list[dict]:
    """Every configured strategy from the same data split and the same initial network."""
    prep = prepare(cfg)
    for s in cfg["strategies"]:
        _check_batch_size(cfg, prep, Strategy(s))
    net0 = build_network(cfg, prep)
    out = _out(cfg)
    rows = []
    for s in cfg["strategies"]:
        r = run_strategy(cfg, s, prep, net0, out / s if write else None)
        jsd = r.summary["jsd"]
        rows.append({
            "strategy": r.strategy.value,
            "train": r.train_metric,
            "valid": r.valid_metric,
            "jsd_vs_global_median": None if jsd is None else jsd["vs_global"]["median"],
            "jsd_vs_global_max": None if jsd is None else jsd["vs_global"]["max"],
            "mean_nodes": None if r.summary["access"] is None else r.summary["access"]["mean_nodes"],
        })
    tcol, vcol = _metric_columns(prep.classify)
    header = ["strategy", tcol, vcol, "jsd_vs_global_median", "jsd_vs_global_max", "mean_nodes"]
    table = [[r["strategy"], r["train"], r["valid"], r["jsd_vs_global_median"], r["jsd_vs_global_max"],
              r["mean_nodes"]] for r in rows]
    if write:
        _write_table(out / "comparison", header, table)
    return [dict(zip(header, t)) for t in table]


def parse_ratio(text: str) -> Fraction:
    try:
        r = Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise ConfigError("ratios", f"cannot parse ratio {text!r}") from None
    if not 0 < r <= 1:
        raise ConfigError("ratios", f"ratio {text} must lie in (0, 1]")
    return r


def _sweep_point(args) -> tuple:
    cfg, strategy = args
    r = run_strategy(cfg, strategy)
    return r.train_metric, r.valid_metric


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def sweep_ratio(cfg: dict, ratios, strategy=None, jobs: int = 1, write: bool = True) -> list[dict]:
    """Validation score versus ``n_b / n_c`` with ``n_c`` the (common) block size.

    Ratios that do not give an integer batch size are reported and skipped.
    """
    strategy = Strategy(strategy or cfg["strategies"][0])
    prep = prepare(cfg)
    sizes = {b.size for b in prep.store.blocks}
    if len(sizes) != 1:
        raise ConfigError("config.partition", f"ratio sweep needs equal block sizes, got {sorted(sizes)}")
    n_c = sizes.pop()
    rows, todo = [], []
    for text in ratios:
        r = parse_ratio(text) if isinstance(text, str) else Fraction(text)
        n_b = r * n_c
        if n_b.denominator != 1:
            rows.append({"ratio": str(r), "n_b": None, "status": f"skipped: {r} * {n_c} is not an integer"})
            continue
        rows.append({"ratio": str(r), "n_b": int(n_b), "status": "ok"})
        todo.append((deep_merge(cfg, {"train": {"n_b": int(n_b)}}), strategy))
    results = iter(_map(_sweep_point, todo, jobs))
    tcol, vcol = _metric_columns(prep.classify)
    table = []
    for row in rows:
        tm, vm = next(results) if row["status"] == "ok" else (None, None)
        table.append([row["ratio"], row["n_b"], tm, vm, row["status"]])
    header = ["ratio", "n_b", tcol, vcol, "status"]
    if write:
        _write_table(_out(cfg) / "sweep_ratio", header, table)
    return [dict(zip(header, t)) for t in table]


def sweep_batchsize(cfg: dict, sizes, jobs: int = 1, write: bool = True) -> list[dict]:
    """Final scores for each configured strategy at each batch size."""
    prep = prepare(cfg)
    todo, keys = [], []
    for n_b in sizes:
        c = deep_merge(cfg, {"train": {"n_b": int(n_b)}})
        for s in cfg["strategies"]:
            _check_batch_size(c, prep, Strategy(s))
            todo.append((c, s))
            keys.append((int(n_b), s))
    results = _map(_sweep_point, todo, jobs)
    tcol, vcol = _metric_columns(prep.classify)
    header = ["n_b", "strategy", tcol, vcol]
    table = [[n_b, s, tm, vm] for (n_b, s), (tm, vm) in zip(keys, results)]
    if write:
        _write_table(_out(cfg) / "sweep_batchsize", header, table)
    return [dict(zip(header, t)) for t in table]


def default_jobs() -> int:
    return max(1, min(4, os.cpu_count() or 1))
