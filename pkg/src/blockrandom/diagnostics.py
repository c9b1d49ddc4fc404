"""Histogram PDFs, Jensen-Shannon divergence and batch-representativeness series."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .data import AccessTrace

LN2 = math.log(2.0)
DEFAULT_BINS = 64


@dataclass(frozen=True)
class HistogramPdf:
    edges: np.ndarray
    probs: np.ndarray


@dataclass(frozen=True)
class JsdSeries:
    values: np.ndarray
    kind: str  # "vs_global" | "consecutive"
    epoch: int = 0


def uniform_edges(values, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Equal-width edges spanning ``values``; a constant input gets a unit-wide range."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot span an empty set")
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    return np.linspace(lo, hi, bins + 1)


def histogram(values, edges) -> HistogramPdf:
    """Normalized counts over half-open bins ``[e_i, e_{i+1})``, last bin closed.

    Out-of-range values are clipped into the end bins.
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    edges = np.asarray(edges, dtype=np.float64)
    if values.size == 0:
        raise ValueError("histogram of an empty set")
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("edges must be strictly increasing with at least 2 entries")
    nbins = len(edges) - 1
    bins = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, nbins - 1)
    counts = np.bincount(bins, minlength=nbins).astype(np.float64)
    return HistogramPdf(edges, counts / counts.sum())


def _kl_to_mix(p: np.ndarray, m: np.ndarray) -> float:
    live = p > 0.0
    return float(np.sum(p[live] * np.log(p[live] / m[live])))


def jsd(q: HistogramPdf, r: HistogramPdf) -> float:
    """Jensen-Shannon divergence in nats: ``(KL(Q||M) + KL(R||M)) / 2``, ``M = (Q+R)/2``."""
    if q.edges.shape != r.edges.shape or not np.array_equal(q.edges, r.edges):
        raise ValueError("histograms must share edges")
    m = 0.5 * (q.probs + r.probs)
    value = 0.5 * (_kl_to_mix(q.probs, m) + _kl_to_mix(r.probs, m))
    return min(max(value, 0.0), LN2)


def batch_target_pdfs(schedule, store, edges, epoch: int = 0, targets=None) -> list[HistogramPdf]:
    """Target histogram of every batch in one epoch of ``schedule``."""
    if not 0 <= epoch < len(schedule.epochs):
        raise ValueError(f"schedule has no epoch {epoch}")
    if targets is None:
        targets = store.dataset.scalar_targets()
    return [histogram(targets[store.slot_index[b.slots]], edges) for b in schedule.epochs[epoch]]


def batch_vs_global_series(schedule, store, global_targets, edges=None, epoch: int = 0,
                           targets=None) -> JsdSeries:
    """J(Y, Y_b) for each batch, with Y the histogram of ``global_targets``."""
    global_targets = np.asarray(global_targets, dtype=np.float64)
    if global_targets.size == 0:
        raise ValueError("global target set is empty")
    if edges is None:
        edges = uniform_edges(global_targets)
    ref = histogram(global_targets, edges)
    pdfs = batch_target_pdfs(schedule, store, edges, epoch, targets)
    return JsdSeries(np.array([jsd(ref, p) for p in pdfs]), "vs_global", epoch)


def consecutive_series(schedule, store, edges, epoch: int = 0, targets=None) -> JsdSeries:
    """J(Y_{b-1}, Y_b) for each consecutive batch pair."""
    pdfs = batch_target_pdfs(schedule, store, edges, epoch, targets)
    if len(pdfs) < 2:
        raise ValueError("consecutive series needs at least two batches")
    return JsdSeries(np.array([jsd(a, b) for a, b in zip(pdfs, pdfs[1:])]), "consecutive", epoch)


def position_correlation(values) -> float:
    """Pearson correlation between series values and their position."""
    v = np.asarray(values, dtype=np.float64)
    if len(v) < 2 or np.all(v == v[0]):
        return 0.0
    return float(np.corrcoef(np.arange(len(v)), v)[0, 1])


def access_summary(trace: AccessTrace) -> dict:
    """Distinct nodes per batch gather: per-epoch mean/max plus totals."""
    if not len(trace):
        raise ValueError("empty access trace")
    per_epoch: dict[int, list[int]] = {}
    for r in trace.records:
        per_epoch.setdefault(r.epoch, []).append(len(r.nodes))
    counts = [n for ns in per_epoch.values() for n in ns]
    return {
        "epochs": [
            {"epoch": e, "batches": len(ns), "mean_nodes": float(np.mean(ns)), "max_nodes": int(max(ns))}
            for e, ns in sorted(per_epoch.items())
        ],
        "mean_nodes": float(np.mean(counts)),
        "max_nodes": int(max(counts)),
        "total_node_touches": int(sum(counts)),
        "samples_fetched": int(sum(r.samples for r in trace.records)),
    }


def write_series_csv(path, vs_global: JsdSeries, consecutive: JsdSeries | None) -> None:
    """Rows ``epoch,batch,jsd_vs_global,jsd_consecutive``; batch 0 has no consecutive value."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "batch", "jsd_vs_global", "jsd_consecutive"])
        for b, v in enumerate(vs_global.values):
            c = "" if consecutive is None or b == 0 else repr(float(consecutive.values[b - 1]))
            w.writerow([vs_global.epoch, b, repr(float(v)), c])
