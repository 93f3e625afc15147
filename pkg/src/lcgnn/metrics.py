"""Accuracy analysis: per-node label consistency, consistency-vs-accuracy
curves, multi-seed aggregation, and the ablation / sparse-label experiment
drivers.

Experiment drivers fan runs out to a small thread pool (``max_workers``, or
the ``LC_GNN_THREADS`` environment variable, default 1) and merge results in
deterministic (variant, seed) order, so parallelism never changes output.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, make_sparse_split, with_split
from .linalg import CsrMatrix
from .train import RunResult, TrainConfig, run_experiment

ABLATION_VARIANTS = ("base_only", "no_lc_no_rl", "no_rl", "full")
SPARSE_VARIANTS = ("base_only", "full")


@dataclass(frozen=True)
class SeedAggregate:
    """Per-seed test accuracies with their mean and sample std."""

    accuracies: tuple[float, ...]
    mean: float
    std: float


@dataclass(frozen=True)
class ConsistencyCurve:
    """Bucketed consistency-vs-accuracy summary over the test nodes."""

    edges: np.ndarray        # bucket boundaries, length buckets + 1
    counts: np.ndarray       # nodes per bucket
    accuracies: np.ndarray   # per-bucket accuracy, NaN where count == 0

    @property
    def midpoints(self) -> np.ndarray:
        return (self.edges[:-1] + self.edges[1:]) / 2.0


def node_label_consistency(graph: CsrMatrix, labels: np.ndarray) -> np.ndarray:
    """Per node: fraction of its neighbors sharing its label.

    Isolated nodes get NaN (undefined) and are excluded from curves.
    """
    labels = np.asarray(labels)
    counts = np.diff(graph.row_ptr)
    row_of = np.repeat(np.arange(graph.n), counts)
    same = (labels[row_of] == labels[graph.col_idx]).astype(np.float64)
    agree = np.zeros(graph.n)
    np.add.at(agree, row_of, same)
    out = np.full(graph.n, np.nan)
    nz = counts > 0
    out[nz] = agree[nz] / counts[nz]
    return out


def consistency_accuracy_curve(dataset: Dataset, predictions: np.ndarray,
                               buckets: int) -> ConsistencyCurve:
    """Bucket the test nodes by label consistency and score each bucket."""
    if buckets < 1:
        raise ValueError("buckets must be >= 1")
    predictions = np.asarray(predictions)
    if predictions.shape != (dataset.num_nodes,):
        raise ValueError(f"predictions must cover all {dataset.num_nodes} nodes")
    cons = node_label_consistency(dataset.graph, dataset.labels)
    idx = dataset.split.test_idx
    idx = idx[~np.isnan(cons[idx])]

    edges = np.linspace(0.0, 1.0, buckets + 1)
    which = np.minimum((cons[idx] * buckets).astype(np.int64), buckets - 1)
    correct = (predictions[idx] == dataset.labels[idx]).astype(np.float64)
    counts = np.bincount(which, minlength=buckets)
    hits = np.bincount(which, weights=correct, minlength=buckets)
    accs = np.full(buckets, np.nan)
    nz = counts > 0
    accs[nz] = hits[nz] / counts[nz]
    return ConsistencyCurve(edges=edges, counts=counts, accuracies=accs)


def aggregate_seeds(accuracies) -> SeedAggregate:
    """Mean and sample standard deviation (n-1 denominator; 0 for one run)."""
    accs = tuple(float(a) for a in accuracies)
    if not accs:
        raise ValueError("empty accuracy list")
    mean = float(np.mean(accs))
    std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
    return SeedAggregate(accuracies=accs, mean=mean, std=std)


def spearman_rank_correlation(x, y) -> float:
    """Spearman correlation with average ranks for ties."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size or x.size < 2:
        raise ValueError("need two same-length sequences of length >= 2")
    rx, ry = _average_ranks(x), _average_ranks(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    if denom == 0:
        return 0.0
    return float((rx * ry).sum() / denom)


def _average_ranks(v: np.ndarray) -> np.ndarray:
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size)
    sv = v[order]
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _worker_count(max_workers: int | None) -> int:
    if max_workers is not None:
        return max(1, max_workers)
    return max(1, int(os.environ.get("LC_GNN_THREADS", "1")))


def _run_jobs(jobs: dict, max_workers: int | None) -> dict:
    """jobs: key -> zero-arg callable; returns key -> result, insertion order."""
    workers = _worker_count(max_workers)
    if workers == 1:
        return {key: fn() for key, fn in jobs.items()}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {key: pool.submit(fn) for key, fn in jobs.items()}
        return {key: fut.result() for key, fut in futures.items()}


def run_ablation(dataset: Dataset, base_config: TrainConfig, seeds,
                 variants=ABLATION_VARIANTS,
                 max_workers: int | None = None) -> dict[str, SeedAggregate]:
    """Train every variant on identical seeds and splits; aggregate per variant."""
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ValueError("need at least 2 seeds")
    jobs = {}
    for variant in variants:
        for seed in seeds:
            cfg = replace(base_config, variant=variant, seed=seed)
            jobs[(variant, seed)] = (lambda c=cfg: run_experiment(dataset, c))
    results: dict[tuple, RunResult] = _run_jobs(jobs, max_workers)
    return {variant: aggregate_seeds([results[(variant, s)].test_acc for s in seeds])
            for variant in variants}


def run_sparse_experiment(dataset: Dataset, labels_per_class: int, seeds,
                          base_config: TrainConfig, variants=SPARSE_VARIANTS,
                          max_workers: int | None = None,
                          val_size: int = 500, test_size: int = 1000) -> dict[str, SeedAggregate]:
    """Sparse-label study: a fresh random split per seed, shared by variants."""
    seeds = list(seeds)
    datasets = {seed: with_split(dataset, make_sparse_split(dataset, labels_per_class, seed,
                                                            val_size=val_size, test_size=test_size))
                for seed in seeds}
    jobs = {}
    for variant in variants:
        for seed in seeds:
            cfg = replace(base_config, variant=variant, seed=seed)
            jobs[(variant, seed)] = (lambda c=cfg, d=datasets[seed]: run_experiment(d, c))
    results: dict[tuple, RunResult] = _run_jobs(jobs, max_workers)
    return {variant: aggregate_seeds([results[(variant, s)].test_acc for s in seeds])
            for variant in variants}


def format_aggregate_table(title: str, aggregates: dict[str, SeedAggregate],
                           label_for: dict[str, str] | None = None) -> str:
    """Plain-text table in the familiar `name  mean±std` layout."""
    label_for = label_for or {}
    width = max(len(label_for.get(k, k)) for k in aggregates)
    lines = [title, "-" * len(title)]
    for key, agg in aggregates.items():
        name = label_for.get(key, key)
        lines.append(f"{name:<{width}}  {100 * agg.mean:.1f}% ± {100 * agg.std:.1f}%")
    return "\n".join(lines) + "\n"


def curve_to_tsv(curve: ConsistencyCurve) -> str:
    """(bucket midpoint, count, accuracy) rows; empty buckets say 'nan'."""
    lines = ["consistency_bucket\tcount\taccuracy"]
    for mid, cnt, acc in zip(curve.midpoints, curve.counts, curve.accuracies):
        acc_s = "nan" if np.isnan(acc) else f"{acc:.6f}"
        lines.append(f"{mid:.3f}\t{int(cnt)}\t{acc_s}")
    return "\n".join(lines) + "\n"
