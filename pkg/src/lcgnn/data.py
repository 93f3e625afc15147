"""Dataset loading, adjacency/feature normalization, and split construction.

Canonical on-disk dataset directory (plain text + JSON, all indices 0-based):

* ``meta.json``     -- ``{"name", "num_nodes", "num_features", "num_classes"}``
                       (extra keys such as an edge count are tolerated)
* ``edges.tsv``     -- one undirected edge per line, ``src<TAB>dst`` with
                       ``src < dst``, no duplicates
* ``features.tsv``  -- ``node<TAB>feature<TAB>value`` for each nonzero
* ``labels.tsv``    -- ``node<TAB>label`` for every node
* ``splits.json``   -- ``{"train": [...], "val": [...], "test": [...]}``
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .linalg import CsrMatrix, DenseMatrix


@dataclass(frozen=True)
class Split:
    """Disjoint node-index sets for train / validation / test."""

    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray

    def __post_init__(self) -> None:
        for name in ("train_idx", "val_idx", "test_idx"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        if self.train_idx.size == 0:
            raise ValueError("train_idx must be non-empty")
        parts = [self.train_idx, self.val_idx, self.test_idx]
        total = sum(p.size for p in parts)
        if np.unique(np.concatenate(parts)).size != total:
            raise ValueError("train/val/test indices must be pairwise disjoint and duplicate-free")

    def validate_against(self, n: int) -> None:
        hi = max(int(p.max()) for p in (self.train_idx, self.val_idx, self.test_idx) if p.size)
        lo = min(int(p.min()) for p in (self.train_idx, self.val_idx, self.test_idx) if p.size)
        if lo < 0 or hi >= n:
            raise ValueError(f"split index {hi if hi >= n else lo} out of range for {n} nodes")


@dataclass(frozen=True)
class Dataset:
    """Graph, features, labels, and named splits.

    ``graph`` holds the raw unweighted symmetric adjacency (value 1.0 per edge,
    zero diagonal); normalization is a separate step.
    """

    name: str
    graph: CsrMatrix
    features: DenseMatrix
    labels: np.ndarray
    num_classes: int
    split: Split = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-D, got ndim={feats.ndim}")
        object.__setattr__(self, "features", feats)
        n = self.graph.n
        if n <= 0 or self.num_features <= 0 or self.num_classes <= 0:
            raise ValueError("dataset dimensions must be positive")
        if self.features.shape[0] != n:
            raise ValueError(f"features have {self.features.shape[0]} rows for {n} nodes")
        if self.labels.shape != (n,):
            raise ValueError(f"labels have shape {self.labels.shape}, expected ({n},)")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError("label out of range")
        self.split.validate_against(n)
        _check_symmetric_zero_diag(self.graph)

    @property
    def num_nodes(self) -> int:
        return self.graph.n

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    @property
    def num_edges(self) -> int:
        """Undirected edge count (adjacency nnz / 2)."""
        return self.graph.nnz // 2


def _check_symmetric_zero_diag(a: CsrMatrix) -> None:
    row_of = np.repeat(np.arange(a.n), np.diff(a.row_ptr))
    if np.any(row_of == a.col_idx):
        raise ValueError("adjacency has nonzero diagonal entries")
    # symmetry: the sorted (row, col) pairs must equal the sorted (col, row) pairs
    fwd = row_of * a.n + a.col_idx
    bwd = a.col_idx * a.n + row_of
    if not np.array_equal(np.sort(fwd), np.sort(bwd)):
        raise ValueError("adjacency is not symmetric")


def _read_lines(path: Path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if line:
                yield lineno, line


def _parse_int(token: str, path: Path, lineno: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise ValueError(f"{path}:{lineno}: malformed {what} {token!r}") from None


def load_dataset(path) -> Dataset:
    """Load a canonical dataset directory, validating every invariant.

    The edge list stores each undirected edge once (``src < dst``); both
    directions are materialized here.
    """
    root = Path(path)
    for fname in ("meta.json", "edges.tsv", "features.tsv", "labels.tsv", "splits.json"):
        if not (root / fname).is_file():
            raise FileNotFoundError(f"dataset directory {root} is missing {fname}")

    with open(root / "meta.json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    n = int(meta["num_nodes"])
    p = int(meta["num_features"])
    m = int(meta["num_classes"])

    srcs, dsts = [], []
    epath = root / "edges.tsv"
    for lineno, line in _read_lines(epath):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{epath}:{lineno}: expected 'src<TAB>dst', got {line!r}")
        s = _parse_int(parts[0], epath, lineno, "node index")
        d = _parse_int(parts[1], epath, lineno, "node index")
        if not (0 <= s < n and 0 <= d < n):
            raise ValueError(f"{epath}:{lineno}: node index out of range for {n} nodes")
        if s >= d:
            raise ValueError(f"{epath}:{lineno}: edges must satisfy src < dst")
        srcs.append(s)
        dsts.append(d)
    src = np.asarray(srcs, dtype=np.int64)
    dst = np.asarray(dsts, dtype=np.int64)
    rows = np.concatenate([src, dst])
    cols = np.concatenate([dst, src])
    graph = CsrMatrix.from_coo(n, rows, cols, np.ones(rows.size))  # rejects duplicate edges

    features = np.zeros((n, p))
    fpath = root / "features.tsv"
    for lineno, line in _read_lines(fpath):
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{fpath}:{lineno}: expected 'node<TAB>feature<TAB>value', got {line!r}")
        i = _parse_int(parts[0], fpath, lineno, "node index")
        j = _parse_int(parts[1], fpath, lineno, "feature index")
        try:
            v = float(parts[2])
        except ValueError:
            raise ValueError(f"{fpath}:{lineno}: malformed value {parts[2]!r}") from None
        if not (0 <= i < n):
            raise ValueError(f"{fpath}:{lineno}: node index {i} out of range")
        if not (0 <= j < p):
            raise ValueError(f"{fpath}:{lineno}: feature index {j} out of range")
        features[i, j] = v

    labels = np.full(n, -1, dtype=np.int64)
    lpath = root / "labels.tsv"
    for lineno, line in _read_lines(lpath):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{lpath}:{lineno}: expected 'node<TAB>label', got {line!r}")
        i = _parse_int(parts[0], lpath, lineno, "node index")
        y = _parse_int(parts[1], lpath, lineno, "label")
        if not (0 <= i < n):
            raise ValueError(f"{lpath}:{lineno}: node index {i} out of range")
        if not (0 <= y < m):
            raise ValueError(f"{lpath}:{lineno}: label {y} out of range for {m} classes")
        labels[i] = y
    missing = np.flatnonzero(labels < 0)
    if missing.size:
        raise ValueError(f"{lpath}: node {missing[0]} has no label")

    with open(root / "splits.json", "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    split = Split(raw["train"], raw["val"], raw["test"])

    return Dataset(str(meta.get("name", root.name)), graph, features, labels, m, split)


def save_dataset(dataset: Dataset, path) -> None:
    """Write ``dataset`` in the canonical directory format (inverse of load)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = {
        "name": dataset.name,
        "num_nodes": dataset.num_nodes,
        "num_features": dataset.num_features,
        "num_classes": dataset.num_classes,
        "num_edges": dataset.num_edges,
    }
    _atomic_write(root / "meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")

    row_of = np.repeat(np.arange(dataset.graph.n), np.diff(dataset.graph.row_ptr))
    upper = row_of < dataset.graph.col_idx
    lines = [f"{s}\t{d}" for s, d in zip(row_of[upper], dataset.graph.col_idx[upper])]
    _atomic_write(root / "edges.tsv", "\n".join(lines) + ("\n" if lines else ""))

    ri, ci = np.nonzero(dataset.features)
    lines = [f"{i}\t{j}\t{float(dataset.features[i, j])!r}" for i, j in zip(ri, ci)]
    _atomic_write(root / "features.tsv", "\n".join(lines) + ("\n" if lines else ""))

    _atomic_write(root / "labels.tsv",
                  "\n".join(f"{i}\t{y}" for i, y in enumerate(dataset.labels)) + "\n")

    splits = {
        "train": [int(i) for i in dataset.split.train_idx],
        "val": [int(i) for i in dataset.split.val_idx],
        "test": [int(i) for i in dataset.split.test_idx],
    }
    _atomic_write(root / "splits.json", json.dumps(splits, sort_keys=True) + "\n")


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def normalize_adjacency(a: CsrMatrix) -> CsrMatrix:
    """Self-loop renormalization: ``D̃^{-1/2} (A + I) D̃^{-1/2}``.

    ``D̃`` is the degree matrix of ``A + I``, so isolated nodes keep a positive
    degree. The result is symmetric bit-for-bit because entry (i, j) is
    computed as the same product ``w_ij / (sqrt(d_i) * sqrt(d_j))`` on both
    sides.
    """
    _check_symmetric_zero_diag(a)
    n = a.n
    counts = np.diff(a.row_ptr)
    deg = counts + 1  # self-loop added
    inv_sqrt = 1.0 / np.sqrt(deg.astype(np.float64))

    row_of = np.repeat(np.arange(n), counts)
    rows = np.concatenate([row_of, np.arange(n)])
    cols = np.concatenate([a.col_idx, np.arange(n)])
    weights = np.concatenate([a.values, np.ones(n)])
    values = weights * inv_sqrt[rows] * inv_sqrt[cols]
    return CsrMatrix.from_coo(n, rows, cols, values)


def row_normalize_features(x: DenseMatrix) -> DenseMatrix:
    """Divide each nonzero row by its sum; all-zero rows pass through unchanged."""
    sums = x.sum(axis=1)
    safe = np.where(sums != 0, sums, 1.0)
    return x / safe[:, None]


def make_sparse_split(dataset: Dataset, labels_per_class: int, seed: int,
                      val_size: int = 500, test_size: int = 1000) -> Split:
    """Random low-label split: ``labels_per_class`` train nodes per class, then
    ``val_size`` validation and ``test_size`` test nodes from the remainder,
    all drawn from one PCG64 stream keyed by ``seed``.
    """
    if labels_per_class < 1:
        raise ValueError("labels_per_class must be >= 1")
    rng = np.random.default_rng(np.random.PCG64(seed))
    train_parts = []
    for c in range(dataset.num_classes):
        members = np.flatnonzero(dataset.labels == c)
        if members.size < labels_per_class:
            raise ValueError(
                f"class {c} has only {members.size} nodes, need {labels_per_class}")
        train_parts.append(rng.choice(members, size=labels_per_class, replace=False))
    train = np.sort(np.concatenate(train_parts))

    remaining = np.setdiff1d(np.arange(dataset.num_nodes), train, assume_unique=False)
    if remaining.size < val_size + test_size:
        raise ValueError(
            f"only {remaining.size} nodes left for val+test, need {val_size + test_size}")
    val = np.sort(rng.choice(remaining, size=val_size, replace=False))
    remaining = np.setdiff1d(remaining, val, assume_unique=True)
    test = np.sort(rng.choice(remaining, size=test_size, replace=False))
    return Split(train, val, test)


def with_split(dataset: Dataset, split: Split) -> Dataset:
    """Same dataset under a different split."""
    return replace(dataset, split=split)
