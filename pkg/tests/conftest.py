import os
from pathlib import Path

import numpy as np
import pytest

from lcgnn.data import Dataset, Split
from lcgnn.linalg import CsrMatrix


def data_root() -> Path:
    return Path(os.environ.get("LC_GNN_DATA", Path(__file__).resolve().parent.parent / "data"))


def real_dataset_dir(name: str):
    """Converted benchmark directory, or None when absent (tests then skip)."""
    d = data_root() / name
    return d if (d / "meta.json").is_file() else None


def require_dataset(name: str) -> Path:
    d = real_dataset_dir(name)
    if d is None:
        pytest.skip(f"converted {name} dataset not found under {data_root()} "
                    f"(set LC_GNN_DATA or run the converter)")
    return d


def two_clique_dataset(k: int = 5, noise_seed: int | None = None) -> Dataset:
    """Two k-cliques joined by one bridge edge; features indicate the clique.

    Node i < k belongs to class 0, the rest to class 1. One labeled node per
    class; the class-0 bridge endpoint sits in the validation set so that
    best-val selection cannot stop before the bridge is resolved.
    """
    n = 2 * k
    rows, cols = [], []
    for a in range(k):
        for b in range(k):
            if a != b:
                rows += [a, k + a]
                cols += [b, k + b]
    rows += [k - 1, k]
    cols += [k, k - 1]
    graph = CsrMatrix.from_coo(n, rows, cols, np.ones(len(rows)))
    features = np.zeros((n, 2))
    features[:k, 0] = 1.0
    features[k:, 1] = 1.0
    if noise_seed is not None:
        rng = np.random.default_rng(noise_seed)
        features = features + 0.05 * rng.random((n, 2))
    labels = np.array([0] * k + [1] * k)
    split = Split(train_idx=[0, k], val_idx=[k - 1, n - 1],
                  test_idx=[i for i in range(n) if i not in (0, k - 1, k, n - 1)])
    return Dataset("two-clique", graph, features, labels, 2, split)


def random_graph_dataset(seed: int, n: int = 8, p: int = 5, m: int = 3,
                         edge_prob: float = 0.35) -> Dataset:
    """Random symmetric graph with random features, for gradient checks."""
    rng = np.random.default_rng(seed)
    rows, cols = [], []
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < edge_prob:
                rows += [a, b]
                cols += [b, a]
    if not rows:  # keep at least one edge
        rows, cols = [0, 1], [1, 0]
    graph = CsrMatrix.from_coo(n, rows, cols, np.ones(len(rows)))
    features = rng.random((n, p))
    labels = rng.integers(0, m, size=n)
    for c in range(m):  # every class represented so the mask has all classes
        labels[c % n] = c
    train = list(range(min(m + 1, n)))
    rest = [i for i in range(n) if i not in train]
    split = Split(train, rest[: len(rest) // 2], rest[len(rest) // 2:])
    return Dataset("random-toy", graph, features, np.asarray(labels), m, split)


@pytest.fixture
def toy_dataset() -> Dataset:
    return two_clique_dataset()


@pytest.fixture
def toy_dataset_dir(tmp_path) -> Path:
    from lcgnn.data import save_dataset

    d = tmp_path / "two-clique"
    save_dataset(two_clique_dataset(noise_seed=123), d)
    return d
