"""Built-in correctness checks behind the ``selftest`` CLI command.

Two suites: the aggregation-identity sweep (reduced path vs the quadratic
reference on random row-stochastic inputs) and end-to-end gradient checks
against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import normalize_adjacency, row_normalize_features
from .gcn import GcnParams, gcn_backward, gcn_forward, glorot_init
from .lc import (
    build_consistency_mask,
    classification_loss,
    lc_aggregate,
    lc_aggregate_naive,
    lc_backward,
    regularization_loss,
    total_loss,
)
from .linalg import CsrMatrix, row_normalize


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def theorem_equivalence_check(trials: int = 100, seed: int = 1234,
                              tol: float = 1e-10) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 51))
        m = int(rng.integers(2, 8))
        z = row_normalize(rng.random((n, m)) + 1e-3)
        diff = float(np.abs(lc_aggregate(z).z_hat - lc_aggregate_naive(z)).max())
        worst = max(worst, diff)
    return CheckResult(
        name=f"aggregation-identity ({trials} random instances)",
        passed=worst <= tol,
        detail=f"max |reduced - naive| = {worst:.3e} (tolerance {tol:.0e})")


def _random_instance(seed: int, n: int = 8, p: int = 5, d: int = 4, m: int = 3):
    rng = np.random.default_rng(seed)
    rows, cols = [], []
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < 0.35:
                rows += [a, b]
                cols += [b, a]
    if not rows:
        rows, cols = [0, 1], [1, 0]
    graph = CsrMatrix.from_coo(n, rows, cols, np.ones(len(rows)))
    labels = rng.integers(0, m, size=n)
    for c in range(m):
        labels[c] = c
    x = row_normalize_features(rng.random((n, p)))
    a_hat = normalize_adjacency(graph)
    params = GcnParams(glorot_init(p, d, seed * 2 + 1), glorot_init(d, m, seed * 2 + 2))
    train_idx = np.arange(m + 1)
    return a_hat, x, params, labels, train_idx


def _fd(fn, w, h):
    g = np.zeros_like(w)
    flat, gflat = w.ravel(), g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn()
        flat[i] = orig - h
        fm = fn()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def _max_rel(a, b, floor=1e-8):
    scale = np.maximum(np.abs(a), np.abs(b))
    rel = np.where(scale > floor, np.abs(a - b) / np.maximum(scale, floor), 0.0)
    return float(rel.max())


def gradient_check(seeds=(0, 1, 2, 3, 4), lams=(0.0, 1.0, 2.0), h: float = 1e-5,
                   tol: float = 1e-4) -> CheckResult:
    """End-to-end weight gradients of the combined loss vs finite differences."""
    worst = 0.0
    for seed in seeds:
        a_hat, x, params, labels, train_idx = _random_instance(seed)
        mask = build_consistency_mask(labels, train_idx)
        for lam in lams:
            def loss() -> float:
                z = gcn_forward(a_hat, x, params).z
                z_hat = lc_aggregate(z).z_hat
                l_c = classification_loss(z_hat, labels, train_idx)[0]
                l_r = regularization_loss(z, mask)[0] if lam else 0.0
                return total_loss(l_c, l_r, lam)

            trace = gcn_forward(a_hat, x, params)
            z_hat = lc_aggregate(trace.z).z_hat
            _, g_zhat = classification_loss(z_hat, labels, train_idx)
            dz = lc_backward(trace.z, g_zhat, mask if lam else None, lam)
            grads = gcn_backward(trace, dz)
            worst = max(worst, _max_rel(grads.w0, _fd(loss, params.w0, h)))
            worst = max(worst, _max_rel(grads.w1, _fd(loss, params.w1, h)))
    return CheckResult(
        name=f"gradient-check (seeds={list(seeds)}, lambda={list(lams)}, h={h:g})",
        passed=worst <= tol,
        detail=f"max relative error vs central differences = {worst:.3e} (tolerance {tol:.0e})")


def run_all() -> list[CheckResult]:
    return [theorem_equivalence_check(), gradient_check()]
