"""Label-consistency aggregation head, its losses, and their gradients.

Given a row-stochastic label distribution Z (n x m), pairwise label
consistency is the Gram matrix Z Z^T. Row-normalizing it yields an
aggregation matrix P, and aggregation is Z_hat = P Z. Because Z is
row-stochastic, Row-Normalize(Z Z^T) Z equals Row-Normalize(Z (Z^T Z)), so the
production path computes the m x m Gram first and never forms anything
n x n; memory beyond the inputs stays O(nm + m^2).

Losses:
  * classification: cross-entropy of Z_hat against the true labels on the
    labeled nodes;
  * regularization: elementwise binary cross-entropy between the labeled-block
    Gram matrix Z Z^T and the 0/1 same-label indicator, summed over all
    ordered labeled pairs (self-pairs included);
  * combined: classification + lambda * regularization.

Log arguments are clamped to [CLAMP_EPS, 1 - CLAMP_EPS]; one-hot rows drive
the Gram entries to exactly 0 and 1 where the raw losses are singular.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import DenseMatrix, check_row_stochastic, matmul, row_normalize

CLAMP_EPS = 1e-7
INPUT_ROW_SUM_TOL = 1e-8


@dataclass(frozen=True)
class ConsistencyMask:
    """Same-label indicator over the labeled nodes.

    ``idx`` lists the labeled node ids; ``m`` is the |idx| x |idx| 0/1 matrix
    with m[i, j] = 1 iff idx[i] and idx[j] carry the same label (diagonal 1).
    """

    idx: np.ndarray
    m: DenseMatrix


@dataclass(frozen=True)
class LcOutput:
    """Aggregated distribution plus the cached quantities that produced it."""

    z_hat: DenseMatrix     # n x m, row-stochastic
    zt_z: DenseMatrix      # m x m Gram of Z
    row_sums: np.ndarray   # n, normalizer of each aggregated row


def _require_row_stochastic(z: DenseMatrix, what: str = "Z") -> None:
    dev = np.abs(z.sum(axis=1) - 1.0)
    worst = int(np.argmax(dev))
    if dev[worst] > INPUT_ROW_SUM_TOL:
        raise ValueError(f"{what} must be row-stochastic; worst row deviation "
                         f"{dev[worst]:.3e} at row {worst}")


def lc_aggregate(z: DenseMatrix) -> LcOutput:
    """Aggregate via the reduced path Row-Normalize(Z (Z^T Z)).

    Equivalent to the naive Row-Normalize(Z Z^T) Z for row-stochastic Z, but
    allocates only n x m and m x m arrays.
    """
    _require_row_stochastic(z)
    out = _aggregate_impl(z)
    check_row_stochastic(out.z_hat, what="Z_hat")
    return out


def _aggregate_impl(z: DenseMatrix) -> LcOutput:
    # the math itself, valid for any nonnegative z with positive row sums;
    # the public wrapper enforces the row-stochastic contract
    gram = matmul(z.T, z)                      # m x m
    r = matmul(z, gram)                        # n x m
    s = r.sum(axis=1)
    bad = np.flatnonzero(s <= 0)
    if bad.size:
        raise ValueError(f"non-positive row sum at row {bad[0]}")
    z_hat = r / s[:, None]
    return LcOutput(z_hat, gram, s)


def lc_aggregate_naive(z: DenseMatrix) -> DenseMatrix:
    """Reference path that materializes the full n x n aggregation matrix.

    Test-oracle only; quadratic memory.
    """
    _require_row_stochastic(z)
    p = row_normalize(matmul(z, z.T))
    return matmul(p, z)


def build_consistency_mask(labels: np.ndarray, train_idx) -> ConsistencyMask:
    idx = np.asarray(train_idx, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("train_idx is empty")
    lab = np.asarray(labels)[idx]
    m = (lab[:, None] == lab[None, :]).astype(np.float64)
    return ConsistencyMask(idx=idx, m=m)


def classification_loss(z_hat: DenseMatrix, labels: np.ndarray,
                        train_idx) -> tuple[float, DenseMatrix]:
    """Cross-entropy over the labeled nodes and its gradient w.r.t. z_hat.

    The gradient is zero on rows outside ``train_idx`` and zero where the
    clamp is active.
    """
    idx = np.asarray(train_idx, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("train_idx is empty")
    y = np.asarray(labels)[idx]
    if y.min() < 0 or y.max() >= z_hat.shape[1]:
        raise ValueError(f"label out of range for {z_hat.shape[1]} classes")
    p = z_hat[idx, y]
    clamped = np.maximum(p, CLAMP_EPS)
    loss = float(-np.log(clamped).sum())
    grad = np.zeros_like(z_hat)
    grad[idx, y] = np.where(p >= CLAMP_EPS, -1.0 / clamped, 0.0)
    return loss, grad


def regularization_loss(z: DenseMatrix, mask: ConsistencyMask) -> tuple[float, DenseMatrix]:
    """Pairwise binary cross-entropy on the labeled block of Z Z^T.

    Only the |labeled| x |labeled| block is ever formed. Returns the loss and
    its gradient w.r.t. the full Z (zero rows off the labeled set). Expects a
    row-stochastic z (not enforced; the formula is well-defined nearby).
    """
    zl = z[mask.idx]                           # l x m
    gram = matmul(zl, zl.T)                    # l x l
    clamped = np.clip(gram, CLAMP_EPS, 1.0 - CLAMP_EPS)
    labeled_pairs = mask.m
    loss = float(-(labeled_pairs * np.log(clamped)
                   + (1.0 - labeled_pairs) * np.log1p(-clamped)).sum())
    active = (gram > CLAMP_EPS) & (gram < 1.0 - CLAMP_EPS)
    dgram = np.where(active,
                     -labeled_pairs / clamped + (1.0 - labeled_pairs) / (1.0 - clamped),
                     0.0)
    dzl = matmul(dgram + dgram.T, zl)
    grad = np.zeros_like(z)
    grad[mask.idx] = dzl
    return loss, grad


def total_loss(l_c: float, l_r: float, lam: float) -> float:
    """Combined objective: classification + lam * regularization."""
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    return l_c + lam * l_r


def lc_backward(z: DenseMatrix, upstream_zhat: DenseMatrix,
                mask: ConsistencyMask | None, lam: float) -> DenseMatrix:
    """dL/dZ through the reduced aggregation path plus lam * the regularizer.

    ``upstream_zhat`` is the gradient of the classification part w.r.t. Z_hat.
    The Row-Normalize denominator is differentiated exactly.
    """
    if upstream_zhat.shape != z.shape:
        raise ValueError(f"upstream has shape {upstream_zhat.shape}, Z is {z.shape}")
    gram = matmul(z.T, z)                      # m x m, symmetric
    r = matmul(z, gram)                        # n x m
    s = r.sum(axis=1)

    # z_hat = r / s: split the upstream into the direct and denominator parts
    dr = upstream_zhat / s[:, None]
    ds = -np.sum(upstream_zhat * r, axis=1) / (s * s)
    dr_full = dr + ds[:, None]

    # r = z @ gram with gram = z.T @ z
    dgram = matmul(z.T, dr_full)
    dz = matmul(dr_full, gram) + matmul(z, dgram + dgram.T)

    if mask is not None and lam != 0.0:
        _, reg_grad = regularization_loss(z, mask)
        dz = dz + lam * reg_grad
    return dz
