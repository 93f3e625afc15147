"""Dense and sparse float64 linear-algebra kernels shared by every other module.

A dense matrix here is a plain 2-D ``numpy.ndarray`` with dtype float64 and
row-major layout; ``DenseMatrix`` is an alias documenting that convention.
Square sparse operators (the normalized adjacency) use compressed-sparse-row
storage, see :class:`CsrMatrix`.

All operations are pure functions: they never mutate their inputs and are safe
to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DenseMatrix = np.ndarray


def as_dense(a) -> DenseMatrix:
    """Coerce ``a`` into a float64, C-contiguous, 2-D array.

    Raises ValueError if the result is not 2-D or contains non-finite values.
    """
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={out.ndim}")
    if not np.all(np.isfinite(out)):
        raise ValueError("matrix contains non-finite values")
    return out


@dataclass(frozen=True)
class CsrMatrix:
    """Square sparse matrix in compressed-sparse-row form.

    Invariants (enforced at construction):
      * ``row_ptr`` is non-decreasing with ``row_ptr[0] == 0`` and
        ``row_ptr[n] == nnz``;
      * column indices are strictly increasing within each row (duplicate
        (row, col) entries are rejected) and all ``< n``;
      * values are finite.
    """

    n: int
    row_ptr: np.ndarray = field(repr=False)
    col_idx: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "row_ptr", np.ascontiguousarray(self.row_ptr, dtype=np.int64))
        object.__setattr__(self, "col_idx", np.ascontiguousarray(self.col_idx, dtype=np.int64))
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=np.float64))
        if self.n < 0:
            raise ValueError(f"negative dimension n={self.n}")
        rp, ci, vals = self.row_ptr, self.col_idx, self.values
        if rp.shape != (self.n + 1,):
            raise ValueError(f"row_ptr has length {rp.size}, expected n+1={self.n + 1}")
        if rp[0] != 0 or rp[-1] != ci.size or np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr must be non-decreasing with row_ptr[0]=0, row_ptr[n]=nnz")
        if ci.size != vals.size:
            raise ValueError(f"col_idx ({ci.size}) and values ({vals.size}) lengths differ")
        if ci.size:
            if ci.min() < 0 or ci.max() >= self.n:
                raise ValueError("column index out of range")
            # strictly increasing within each row; equal neighbors mean a duplicate entry
            row_of = np.repeat(np.arange(self.n), np.diff(rp))
            same_row = row_of[1:] == row_of[:-1]
            if np.any(np.diff(ci)[same_row] <= 0):
                raise ValueError("column indices must be strictly increasing within each row "
                                 "(duplicate (row, col) entries are rejected)")
        if not np.all(np.isfinite(vals)):
            raise ValueError("sparse values contain non-finite entries")

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    @classmethod
    def from_coo(cls, n: int, rows, cols, values) -> "CsrMatrix":
        """Build from coordinate triplets; duplicates are rejected, entries sorted."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if not (rows.shape == cols.shape == values.shape):
            raise ValueError("rows, cols, values must have equal lengths")
        if rows.size and (rows.min() < 0 or rows.max() >= n):
            raise ValueError("row index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        row_ptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(row_ptr, rows + 1, 1)
        np.cumsum(row_ptr, out=row_ptr)
        return cls(n, row_ptr, cols, values)

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        idx = np.arange(n, dtype=np.int64)
        return cls(n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n))

    def to_dense(self) -> DenseMatrix:
        out = np.zeros((self.n, self.n))
        row_of = np.repeat(np.arange(self.n), np.diff(self.row_ptr))
        out[row_of, self.col_idx] = self.values
        return out

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(column indices, values) of row ``i``."""
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        return self.col_idx[lo:hi], self.values[lo:hi]


def spmm(a: CsrMatrix, b: DenseMatrix) -> DenseMatrix:
    """Sparse @ dense: ``result[i, :] = sum_j a[i, j] * b[j, :]``."""
    if a.n != b.shape[0]:
        raise ValueError(f"spmm shape mismatch: sparse is {a.n}x{a.n}, dense is {b.shape[0]}x{b.shape[1]}")
    out = np.zeros((a.n, b.shape[1]))
    if a.nnz == 0:
        return out
    # per-row segment sums over the scaled gathered rows of b; reduceat segments
    # are delimited by the starts of non-empty rows only, so empty rows stay zero
    prod = a.values[:, None] * b[a.col_idx]
    counts = np.diff(a.row_ptr)
    nonempty = counts > 0
    out[nonempty] = np.add.reduceat(prod, a.row_ptr[:-1][nonempty], axis=0)
    return out


def matmul(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    """Standard dense product a @ b."""
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape[0]}x{a.shape[1]} @ {b.shape[0]}x{b.shape[1]}")
    return a @ b


def row_normalize(t: DenseMatrix) -> DenseMatrix:
    """Divide each row by its sum; every row sum must be strictly positive."""
    sums = t.sum(axis=1)
    bad = np.flatnonzero(sums <= 0)
    if bad.size:
        raise ValueError(f"non-positive row sum at row {bad[0]}")
    return t / sums[:, None]


def softmax_rows(x: DenseMatrix) -> DenseMatrix:
    """Row-wise softmax, stabilized by per-row max subtraction."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def relu(x: DenseMatrix) -> DenseMatrix:
    return np.maximum(x, 0.0)


def check_row_stochastic(z: DenseMatrix, tol: float = 1e-9, what: str = "Z") -> None:
    """Assert every row of ``z`` sums to 1 within ``tol``; fires continuously
    on the training path, so violations surface at the step that caused them."""
    dev = np.abs(z.sum(axis=1) - 1.0)
    worst = int(np.argmax(dev))
    if dev[worst] > tol:
        raise AssertionError(
            f"{what} is not row-stochastic: worst row deviation {dev[worst]:.3e} at row {worst}")
