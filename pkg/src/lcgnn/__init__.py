"""Semi-supervised node classification with label-consistency aggregation."""

from .linalg import CsrMatrix, DenseMatrix, matmul, relu, row_normalize, softmax_rows, spmm

__version__ = "0.1.0"

__all__ = [
    "CsrMatrix",
    "DenseMatrix",
    "matmul",
    "relu",
    "row_normalize",
    "softmax_rows",
    "spmm",
    "__version__",
]
