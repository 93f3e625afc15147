"""Two-layer graph convolution base model.

Forward pass (full batch, no biases):

    Z = softmax( A_hat @ drop(ReLU( A_hat @ drop(X) @ W0 )) @ W1 )

with inverted dropout on the input features and on the hidden activations at
training time. The backward pass is hand-derived reverse mode over the same
cached intermediates; it assumes the aggregation operator is symmetric, which
``normalize_adjacency`` guarantees by construction.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linalg import CsrMatrix, DenseMatrix, check_row_stochastic, matmul, relu, softmax_rows, spmm


@dataclass
class GcnParams:
    """The two weight matrices, shapes (p, d) and (d, m)."""

    w0: DenseMatrix
    w1: DenseMatrix

    def copy(self) -> "GcnParams":
        return GcnParams(self.w0.copy(), self.w1.copy())


@dataclass
class Gradients:
    w0: DenseMatrix
    w1: DenseMatrix
    x: DenseMatrix


@dataclass
class ForwardTrace:
    """Cached intermediates of one forward pass, consumed by gcn_backward."""

    a_hat: CsrMatrix
    x_dropped: DenseMatrix      # input after dropout (or the input itself)
    h_pre: DenseMatrix          # A_hat @ x_dropped @ w0
    h_dropped: DenseMatrix      # dropout(ReLU(h_pre))
    z: DenseMatrix              # row-stochastic output
    w0: DenseMatrix
    w1: DenseMatrix
    in_mask: DenseMatrix | None   # inverted-scale masks, None when dropout off
    hid_mask: DenseMatrix | None


def glorot_init(rows: int, cols: int, seed: int) -> DenseMatrix:
    """Uniform on [-a, a] with a = sqrt(6 / (rows + cols)), PCG64-seeded."""
    if rows <= 0 or cols <= 0:
        raise ValueError(f"invalid weight shape {rows}x{cols}")
    a = np.sqrt(6.0 / (rows + cols))
    rng = np.random.default_rng(np.random.PCG64(seed))
    return rng.uniform(-a, a, size=(rows, cols))


def _dropout_mask(rng: np.random.Generator, shape, rate: float) -> DenseMatrix:
    # inverted scaling so the evaluation path needs no rescale
    return (rng.random(shape) >= rate) / (1.0 - rate)


def gcn_forward(a_hat: CsrMatrix, x: DenseMatrix, params: GcnParams,
                dropout: float = 0.0, rng_seed: int = 0,
                training: bool = False) -> ForwardTrace:
    """Run the two-layer forward pass, caching everything backward needs.

    Dropout draws from ``PCG64(rng_seed)``: first the input mask, then the
    hidden mask. With ``training=False`` the pass is deterministic and
    ``rng_seed`` is ignored.
    """
    if a_hat.n != x.shape[0]:
        raise ValueError(f"adjacency is {a_hat.n}x{a_hat.n} but features have {x.shape[0]} rows")
    if x.shape[1] != params.w0.shape[0]:
        raise ValueError(f"features {x.shape} incompatible with w0 {params.w0.shape}")
    if params.w0.shape[1] != params.w1.shape[0]:
        raise ValueError(f"w0 {params.w0.shape} incompatible with w1 {params.w1.shape}")
    if not 0.0 <= dropout < 1.0:
        raise ValueError(f"dropout rate {dropout} outside [0, 1)")

    in_mask = hid_mask = None
    if training and dropout > 0.0:
        rng = np.random.default_rng(np.random.PCG64(rng_seed))
        in_mask = _dropout_mask(rng, x.shape, dropout)
        hid_mask = _dropout_mask(rng, (x.shape[0], params.w0.shape[1]), dropout)

    xd = x * in_mask if in_mask is not None else x
    h_pre = spmm(a_hat, matmul(xd, params.w0))
    h = relu(h_pre)
    hd = h * hid_mask if hid_mask is not None else h
    z = softmax_rows(spmm(a_hat, matmul(hd, params.w1)))
    check_row_stochastic(z)
    return ForwardTrace(a_hat, xd, h_pre, hd, z, params.w0, params.w1, in_mask, hid_mask)


def gcn_backward(trace: ForwardTrace, upstream: DenseMatrix) -> Gradients:
    """Gradients of a scalar loss with dL/dZ = ``upstream`` w.r.t. w0, w1, x.

    Reuses the dropout masks cached in the trace, so forward/backward pairs
    see identical stochasticity.
    """
    if upstream.shape != trace.z.shape:
        raise ValueError(f"upstream has shape {upstream.shape}, trace Z is {trace.z.shape}")
    if not np.all(np.isfinite(upstream)):
        raise ValueError("upstream gradient contains non-finite values")

    z = trace.z
    # softmax rows: dlogits = z * (g - <g, z>_row)
    inner = np.sum(upstream * z, axis=1, keepdims=True)
    dlogits = z * (upstream - inner)

    du1 = spmm(trace.a_hat, dlogits)            # A_hat is symmetric
    dw1 = matmul(trace.h_dropped.T, du1)
    dh = matmul(du1, trace.w1.T)
    if trace.hid_mask is not None:
        dh = dh * trace.hid_mask
    dh_pre = dh * (trace.h_pre > 0)
    du0 = spmm(trace.a_hat, dh_pre)
    dw0 = matmul(trace.x_dropped.T, du0)
    dx = matmul(du0, trace.w0.T)
    if trace.in_mask is not None:
        dx = dx * trace.in_mask
    return Gradients(w0=dw0, w1=dw1, x=dx)


def save_params(params: GcnParams, path) -> None:
    """Checkpoint w0/w1 as JSON with shape headers; round-trips bit-exact."""
    payload = {
        "w0": _encode(params.w0),
        "w1": _encode(params.w1),
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
    os.replace(tmp, path)


def load_params(path) -> GcnParams:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return GcnParams(_decode(payload["w0"]), _decode(payload["w1"]))


def _encode(w: DenseMatrix) -> dict:
    return {"rows": int(w.shape[0]), "cols": int(w.shape[1]),
            "data": [float(v) for v in w.ravel()]}


def _decode(obj: dict) -> DenseMatrix:
    data = np.asarray(obj["data"], dtype=np.float64)
    if data.size != obj["rows"] * obj["cols"]:
        raise ValueError("checkpoint data length does not match its shape header")
    return data.reshape(obj["rows"], obj["cols"])
