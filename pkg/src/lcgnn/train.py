"""Adam training with the two-stage schedule and best-validation selection.

Stage one trains the plain base model on cross-entropy over Z; stage two
continues from those weights with the label-consistency head and the combined
loss. Ablation variants:

  * ``full``         -- aggregation head plus pairwise regularization;
  * ``no_rl``        -- aggregation head, lambda = 0;
  * ``no_lc_no_rl``  -- the normalized adjacency replaces the learned
                        aggregation matrix (Z_hat = A_hat @ Z), lambda = 0;
  * ``base_only``    -- the plain base model, no head at all.

Randomness: each training stage owns one PCG64 stream. Fresh-init stages
(stage one and ``base_only``) seed it with SeedSequence((seed, 0)) and draw,
in order, the w0 init seed, the w1 init seed, then one dropout seed per epoch.
Continued stages seed with SeedSequence((seed, 1)) and draw only the per-epoch
dropout seeds. Identical (dataset, config) therefore reproduce runs bit for
bit.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset, normalize_adjacency, row_normalize_features
from .gcn import GcnParams, Gradients, gcn_backward, gcn_forward, glorot_init
from .lc import (
    build_consistency_mask,
    classification_loss,
    lc_aggregate,
    lc_backward,
    regularization_loss,
    total_loss,
)
from .linalg import CsrMatrix, DenseMatrix, spmm

logger = logging.getLogger(__name__)

VARIANTS = ("full", "no_rl", "no_lc_no_rl", "base_only")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    lr: float = 0.01
    weight_decay: float = 5e-4
    lam: float = 2.0
    epochs: int = 1000
    pretrain_epochs: int = 200
    hidden: int = 16
    dropout: float = 0.5
    seed: int = 0
    variant: str = "full"

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.epochs < 1 or self.pretrain_epochs < 1:
            raise ValueError("epochs and pretrain_epochs must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout {self.dropout} outside [0, 1)")
        if self.lam < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if self.hidden < 1:
            raise ValueError("hidden size must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")


@dataclass
class AdamState:
    m: dict[str, DenseMatrix]
    v: dict[str, DenseMatrix]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: GcnParams) -> "AdamState":
        return cls(m={"w0": np.zeros_like(params.w0), "w1": np.zeros_like(params.w1)},
                   v={"w0": np.zeros_like(params.w0), "w1": np.zeros_like(params.w1)})


@dataclass
class RunResult:
    best_params: GcnParams
    best_val_acc: float
    test_acc: float
    history: list[dict] = field(repr=False)
    best_epoch: int
    variant: str
    config: TrainConfig
    final: dict[str, float]

    def to_json_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "variant": self.variant,
            "best_epoch": self.best_epoch,
            "best_val_acc": self.best_val_acc,
            "test_acc": self.test_acc,
            "final": self.final,
            "history": self.history,
        }


def adam_step(params: GcnParams, grads: Gradients, state: AdamState,
              lr: float, weight_decay: float) -> tuple[GcnParams, AdamState]:
    """One coupled-L2 Adam update; returns fresh params and advanced state."""
    for name, g in (("w0", grads.w0), ("w1", grads.w1)):
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient for {name}")
    t = state.step + 1
    new_params, new_m, new_v = {}, {}, {}
    for name, p, g in (("w0", params.w0, grads.w0), ("w1", params.w1, grads.w1)):
        g = g + weight_decay * p
        m = ADAM_BETA1 * state.m[name] + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * state.v[name] + (1.0 - ADAM_BETA2) * (g * g)
        m_hat = m / (1.0 - ADAM_BETA1 ** t)
        v_hat = v / (1.0 - ADAM_BETA2 ** t)
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        new_m[name], new_v[name] = m, v
    return (GcnParams(new_params["w0"], new_params["w1"]),
            AdamState(m=new_m, v=new_v, step=t))


def accuracy(scores: DenseMatrix, labels: np.ndarray, idx: np.ndarray) -> float:
    """Fraction of argmax predictions matching labels on ``idx``.

    Ties break toward the lowest class index (argmax convention).
    """
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        return float("nan")
    preds = np.argmax(scores[idx], axis=1)
    return float(np.mean(preds == np.asarray(labels)[idx]))


def preprocess(dataset: Dataset) -> tuple[CsrMatrix, DenseMatrix]:
    """Normalized adjacency and row-normalized features, as trained on."""
    return normalize_adjacency(dataset.graph), row_normalize_features(dataset.features)


def apply_head(z: DenseMatrix, variant: str, a_hat: CsrMatrix) -> DenseMatrix:
    """Scores the classification loss and accuracy are computed from."""
    if variant in ("full", "no_rl"):
        return lc_aggregate(z).z_hat
    if variant == "no_lc_no_rl":
        return spmm(a_hat, z)
    return z


def _epoch_seeds(seed: int, stage: int) -> np.random.Generator:
    return np.random.default_rng(np.random.PCG64(np.random.SeedSequence((seed, stage))))


def _draw_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2 ** 63))


def _train_loop(dataset: Dataset, config: TrainConfig, params: GcnParams,
                epochs: int, variant: str, stream: np.random.Generator) -> RunResult:
    a_hat, x = preprocess(dataset)
    labels, split = dataset.labels, dataset.split
    mask = build_consistency_mask(labels, split.train_idx) if variant == "full" else None
    lam = config.lam if variant == "full" else 0.0
    state = AdamState.zeros_like(params)

    history: list[dict] = []
    best_val, best_epoch, best_params = -1.0, 0, params.copy()
    for epoch in range(1, epochs + 1):
        trace = gcn_forward(a_hat, x, params, dropout=config.dropout,
                            rng_seed=_draw_seed(stream), training=True)
        z = trace.z
        if variant in ("full", "no_rl"):
            z_hat = lc_aggregate(z).z_hat
            l_c, g_zhat = classification_loss(z_hat, labels, split.train_idx)
            l_r = regularization_loss(z, mask)[0] if variant == "full" else 0.0
            loss = total_loss(l_c, l_r, lam)
            dz = lc_backward(z, g_zhat, mask, lam)
        elif variant == "no_lc_no_rl":
            z_hat = spmm(a_hat, z)
            loss, g_zhat = classification_loss(z_hat, labels, split.train_idx)
            dz = spmm(a_hat, g_zhat)  # A_hat is symmetric
        else:  # base_only
            loss, dz = classification_loss(z, labels, split.train_idx)
        grads = gcn_backward(trace, dz)
        params, state = adam_step(params, grads, state, config.lr, config.weight_decay)

        z_eval = gcn_forward(a_hat, x, params, training=False).z
        val_acc = accuracy(apply_head(z_eval, variant, a_hat), labels, split.val_idx)
        history.append({"epoch": epoch, "train_loss": loss, "val_acc": val_acc})
        if val_acc > best_val:  # ties keep the earlier epoch
            best_val, best_epoch, best_params = val_acc, epoch, params.copy()
        if epoch % 100 == 0 or epoch == epochs:
            logger.info("%s epoch %d/%d loss=%.4f val_acc=%.4f best=%.4f@%d",
                        variant, epoch, epochs, loss, val_acc, best_val, best_epoch)

    z_best = gcn_forward(a_hat, x, best_params, training=False).z
    scores = apply_head(z_best, variant, a_hat)
    final = {
        "train_acc": accuracy(scores, labels, split.train_idx),
        "val_acc": accuracy(scores, labels, split.val_idx),
        "test_acc": accuracy(scores, labels, split.test_idx),
    }
    return RunResult(best_params=best_params, best_val_acc=best_val,
                     test_acc=final["test_acc"], history=history,
                     best_epoch=best_epoch, variant=variant, config=config,
                     final=final)


def pretrain_base(dataset: Dataset, config: TrainConfig) -> GcnParams:
    """Stage one: plain base model, cross-entropy on Z, best-val weights out."""
    stream = _epoch_seeds(config.seed, stage=0)
    params = _fresh_params(dataset, config, stream)
    result = _train_loop(dataset, config, params, config.pretrain_epochs,
                         "base_only", stream)
    return result.best_params


def train_lc(dataset: Dataset, config: TrainConfig,
             init: GcnParams | None = None) -> RunResult:
    """Stage two (or a from-scratch ablation when ``init`` is None)."""
    if init is None:
        stream = _epoch_seeds(config.seed, stage=0)
        params = _fresh_params(dataset, config, stream)
    else:
        stream = _epoch_seeds(config.seed, stage=1)
        params = init.copy()
    return _train_loop(dataset, config, params, config.epochs, config.variant, stream)


def run_experiment(dataset: Dataset, config: TrainConfig) -> RunResult:
    """Full pipeline for one (dataset, config): pretrain where the variant
    uses the head, then the main stage."""
    if config.variant == "base_only":
        return train_lc(dataset, config, init=None)
    init = pretrain_base(dataset, config)
    return train_lc(dataset, config, init=init)


def _fresh_params(dataset: Dataset, config: TrainConfig,
                  stream: np.random.Generator) -> GcnParams:
    w0 = glorot_init(dataset.num_features, config.hidden, _draw_seed(stream))
    w1 = glorot_init(config.hidden, dataset.num_classes, _draw_seed(stream))
    return GcnParams(w0, w1)


def evaluate(params: GcnParams, dataset: Dataset, use_lc: bool) -> dict[str, float]:
    """Deterministic split accuracies from Z_hat (``use_lc``) or Z."""
    return evaluate_variant(params, dataset, "full" if use_lc else "base_only")


def evaluate_variant(params: GcnParams, dataset: Dataset, variant: str) -> dict[str, float]:
    """Split accuracies under the exact head a given variant trains with."""
    a_hat, x = preprocess(dataset)
    z = gcn_forward(a_hat, x, params, training=False).z
    scores = apply_head(z, variant, a_hat)
    return {
        "train_acc": accuracy(scores, dataset.labels, dataset.split.train_idx),
        "val_acc": accuracy(scores, dataset.labels, dataset.split.val_idx),
        "test_acc": accuracy(scores, dataset.labels, dataset.split.test_idx),
    }


def predict_labels(params: GcnParams, dataset: Dataset, variant: str = "base_only") -> np.ndarray:
    """Argmax class predictions for every node under the given head."""
    a_hat, x = preprocess(dataset)
    z = gcn_forward(a_hat, x, params, training=False).z
    return np.argmax(apply_head(z, variant, a_hat), axis=1)
