"""Classification + EEG-generation alignment loss.

``L_A = L_C + beta * L_G`` with ``L_G = L_MSE + L_Cont``.  The contrastive
term uses Pearson correlation between generated and recorded EEG vectors:
positives are matched rows, negatives all ordered off-diagonal pairs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor

PEARSON_EPS = 1e-8


def classification_loss(logits: Tensor, labels) -> Tensor:
    return dc.softmax_cross_entropy(logits, labels)


def mse_loss(generated: Tensor, real: Tensor) -> Tensor:
    """Batch mean of the per-vector mean squared error (equal to the mean over all entries)."""
    if generated.shape != real.shape:
        raise dc.ShapeError(f"mse_loss: shapes differ, {generated.shape} vs {real.shape}")
    return dc.mse(generated, real)


def pearson_r(x: Tensor, y: Tensor) -> Tensor:
    """Differentiable Pearson r between two D-vectors (scalar Tensor)."""
    if x.data.ndim != 1 or y.data.ndim != 1:
        raise dc.ShapeError(f"pearson_r: expected vectors, got {x.shape} and {y.shape}")
    d = x.shape[0]
    r = dc.pearson_matrix(dc.reshape(x, (1, d)), dc.reshape(y, (1, y.shape[0])), eps=PEARSON_EPS)
    return dc.reshape(r, ())


def contrastive_loss(generated: Tensor, real: Tensor) -> Tensor:
    """1 + mean_i[1 - r(S_i, R_i)] - mean_{i != j}[1 - r(S_i, R_j)]."""
    if generated.shape != real.shape or generated.data.ndim != 2:
        raise dc.ShapeError(f"contrastive_loss: need equal (N, D) shapes, got {generated.shape}, {real.shape}")
    n = generated.shape[0]
    if n < 2:
        raise ValueError("contrastive_loss: need N >= 2 for negative pairs")
    r = dc.pearson_matrix(generated, real, eps=PEARSON_EPS)
    eye = np.eye(n)
    pos = dc.sum_all(dc.mul(r, Tensor(eye)))
    allr = dc.sum_all(r)
    neg = dc.sub(allr, pos)
    # 1 + (1/N)(N - pos) - (1/(N(N-1)))(N(N-1) - neg) = 1 - pos/N + neg/(N(N-1))
    return dc.add(
        dc.scale(pos, -1.0 / n),
        dc.add(dc.scale(neg, 1.0 / (n * (n - 1))), Tensor(1.0)),
    )


@dataclass
class AlignmentLossTerms:
    total: Tensor  # L_A, differentiable
    classification: float
    mse: float
    contrastive: float
    generation: float
    beta: float

    def as_dict(self) -> dict[str, float]:
        return {
            "L_A": self.total.item(),
            "L_C": self.classification,
            "L_MSE": self.mse,
            "L_Cont": self.contrastive,
            "L_G": self.generation,
        }


def alignment_loss(
    logits: Tensor,
    labels,
    generated: Tensor,
    real: Tensor,
    beta: float,
    use_mse: bool = True,
    use_contrastive: bool = True,
) -> AlignmentLossTerms:
    """Composite loss; disabled terms are still computed and reported but left out of L_G."""
    if beta < 0:
        raise ValueError(f"alignment_loss: beta must be >= 0, got {beta}")
    n = logits.shape[0]
    if generated.shape[0] != n or real.shape[0] != n or len(np.asarray(labels)) != n:
        raise dc.ShapeError("alignment_loss: batch sizes of logits, labels and EEG disagree")
    lc = classification_loss(logits, labels)
    lm = mse_loss(generated, real)
    lk = contrastive_loss(generated, real)
    if use_mse and use_contrastive:
        lg = dc.add(lm, lk)
    elif use_mse:
        lg = lm
    elif use_contrastive:
        lg = lk
    else:
        lg = Tensor(0.0)
    total = dc.add(lc, dc.scale(lg, float(beta))) if beta != 0 else lc
    return AlignmentLossTerms(
        total=total,
        classification=lc.item(),
        mse=lm.item(),
        contrastive=lk.item(),
        generation=lg.item(),
        beta=float(beta),
    )
