"""Loss computations: the complementary-label risk estimator with its per-class
breakdown, the prediction-scattering map, entropy weights, and the weighted
conditional adversarial loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .complabel import BatchPartition
from .errors import ContractError

PROB_FLOOR = 1e-12


def cross_entropy_to_class(probs: Tensor, k: int) -> Tensor:
    """Per-sample -log p_k against a fixed 1-based class; probabilities floored."""
    p = ad.clamp(ad.column(probs, k - 1), lo=PROB_FLOOR, hi=1.0)
    return -ad.log(p)


@dataclass
class CompLossBreakdown:
    """Per-class complementary losses, their sum, and the negative part.

    ``total`` and ``per_class`` stay attached to the tape so either branch of
    the descent/ascent correction can backpropagate; ``l_neg`` is the sum of
    the negative per-class entries (a tape scalar, zero-constant when none are
    negative).
    """

    per_class: list            # K tape scalars
    total: Tensor
    l_neg: Tensor

    @property
    def per_class_values(self) -> np.ndarray:
        return np.array([t.item() for t in self.per_class])

    @property
    def min_class(self) -> float:
        return float(self.per_class_values.min())

    @property
    def l_neg_value(self) -> float:
        return self.l_neg.item() if isinstance(self.l_neg, Tensor) else float(self.l_neg)


def class_comp_loss(probs: Tensor, partition: BatchPartition, k: int) -> Tensor:
    """Complementary-label loss for one class.

    -(K-1) * (pi_k / n_k) * sum_{i in subset k} CE(p_i, k)
      + sum_j (pi_j / n_j) * sum_{l in subset j} CE(p_l, k)

    Classes with empty subsets contribute nothing to either term, so the
    pi/n ratio is never formed for them.
    """
    K = partition.K
    if not 1 <= k <= K:
        raise ContractError("class index %r out of range {1..%d}" % (k, K))
    ce_k = cross_entropy_to_class(probs, k)

    terms = []
    idx_k = partition.subsets[k - 1]
    n_k = partition.counts[k - 1]
    if n_k > 0:
        w = (K - 1.0) * partition.priors[k - 1] / n_k
        terms.append(-w * ad.tsum(ad.take_rows(ce_k, idx_k)))
    for j in range(K):
        n_j = partition.counts[j]
        if n_j == 0:
            continue
        w = partition.priors[j] / n_j
        terms.append(w * ad.tsum(ad.take_rows(ce_k, partition.subsets[j])))

    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


def total_comp_loss(probs: Tensor, partition: BatchPartition) -> CompLossBreakdown:
    """Sum of the per-class complementary losses, with the negative-part diagnostic."""
    per_class = [class_comp_loss(probs, partition, k) for k in range(1, partition.K + 1)]
    total = per_class[0]
    for t in per_class[1:]:
        total = total + t
    negatives = [t for t in per_class if t.item() < 0.0]
    if negatives:
        l_neg = negatives[0]
        for t in negatives[1:]:
            l_neg = l_neg + t
    else:
        l_neg = Tensor(0.0)
    return CompLossBreakdown(per_class=per_class, total=total, l_neg=l_neg)


def scatter_map(probs: Tensor, l: float) -> Tensor:
    """Temperature-sharpen predictions: row k gets p_k^(1/l) / sum_j p_j^(1/l).

    l=1 is the identity; as l -> 0 rows approach one-hot.
    """
    if l <= 0:
        raise ContractError("scatter_map requires l > 0, got %r" % l)
    p = ad.clamp(probs, lo=PROB_FLOOR, hi=1.0)
    powered = ad.pow_const(p, 1.0 / l)
    denom = ad.tsum(powered, axis=-1, keepdims=True)
    return powered / denom


def entropy_weight(mapped: np.ndarray):
    """Shannon entropy of each mapped row and the transfer weight 1 + exp(-H).

    Operates on plain arrays: weights are constants with respect to the tape.
    """
    p = np.asarray(mapped, dtype=np.float64)
    plogp = np.where(p > 0.0, p * np.log(np.clip(p, PROB_FLOOR, 1.0)), 0.0)
    H = -plogp.sum(axis=-1)
    return H, 1.0 + np.exp(-H)


def adversarial_loss(d_source: Tensor, w_source: np.ndarray,
                     d_target: Tensor, w_target: np.ndarray) -> Tensor:
    """Weighted conditional adversarial loss.

    sum_s w_s log D(g_s) / sum_s w_s + sum_t w_t log(1 - D(g_t)) / sum_t w_t,
    with the weights treated as constants.  Always <= 0.
    """
    w_source = np.asarray(w_source, dtype=np.float64)
    w_target = np.asarray(w_target, dtype=np.float64)
    if d_source.size == 0 or d_target.size == 0:
        raise ContractError("adversarial_loss needs at least one sample per domain")
    eps = 1e-12
    ds = ad.clamp(d_source, lo=eps, hi=1.0 - eps)
    dt = ad.clamp(d_target, lo=eps, hi=1.0 - eps)
    if ds.data.ndim == 2:
        w_source = w_source.reshape(-1, 1)
    if dt.data.ndim == 2:
        w_target = w_target.reshape(-1, 1)
    s_term = ad.tsum(Tensor(w_source) * ad.log(ds)) / float(w_source.sum())
    t_term = ad.tsum(Tensor(w_target) * ad.log(1.0 - dt)) / float(w_target.sum())
    return s_term + t_term
