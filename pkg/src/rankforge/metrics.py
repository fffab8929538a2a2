"""Ranking objectives and evaluation measures.

Sign-based losses work on plain arrays.  ``upset_ratio``, ``upset_margin``
and ``similarity_pretrain_loss`` also accept :class:`~rankforge.autodiff.Tensor`
inputs and then return a Tensor, so the training loop differentiates the very
same code that evaluation runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import stats

from . import autodiff as ad
from .graph import ComparisonMatrices, SerialSimilarity

__all__ = [
    "MetricConfig",
    "scores_to_ranks",
    "apply_transform",
    "upset_naive",
    "upset_ratio",
    "upset_margin",
    "upset_simple",
    "kendall_tau",
    "similarity_pretrain_loss",
    "NoComparisonsError",
]

Transform = Literal["sigmoid", "affine_half", "none"]


class NoComparisonsError(ValueError):
    pass


@dataclass(frozen=True)
class MetricConfig:
    epsilon: float = 0.01
    transform: Transform = "sigmoid"

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.transform not in ("sigmoid", "affine_half", "none"):
            raise ValueError(f"unknown transform {self.transform!r}")


def scores_to_ranks(r) -> np.ndarray:
    """1-based integer ranks, 1 for the highest score; ties go to the lower index."""
    r = np.asarray(r, dtype=np.float64)
    if np.any(np.isnan(r)):
        raise ValueError("NaN score")
    order = np.lexsort((np.arange(len(r)), -r))
    ranks = np.empty(len(r), dtype=np.int64)
    ranks[order] = np.arange(1, len(r) + 1)
    return ranks


def _require(count: int) -> None:
    if count == 0:
        raise NoComparisonsError("no comparisons")


def upset_naive(cm: ComparisonMatrices, r) -> float:
    _require(cm.t)
    r = np.asarray(r, dtype=np.float64)
    mask = cm.Mprime != 0
    Tp = r[:, None] - r[None, :]
    return float(np.sum(np.sign(Tp[mask]) != np.sign(cm.Mprime[mask])) / cm.t)


def upset_simple(cm: ComparisonMatrices, r, is_ranking: bool = False) -> float:
    """Squared sign mismatch over compared pairs; terms are 0, 1 (tie) or 4.

    With ``is_ranking`` the input is an integer ranking and ``-R`` is used as
    the score.
    """
    _require(cm.t)
    r = np.asarray(r, dtype=np.float64)
    if is_ranking:
        r = -r
    mask = cm.Mprime != 0
    Tp = r[:, None] - r[None, :]
    diff = np.sign(Tp[mask]) - np.sign(cm.Mprime[mask])
    return float(np.sum(diff * diff) / cm.t)


def apply_transform(r, transform: Transform):
    if transform == "sigmoid":
        return ad.sigmoid(r) if isinstance(r, ad.Tensor) else 0.5 * (1.0 + np.tanh(0.5 * np.asarray(r)))
    if transform == "affine_half":
        return (r + 1.0) * 0.5
    return r


def _finish(x, as_tensor: bool):
    return x if as_tensor else float(x.value)


def upset_ratio(cm: ComparisonMatrices, r, cfg: MetricConfig = MetricConfig()):
    _require(cm.tM)
    is_t = isinstance(r, ad.Tensor)
    rt = ad.as_tensor(apply_transform(r, cfg.transform))
    mask = cm.M != 0
    num = ad.masked_select(ad.outer_sub(rt), mask)
    den = ad.masked_select(ad.outer_add(rt), mask)
    if np.any(den.value == 0):
        raise ZeroDivisionError("r_i + r_j = 0 on a compared pair")
    diff = num / den - cm.M[mask]
    return _finish(ad.squared_frobenius(diff) * (1.0 / cm.tM), is_t)


def upset_margin(cm: ComparisonMatrices, r, cfg: MetricConfig = MetricConfig()):
    """Hinge penalty on winners not ahead by at least ``cfg.epsilon``.

    Scores are used as given; ``cfg.transform`` only affects ``upset_ratio``.
    """
    _require(cm.tM)
    is_t = isinstance(r, ad.Tensor)
    rt = ad.as_tensor(r)
    mask = cm.M > 0
    weight = (cm.M + np.abs(cm.M))[mask]
    # entries r_j - r_i for winner i over loser j
    gap = ad.masked_select(ad.neg(ad.outer_sub(rt)), mask)
    loss = ad.sum(ad.relu(gap + cfg.epsilon) * weight) * (1.0 / cm.tM)
    return _finish(loss, is_t)


def kendall_tau(x, y) -> float:
    """Kendall tau-b between two orderings given in the same orientation."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be 1-d and equal length")
    if len(x) < 2:
        raise ValueError("need at least two items")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ValueError("degenerate ordering")
    return float(stats.kendalltau(x, y, variant="b").statistic)


def similarity_pretrain_loss(S, sr: SerialSimilarity):
    is_t = isinstance(S, ad.Tensor)
    target = sr.SprimeNorm
    if ad.value_of(S).shape != target.shape:
        raise ValueError("shape mismatch between similarity matrices")
    n = target.shape[0]
    loss = ad.squared_frobenius(ad.as_tensor(S) - target) * (1.0 / n**2)
    return _finish(loss, is_t)
