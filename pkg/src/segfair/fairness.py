"""Group-fairness and utility metrics, plus the entropy-gap bound calculators.

All rates are computed over hard decisions thresholded at 0.5 on the
positive-class probability; AUC uses the Mann-Whitney rank statistic with
0.5 credit for ties.  Bound values may exceed 1 and are reported raw so
that bound looseness stays visible.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class UndefinedRateError(ValueError):
    """A rate's conditioning set is empty (e.g. a group with no positives)."""


@dataclass(frozen=True)
class PredictionSet:
    """Classifier scores with ground truth and group ids for one node set.

    ``hard`` is derived from the scores (1 iff score >= 0.5), so the
    threshold invariant holds by construction.
    """

    scores: np.ndarray
    labels: np.ndarray
    sensitive: np.ndarray

    def __post_init__(self):
        for name in ("scores", "labels", "sensitive"):
            v = np.asarray(getattr(self, name))
            object.__setattr__(self, name, v)
        if not (self.scores.shape == self.labels.shape == self.sensitive.shape):
            raise ValueError(
                f"shape mismatch: scores {self.scores.shape}, labels"
                f" {self.labels.shape}, sensitive {self.sensitive.shape}"
            )

    @cached_property
    def hard(self) -> np.ndarray:
        return (self.scores >= 0.5).astype(np.int64)

    @classmethod
    def from_hard(cls, hard, labels, sensitive) -> "PredictionSet":
        """Wrap already-thresholded decisions (scores become 0.0 / 1.0)."""
        return cls(np.asarray(hard, dtype=np.float64), labels, sensitive)


def statistical_parity(p: PredictionSet) -> float:
    """Absolute gap in positive-prediction rates between the two groups."""
    rates = []
    for group in (0, 1):
        mask = p.sensitive == group
        if not mask.any():
            raise UndefinedRateError(f"group {group} is empty; acceptance rate undefined")
        rates.append(p.hard[mask].mean())
    return float(abs(rates[0] - rates[1]))


def equal_opportunity(p: PredictionSet) -> float:
    """Absolute gap in true-positive rates between the two groups."""
    rates = []
    for group in (0, 1):
        mask = (p.sensitive == group) & (p.labels == 1)
        if not mask.any():
            raise UndefinedRateError(
                f"group {group} has no positive-label nodes; TPR undefined"
            )
        rates.append(p.hard[mask].mean())
    return float(abs(rates[0] - rates[1]))


def false_positive_rate(p: PredictionSet) -> float:
    """FP / (FP + TN) over all nodes with a negative label."""
    negatives = p.labels == 0
    if not negatives.any():
        raise UndefinedRateError("no negative-label nodes; FPR undefined")
    return float(p.hard[negatives].mean())


def utility_metrics(p: PredictionSet) -> tuple[float, float, float]:
    """(accuracy, positive-class F1, AUC); requires both label classes."""
    if len(np.unique(p.labels)) < 2:
        raise UndefinedRateError("labels contain a single class; AUC undefined")
    acc = float((p.hard == p.labels).mean())
    tp = int(((p.hard == 1) & (p.labels == 1)).sum())
    fp = int(((p.hard == 1) & (p.labels == 0)).sum())
    fn = int(((p.hard == 0) & (p.labels == 1)).sum())
    denom = 2 * tp + fp + fn
    f1 = 2.0 * tp / denom if denom else 0.0
    return acc, f1, _auc(p.scores, p.labels)


def _auc(scores, labels) -> float:
    # Mann-Whitney via average ranks, 0.5 credit for tied scores.
    n = scores.shape[0]
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(n)
    ranks[order] = np.arange(1, n + 1, dtype=np.float64)
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    rank_sums = np.bincount(inverse, weights=ranks)
    ranks = rank_sums[inverse] / counts[inverse]
    n_pos = int((labels == 1).sum())
    n_neg = n - n_pos
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def sp_eo_bound(gap: float) -> float:
    """sqrt(2 * gap); one value serves both parity and opportunity gaps."""
    if gap < 0.0:
        raise ValueError(f"entropy gap must be nonnegative, got {gap}")
    return float(np.sqrt(2.0 * gap))


def fpr_bound(gap: float, neg_ratio: float) -> float:
    """r / (1 + r) + sqrt(2 * gap) for negative-label proportion r."""
    if not 0.0 <= neg_ratio <= 1.0:
        raise ValueError(f"negative-label proportion must be in [0, 1], got {neg_ratio}")
    return float(neg_ratio / (1.0 + neg_ratio) + sp_eo_bound(gap))


@dataclass(frozen=True)
class FairnessReport:
    """Measured rates plus the entropy-gap bound values (reported raw)."""

    d_sp: float
    d_eo: float
    fpr: float
    acc: float
    f1: float
    auc: float
    sp_bound: float
    eo_bound: float
    fpr_bound: float


def evaluate(p: PredictionSet, gap: float, neg_ratio: float) -> FairnessReport:
    """Assemble the full report for one prediction set and entropy gap."""
    acc, f1, auc = utility_metrics(p)
    bound = sp_eo_bound(gap)
    return FairnessReport(
        d_sp=statistical_parity(p),
        d_eo=equal_opportunity(p),
        fpr=false_positive_rate(p),
        acc=acc,
        f1=f1,
        auc=auc,
        sp_bound=bound,
        eo_bound=bound,
        fpr_bound=fpr_bound(gap, neg_ratio),
    )
