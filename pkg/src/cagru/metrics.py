"""Top-N thresholding and classification metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, DimensionError, EmptyInputError


@dataclass
class MetricsReport:
    acc: float
    auc: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    n_samples: int
    per_cluster: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    METRICS = ("acc", "auc", "precision", "recall", "f1")

    def to_dict(self):
        def clean(x):
            if isinstance(x, dict):
                return {str(k): clean(v) for k, v in x.items()}
            if isinstance(x, float) and math.isnan(x):
                return None
            return x

        return clean(asdict(self))

    def row(self):
        return {k: getattr(self, k) for k in self.METRICS}


def n_top(fraction, m):
    # guard against 0.3 * m landing a hair below an integer
    return int(math.floor(fraction * m + 1e-9))


def top_n_threshold(probabilities, fraction=0.3) -> np.ndarray:
    """Mark the ``floor(fraction * M)`` most probable samples as positive.

    Ties at the cut-off go to the lower sample index.
    """
    prob = np.asarray(probabilities, dtype=np.float64)
    if prob.size == 0:
        raise EmptyInputError("no probabilities to threshold")
    if not 0 < fraction < 1:
        raise ConfigError(f"fraction must lie in (0, 1), got {fraction}")
    order = np.argsort(-prob, kind="stable")
    pred = np.zeros(prob.shape, dtype=np.int64)
    pred[order[: n_top(fraction, prob.size)]] = 1
    return pred


def auc_score(labels, probabilities) -> float:
    """ROC AUC as the Mann-Whitney statistic with mid-ranks for ties.

    Returns NaN when only one class is present.
    """
    y = np.asarray(labels).astype(bool)
    prob = np.asarray(probabilities, dtype=np.float64)
    if y.shape != prob.shape:
        raise DimensionError("labels and probabilities differ in length")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(prob)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def compute_metrics(labels, probabilities, predictions) -> MetricsReport:
    y = np.asarray(labels).astype(np.int64)
    prob = np.asarray(probabilities, dtype=np.float64)
    pred = np.asarray(predictions).astype(np.int64)
    if not y.shape == prob.shape == pred.shape:
        raise DimensionError(
            f"labels {y.shape}, probabilities {prob.shape}, predictions {pred.shape} differ"
        )
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    m = y.size
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricsReport(
        acc=(tp + tn) / m if m else 0.0,
        auc=auc_score(y, prob) if m else float("nan"),
        precision=precision,
        recall=recall,
        f1=f1,
        tp=tp, fp=fp, tn=tn, fn=fn,
        n_samples=m,
    )


def rand_index(a, b) -> float:
    """Fraction of sample pairs on which two labelings agree."""
    a = np.unique(np.asarray(a), return_inverse=True)[1].ravel()
    b = np.unique(np.asarray(b), return_inverse=True)[1].ravel()
    n = a.size
    if n < 2:
        return 1.0
    table = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    pairs = lambda x: (x * (x - 1) // 2).sum()
    same_both = pairs(table)
    same_a = pairs(table.sum(axis=1))
    same_b = pairs(table.sum(axis=0))
    total = n * (n - 1) // 2
    return float((total + 2 * same_both - same_a - same_b) / total)
