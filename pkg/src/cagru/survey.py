"""Customer survey analytics: activeness, attendance, Hamming distances, 1-D k-means."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .data import ActivityMatrix
from .errors import ConfigError, DimensionError, EmptyInputError


@dataclass(frozen=True)
class ActivenessScore:
    customer_id: str
    value: float


@dataclass(frozen=True)
class AttendanceSequence:
    customer_id: str
    bits: np.ndarray


@dataclass(frozen=True)
class DistanceMatrix:
    ids: tuple
    values: np.ndarray


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    objective_trace: list = field(default_factory=list)
    iterations: int = 0


def activeness(matrix: ActivityMatrix, u) -> ActivenessScore:
    """Fraction of the ``t`` days on which customer ``u`` bought at any shop."""
    row = matrix.data[matrix.index_of(u)]
    return ActivenessScore(u, float(row.any(axis=1).sum() / matrix.days))


def activeness_all(matrix: ActivityMatrix) -> np.ndarray:
    return matrix.purchased.sum(axis=1) / matrix.days


def attendance_sequence(matrix: ActivityMatrix, u) -> AttendanceSequence:
    row = matrix.data[matrix.index_of(u)]
    return AttendanceSequence(u, row.any(axis=1).astype(np.uint8))


def hamming(x1, x2) -> int:
    a, b = np.asarray(x1), np.asarray(x2)
    if a.shape != b.shape:
        raise DimensionError(f"sequence lengths differ: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


def hamming_matrix(sequences) -> DistanceMatrix:
    """All pairwise Hamming distances between binary sequences.

    Accepts :class:`AttendanceSequence` objects or a 2-D 0/1 array.
    """
    if len(sequences) == 0:
        raise EmptyInputError("no sequences given")
    if isinstance(sequences[0], AttendanceSequence):
        ids = tuple(s.customer_id for s in sequences)
        rows = [s.bits for s in sequences]
    else:
        ids = tuple(range(len(sequences)))
        rows = sequences
    if len({len(r) for r in rows}) != 1:
        raise DimensionError("sequences must share one length")
    X = np.asarray(rows, dtype=np.int64)
    values = X @ (1 - X).T
    values = values + values.T
    return DistanceMatrix(ids, values)


def _nearest(values, centers):
    d2 = (values[:, None] - centers[None, :]) ** 2
    return np.argmin(d2, axis=1), d2


def kmeans_engagement(scores, n_clusters=3, seed=0, max_iter=100) -> KMeansResult:
    """Lloyd's k-means on scalar engagement values with k-means++ seeding.

    An emptied cluster takes the point farthest from its current centre.
    Clusters are relabelled by ascending centre, so label 0 is the least
    engaged group.
    """
    values = np.asarray(
        [s.value if isinstance(s, ActivenessScore) else s for s in scores], dtype=np.float64
    )
    n = len(values)
    if n == 0:
        raise EmptyInputError("no engagement scores")
    if not 1 <= n_clusters <= n:
        raise ConfigError(f"n_clusters must be in [1, {n}], got {n_clusters}")
    rng = np.random.default_rng(seed)

    centers = [values[rng.integers(n)]]
    for _ in range(1, n_clusters):
        d2 = np.min((values[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        idx = rng.integers(n) if total == 0 else rng.choice(n, p=d2 / total)
        centers.append(values[idx])
    centers = np.array(centers)

    labels, d2 = _nearest(values, centers)
    trace = []
    it = 0
    for it in range(1, max_iter + 1):
        for j in range(n_clusters):
            if np.any(labels == j):
                continue
            sizes = np.bincount(labels, minlength=n_clusters)
            own = d2[np.arange(n), labels].copy()
            own[sizes[labels] < 2] = -np.inf
            far = int(np.argmax(own))
            labels[far] = j
        centers = np.array([values[labels == j].mean() for j in range(n_clusters)])
        trace.append(float(((values - centers[labels]) ** 2).sum()))
        new_labels, d2 = _nearest(values, centers)
        # a point only moves for a strictly closer centre, so ties cannot cycle
        stay = d2[np.arange(n), labels] <= d2[np.arange(n), new_labels]
        new_labels = np.where(stay, labels, new_labels)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels

    order = np.argsort(centers, kind="stable")
    remap = np.empty_like(order)
    remap[order] = np.arange(n_clusters)
    return KMeansResult(remap[labels], centers[order], trace, it)


def activeness_histogram(values, bins=10):
    """Counts over ``bins`` equal-width bins on [0, 1] and the bin edges."""
    return np.histogram(np.asarray(values, dtype=np.float64), bins=bins, range=(0.0, 1.0))


def is_head_tail(counts) -> bool:
    """Bimodality check on an activeness histogram.

    Takes the two largest local peaks. Passes when one sits in the lowest
    third of the occupied bin span and the other in the highest third.
    """
    counts = np.asarray(counts)
    occupied = np.flatnonzero(counts)
    if len(occupied) < 2:
        return False
    lo, hi = occupied[0], occupied[-1]
    padded = np.concatenate([[-1], counts, [-1]])
    peaks = [i for i in range(len(counts))
             if counts[i] > 0 and padded[i + 1] >= padded[i] and padded[i + 1] >= padded[i + 2]]
    if len(peaks) < 2:
        return False
    top = sorted(sorted(peaks, key=lambda i: -counts[i])[:2])
    third = (hi - lo + 1) / 3
    return bool(top[0] < lo + third and top[1] >= hi + 1 - third)


def mean_pairwise(values, labels=None) -> float:
    """Mean off-diagonal distance, over all pairs or only same-label pairs."""
    D = np.asarray(values, dtype=np.float64)
    n = D.shape[0]
    mask = ~np.eye(n, dtype=bool)
    if labels is not None:
        labels = np.asarray(labels)
        mask &= labels[:, None] == labels[None, :]
    if not mask.any():
        return 0.0
    return float(D[mask].mean())


def write_histogram_csv(path, counts, edges):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("bin_low", "bin_high", "customers"))
        for c, a, b in zip(counts, edges[:-1], edges[1:]):
            w.writerow((f"{a:.1f}", f"{b:.1f}", int(c)))


def write_distance_csv(path, dm: DistanceMatrix):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["customer_id", *dm.ids])
        for cid, row in zip(dm.ids, dm.values):
            w.writerow([cid, *map(int, row)])


def write_labels_csv(path, ids, values, labels):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("customer_id", "activeness", "cluster"))
        for cid, v, lab in zip(ids, values, labels):
            w.writerow((cid, repr(float(v)), int(lab)))
