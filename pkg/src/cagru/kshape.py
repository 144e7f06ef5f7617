"""Shape-based distance and k-shape clustering.

Series are z-normalised with the population standard deviation, so the
zero-lag autocorrelation of a normalised series equals its length.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DegenerateSeriesError,
    DimensionError,
    EmptyClusterError,
    ParseError,
)

TIE_TOL = 1e-12


@dataclass(frozen=True)
class SbdResult:
    distance: float
    shift: int


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray
    labels: np.ndarray
    iterations_run: int
    inertia: float
    inertia_trace: list = field(default_factory=list)
    seed: int | None = None

    def save(self, directory, ids=None):
        os.makedirs(directory, exist_ok=True)
        ids = range(len(self.labels)) if ids is None else ids
        with open(os.path.join(directory, "labels.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("customer_id", "cluster"))
            for cid, lab in zip(ids, self.labels):
                w.writerow((cid, int(lab)))
        with open(os.path.join(directory, "centroids.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cluster"] + [f"t{i}" for i in range(self.centroids.shape[1])])
            for j, c in enumerate(self.centroids):
                w.writerow([j] + [repr(float(v)) for v in c])
        manifest = {
            "k": self.k,
            "seed": self.seed,
            "iterations": self.iterations_run,
            "inertia": self.inertia,
            "inertia_trace": self.inertia_trace,
        }
        with open(os.path.join(directory, "cluster_manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, directory):
        with open(os.path.join(directory, "cluster_manifest.json")) as fh:
            manifest = json.load(fh)
        with open(os.path.join(directory, "centroids.csv"), newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        centroids = np.array([[float(v) for v in r[1:]] for r in rows])
        ids, labels = [], []
        with open(os.path.join(directory, "labels.csv"), newline="") as fh:
            for line, row in enumerate(list(csv.reader(fh))[1:], start=2):
                if len(row) != 2:
                    raise ParseError("expected customer_id,cluster", line)
                ids.append(row[0])
                labels.append(int(row[1]))
        model = cls(
            k=manifest["k"],
            centroids=centroids,
            labels=np.array(labels, dtype=np.int64),
            iterations_run=manifest["iterations"],
            inertia=manifest["inertia"],
            inertia_trace=manifest["inertia_trace"],
            seed=manifest["seed"],
        )
        return model, ids


def z_normalize(x) -> np.ndarray:
    """Z-normalise a series (or each row of a 2-D array).

    Constant series map to all zeros.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 2:
        raise DimensionError("z-normalisation needs at least 2 samples")
    mu = x.mean(axis=-1, keepdims=True)
    sd = x.std(axis=-1, keepdims=True)
    scale = np.maximum(np.abs(x).max(axis=-1, keepdims=True), 1.0)
    flat = sd <= 1e-12 * scale
    return np.where(flat, 0.0, (x - mu) / np.where(flat, 1.0, sd))


def _fft_len(m):
    return 1 << int(np.ceil(np.log2(2 * m - 1)))


def _cross_correlation(x, y):
    """Raw zero-padded cross-correlation for every shift -(m-1)..(m-1).

    Broadcasts over leading axes. Entry ``s + m - 1`` is
    ``sum_l x[l + s] * y[l]``.
    """
    m = x.shape[-1]
    n = _fft_len(m)
    cc = np.fft.irfft(np.fft.rfft(x, n) * np.conj(np.fft.rfft(y, n)), n)
    return np.concatenate([cc[..., n - m + 1:], cc[..., :m]], axis=-1)


def _check_pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise DimensionError(f"series shapes differ: {x.shape} vs {y.shape}")
    if x.shape[0] < 2:
        raise DimensionError("series must have length >= 2")
    # NCC is scale-free; rescaling keeps tiny or huge inputs out of under/overflow
    sx, sy = np.abs(x).max(), np.abs(y).max()
    if sx == 0 or sy == 0:
        raise DegenerateSeriesError("zero-energy series has no shape")
    return x / sx, y / sy


def ncc(x, y) -> np.ndarray:
    """Coefficient-normalised cross-correlation over all ``2m - 1`` shifts."""
    x, y = _check_pair(x, y)
    denom = np.sqrt(np.dot(x, x) * np.dot(y, y))
    if denom == 0:
        raise DegenerateSeriesError("zero-energy series has no shape")
    return _cross_correlation(x, y) / denom


def ncc_direct(x, y) -> np.ndarray:
    """O(m^2) reference implementation of :func:`ncc`."""
    x, y = _check_pair(x, y)
    m = len(x)
    denom = np.sqrt(np.dot(x, x) * np.dot(y, y))
    if denom == 0:
        raise DegenerateSeriesError("zero-energy series has no shape")
    out = np.empty(2 * m - 1)
    for s in range(-(m - 1), m):
        if s >= 0:
            out[s + m - 1] = np.dot(x[s:], y[: m - s])
        else:
            out[s + m - 1] = np.dot(x[: m + s], y[-s:])
    return out / denom


def _best_shift(values, m):
    """Index of the max with ties broken by smallest |shift|, negative first."""
    best = values.max()
    shifts = np.flatnonzero(values >= best - TIE_TOL) - (m - 1)
    return int(min(shifts, key=lambda s: (abs(s), s)))


def sbd(x, y) -> SbdResult:
    """Shape-based distance ``1 - max_s NCC_s(x, y)`` and the maximising shift.

    A positive shift means ``y`` moved right by that many steps lines up with
    ``x``.
    """
    values = ncc(x, y)
    m = len(values) // 2 + 1
    shift = _best_shift(values, m)
    dist = float(np.clip(1.0 - values[shift + m - 1], 0.0, 2.0))
    return SbdResult(dist, shift)


def shift_series(y, s):
    """Shift right by ``s`` (left if negative), zero-filling the gap."""
    y = np.asarray(y, dtype=np.float64)
    out = np.zeros_like(y)
    if s >= 0:
        out[s:] = y[: len(y) - s]
    else:
        out[:s] = y[-s:]
    return out


def sbd_matrix(X, C):
    """SBD between every row of ``X`` and every row of ``C``, shape ``(n, k)``.

    Zero-energy rows have no shape; their distance is 1 to everything.
    """
    cc = _cross_correlation(X[:, None, :], C[None, :, :])
    norms = np.sqrt(np.einsum("ij,ij->i", X, X))[:, None] * np.sqrt(np.einsum("ij,ij->i", C, C))[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        best = np.where(norms > 0, cc.max(axis=-1) / np.where(norms > 0, norms, 1.0), 0.0)
    return np.clip(1.0 - best, 0.0, 2.0)


def power_iteration(M, v0, tol=1e-8, max_iter=10000):
    """Principal eigenpair of a symmetric PSD matrix.

    Stops when successive unit vectors differ by less than ``tol`` in norm.
    """
    v = np.asarray(v0, dtype=np.float64)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise DegenerateSeriesError("power iteration needs a non-zero start vector")
    v = v / nv
    for it in range(1, max_iter + 1):
        w = M @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0, v, it
        w /= nw
        if np.linalg.norm(w - v) < tol:
            v = w
            break
        v = w
    return float(v @ M @ v), v, it


def extract_shape(members, previous_centroid) -> np.ndarray:
    """Centroid that maximises summed squared correlation to aligned members.

    Members are aligned to ``previous_centroid`` (skipped when it is all
    zeros), re-normalised, and the principal eigenvector of the centred
    scatter matrix is taken. Its sign is chosen so the members correlate
    positively with it.
    """
    X = np.atleast_2d(np.asarray(members, dtype=np.float64))
    if X.shape[0] == 0:
        raise EmptyClusterError("cannot extract a shape from an empty cluster")
    prev = np.asarray(previous_centroid, dtype=np.float64)
    m = X.shape[1]
    if prev.shape != (m,):
        raise DimensionError("centroid and member lengths differ")

    if np.any(prev != 0):
        cc = _cross_correlation(prev[None, :], X)
        shifts = [_best_shift(row, m) for row in cc]
        X = np.stack([shift_series(x, s) for x, s in zip(X, shifts)])
    Y = z_normalize(X)
    if not np.any(Y):
        return np.zeros(m)
    S = Y.T @ Y
    Q = np.eye(m) - 1.0 / m
    M = Q @ S @ Q
    if np.any(prev != 0):
        v0 = Q @ prev
    else:
        v0 = Q @ Y[np.argmax(np.einsum("ij,ij->i", Y, Y))]
    # a start orthogonal to the top eigenvector would stall; nudge deterministically
    v0 = v0 + 1e-3 * np.linalg.norm(v0) * Q @ np.cos(np.arange(m) * 0.7)
    _, c, _ = power_iteration(M, v0)
    if (Y @ c).sum() < 0:
        c = -c
    return z_normalize(c)


def _argmin_lowest(D):
    best = D.min(axis=1, keepdims=True)
    return np.argmax(D <= best + TIE_TOL, axis=1)


def _assign_rows(X, centroids, sizes=None):
    """Nearest-centroid labels and distances.

    Zero-energy rows are equidistant from every centroid; they join the
    largest cluster (by ``sizes``, or by the shaped rows' own assignment).
    """
    D = sbd_matrix(X, centroids)
    labels = _argmin_lowest(D)
    flat = ~np.any(X, axis=1)
    if flat.any():
        if sizes is None:
            sizes = np.bincount(labels[~flat], minlength=len(centroids))
        labels[flat] = int(np.argmax(sizes))
    return labels, D


def _cluster_once(X, k, rng, max_iter):
    n, m = X.shape
    labels = rng.integers(0, k, n)
    centroids = np.zeros((k, m))
    trace = []
    D = None
    it = 0
    for it in range(1, max_iter + 1):
        old = labels.copy()
        for j in range(k):
            members = X[labels == j]
            if len(members) == 0:
                continue
            cand = extract_shape(members, centroids[j])
            if D is not None:
                # keep the old centroid if the new one fits its members worse
                before = D[labels == j, j].sum()
                after = sbd_matrix(members, cand[None, :]).sum()
                if after > before:
                    continue
            centroids[j] = cand
        labels, D = _assign_rows(X, centroids)
        for j in range(k):
            if np.any(labels == j):
                continue
            sizes = np.bincount(labels, minlength=k)
            own = D[np.arange(n), labels].copy()
            own[(sizes[labels] < 2) | ~np.any(X, axis=1)] = -np.inf
            far = int(np.argmax(own))
            labels[far] = j
            centroids[j] = X[far]
            D[:, j] = sbd_matrix(X, X[far][None, :])[:, 0]
        trace.append(float(D[np.arange(n), labels].sum()))
        if np.array_equal(labels, old):
            break
    return labels, centroids, it, trace


def kshape_cluster(sequences, k, seed=0, max_iter=100, n_init=3) -> ClusterModel:
    """Cluster equal-length series by shape.

    Labels start uniformly at random (seeded). Each iteration refines every
    centroid by :func:`extract_shape`, then reassigns each series to its
    SBD-nearest centroid. A cluster that empties out takes the series lying
    farthest from its own centroid. With ``n_init > 1`` several seeded starts
    run and the lowest-inertia result is kept.
    """
    X = z_normalize(np.atleast_2d(np.asarray(sequences, dtype=np.float64)))
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ConfigError(f"need 1 <= k <= number of series ({n}), got k={k}")
    best = None
    for sub in np.random.SeedSequence(seed).spawn(n_init) if n_init > 1 else [seed]:
        rng = np.random.default_rng(sub)
        labels, centroids, it, trace = _cluster_once(X, k, rng, max_iter)
        if best is None or trace[-1] < best[3][-1]:
            best = (labels, centroids, it, trace)
    labels, centroids, it, trace = best
    return ClusterModel(
        k=k,
        centroids=centroids,
        labels=labels.astype(np.int64),
        iterations_run=it,
        inertia=trace[-1],
        inertia_trace=trace,
        seed=seed,
    )


def assign(series, model: ClusterModel) -> int:
    """Index of the SBD-nearest centroid; ties go to the lowest index.

    A constant series has no shape and goes to the model's largest cluster.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.centroids.shape[1]:
        raise DimensionError(
            f"series length {x.shape} does not match centroids of length {model.centroids.shape[1]}"
        )
    sizes = np.bincount(model.labels, minlength=model.k)
    labels, _ = _assign_rows(z_normalize(x)[None, :], model.centroids, sizes)
    return int(labels[0])
