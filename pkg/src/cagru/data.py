"""Domain types, transaction ingestion, activity tensors, splits and windows."""

from __future__ import annotations

import csv
import datetime as dt
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyDatasetError,
    EmptyWindowError,
    DimensionError,
    IntegrityError,
    NotFoundError,
    ParseError,
    TooShortError,
    ValidationError,
)

HEADER = ("customer_id", "shop_id", "date")


@dataclass(frozen=True)
class PurchaseEvent:
    customer_id: str
    shop_id: str
    day: int

    def sort_key(self):
        return (self.customer_id, self.day, self.shop_id)


@dataclass(frozen=True)
class ActivityMatrix:
    """Binary customer x day x shop interaction tensor.

    ``data[u, d]`` is the per-shop purchase vector of customer ``u`` on day ``d``.
    """

    customers: tuple
    shops: tuple
    days: int
    data: np.ndarray

    def __post_init__(self):
        expected = (len(self.customers), self.days, len(self.shops))
        if self.data.shape != expected:
            raise DimensionError(f"data shape {self.data.shape} != {expected}")

    def index_of(self, customer_id) -> int:
        try:
            return self._positions[customer_id]
        except KeyError:
            raise NotFoundError(f"unknown customer {customer_id!r}") from None

    @property
    def _positions(self):
        cache = self.__dict__.get("_pos_cache")
        if cache is None:
            cache = {c: i for i, c in enumerate(self.customers)}
            object.__setattr__(self, "_pos_cache", cache)
        return cache

    @property
    def purchased(self) -> np.ndarray:
        """Customer x day indicator of a purchase at any shop."""
        return self.data.any(axis=2)

    @property
    def n_interactions(self) -> int:
        return int(self.data.sum())


@dataclass(frozen=True)
class DatasetSplit:
    train: range
    validation: range
    test: range

    def __iter__(self):
        return iter((self.train, self.validation, self.test))


@dataclass(frozen=True)
class SupervisedWindow:
    inputs: np.ndarray
    label: int
    customer_id: str
    end_day: int


class Windows:
    """A collection of supervised windows stored as stacked arrays.

    Indexing yields :class:`SupervisedWindow` objects; the arrays are what the
    trainer consumes.
    """

    def __init__(self, inputs, labels, customer_ids, end_days):
        self.inputs = np.asarray(inputs, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.customer_ids = np.asarray(customer_ids, dtype=object)
        self.end_days = np.asarray(end_days, dtype=np.int64)
        n = len(self.labels)
        if not (len(self.inputs) == len(self.customer_ids) == len(self.end_days) == n):
            raise DimensionError("window arrays have inconsistent lengths")

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i):
        return SupervisedWindow(
            self.inputs[i], int(self.labels[i]), self.customer_ids[i], int(self.end_days[i])
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def subset(self, mask) -> "Windows":
        mask = np.asarray(mask)
        return Windows(
            self.inputs[mask], self.labels[mask], self.customer_ids[mask], self.end_days[mask]
        )

    @classmethod
    def concatenate(cls, parts: Sequence["Windows"]) -> "Windows":
        parts = [p for p in parts if len(p)]
        if not parts:
            raise EmptyWindowError("no windows to concatenate")
        return cls(
            np.concatenate([p.inputs for p in parts]),
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.customer_ids for p in parts]),
            np.concatenate([p.end_days for p in parts]),
        )


def _parse_date(text: str, line: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(f"invalid ISO-8601 date {text!r}", line) from None


def ingest_transactions(text: str) -> list[PurchaseEvent]:
    """Parse ``customer_id,shop_id,date`` rows into deduplicated events.

    Dates become 0-based day indices counted from the earliest date in the
    file. Events come back sorted by (customer, day, shop).
    """
    reader = csv.reader(io.StringIO(text))
    rows = []
    header_seen = False
    for line_no, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if not header_seen:
            if tuple(cell.strip() for cell in row) != HEADER:
                raise ParseError(f"expected header {','.join(HEADER)}, got {row}", line_no)
            header_seen = True
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, got {len(row)}", line_no)
        customer, shop, date = (cell.strip() for cell in row)
        if not customer or not shop:
            raise ParseError("empty identifier", line_no)
        rows.append((customer, shop, _parse_date(date, line_no)))
    if not rows:
        raise EmptyDatasetError("transaction file contains no events")

    epoch = min(r[2] for r in rows)
    unique = {PurchaseEvent(c, s, (d - epoch).days) for c, s, d in rows}
    return sorted(unique, key=PurchaseEvent.sort_key)


def read_transactions(path) -> list[PurchaseEvent]:
    with open(path, encoding="utf-8", newline="") as fh:
        return ingest_transactions(fh.read())


def write_transactions(events: Iterable[PurchaseEvent], path, epoch=dt.date(2024, 1, 1)):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for ev in events:
            writer.writerow(
                (ev.customer_id, ev.shop_id, (epoch + dt.timedelta(days=ev.day)).isoformat())
            )


def index_events(events: Sequence[PurchaseEvent]):
    """Return the sorted customer list, sorted shop list and day count."""
    if not events:
        raise EmptyDatasetError("no events")
    customers = sorted({e.customer_id for e in events})
    shops = sorted({e.shop_id for e in events})
    t = max(e.day for e in events) + 1
    return customers, shops, t


def build_activity_matrix(events, customers, shops, t) -> ActivityMatrix:
    customers = tuple(customers)
    shops = tuple(shops)
    cpos = {c: i for i, c in enumerate(customers)}
    spos = {s: i for i, s in enumerate(shops)}
    data = np.zeros((len(customers), t, len(shops)), dtype=np.uint8)
    for ev in events:
        try:
            u, s = cpos[ev.customer_id], spos[ev.shop_id]
        except KeyError:
            raise IntegrityError(f"event references unknown id: {ev}") from None
        if not 0 <= ev.day < t:
            raise IntegrityError(f"event day {ev.day} outside [0, {t})")
        data[u, ev.day, s] = 1
    return ActivityMatrix(customers, shops, int(t), data)


def aggregate_features(p_u, q_u) -> np.ndarray:
    """Concatenate personal and company attribute vectors."""
    p = np.asarray(p_u, dtype=np.float64).ravel()
    q = np.asarray(q_u, dtype=np.float64).ravel()
    h = np.concatenate([p, q])
    if not np.all(np.isfinite(h)):
        raise ValidationError("feature vectors must be finite")
    return h


def chronological_split(t: int, ratios=(7, 2, 1)) -> DatasetSplit:
    """Partition ``range(t)`` into train/validation/test by date.

    Validation and test lengths are floored; the remainder goes to train.
    """
    if t < 10:
        raise TooShortError(f"need at least 10 days to split, got {t}")
    total = sum(ratios)
    n_val = t * ratios[1] // total
    n_test = t * ratios[2] // total
    n_train = t - n_val - n_test
    return DatasetSplit(
        range(0, n_train), range(n_train, n_train + n_val), range(n_train + n_val, t)
    )


def make_windows(pattern_sequences, features, matrix: ActivityMatrix, split_range: range, L: int,
                 lookback_start=None) -> Windows:
    """Slide length-``L`` windows (stride 1) over one split.

    Each input row is the day's pattern value followed by the customer
    features for that day. ``features`` is either ``(n, F)`` (constant per
    customer) or ``(n, t, F)`` (per day). The label is whether the customer
    bought anything on ``end_day + 1``, which always lies inside
    ``split_range``.

    By default inputs must also lie inside ``split_range``. Passing
    ``lookback_start`` lets inputs reach back to that day instead; labels stay
    inside the split either way.
    """
    if L < 1:
        raise EmptyWindowError("window length must be >= 1")
    seqs = np.asarray(pattern_sequences, dtype=np.float64)
    n, t = seqs.shape
    if (n, t) != matrix.data.shape[:2]:
        raise DimensionError(f"pattern sequences {seqs.shape} do not match matrix")
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim == 1:
        feats = feats[:, None]
    if feats.ndim == 2:
        if feats.shape[0] != n:
            raise DimensionError("one feature row per customer required")
        feats = np.broadcast_to(feats[:, None, :], (n, t, feats.shape[1]))
    elif feats.ndim != 3 or feats.shape[:2] != (n, t):
        raise DimensionError(f"bad feature shape {feats.shape}")

    start = split_range.start if lookback_start is None else lookback_start
    if start > split_range.start:
        raise ValidationError("lookback_start must not exceed the split start")
    first_end = max(start + L - 1, split_range.start - 1)
    last_end = split_range.stop - 2
    if last_end < first_end:
        raise EmptyWindowError(
            f"window length {L} leaves no windows in days [{split_range.start}, {split_range.stop})"
        )
    end_days = np.arange(first_end, last_end + 1)
    # (E, L) day indices for every window
    day_idx = end_days[:, None] - L + 1 + np.arange(L)[None, :]
    per_day = np.concatenate([seqs[:, :, None], feats], axis=2)  # (n, t, 1+F)
    inputs = per_day[:, day_idx]  # (n, E, L, 1+F)
    labels = matrix.purchased[:, end_days + 1].astype(np.int64)  # (n, E)
    E = len(end_days)
    return Windows(
        inputs.reshape(n * E, L, per_day.shape[2]),
        labels.reshape(-1),
        np.repeat(np.asarray(matrix.customers, dtype=object), E),
        np.tile(end_days, n),
    )
