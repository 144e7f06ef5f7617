"""Behaviour-pattern dictionary and per-customer pattern sequences."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import ActivityMatrix
from .errors import ConfigError, EmptyInputError, ParseError, UnknownPatternError


@dataclass(frozen=True)
class PatternDictionary:
    """Injective map from binary shop vectors to consecutive integer codes.

    ``vectors[c]`` is the shop vector with code ``c``; code 0 is always the
    all-zeros vector.
    """

    vectors: tuple

    def __post_init__(self):
        object.__setattr__(self, "_codes", {v: i for i, v in enumerate(self.vectors)})

    def __len__(self):
        return len(self.vectors)

    def __contains__(self, vector):
        return tuple(int(b) for b in vector) in self._codes

    @property
    def n_shops(self) -> int:
        return len(self.vectors[0])

    def code(self, vector) -> int:
        key = tuple(int(b) for b in vector)
        try:
            return self._codes[key]
        except KeyError:
            raise UnknownPatternError(f"shop vector {key} is not in the dictionary") from None

    def decode(self, codes) -> np.ndarray:
        table = np.asarray(self.vectors, dtype=np.uint8)
        return table[np.asarray(codes, dtype=np.int64)]

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("code", "shop_vector_bits"))
            for code, vec in enumerate(self.vectors):
                w.writerow((code, "".join(map(str, vec))))

    @classmethod
    def from_csv(cls, path) -> "PatternDictionary":
        vectors = []
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        for line, row in enumerate(rows[1:], start=2):
            code, bits = int(row[0]), row[1]
            if code != len(vectors) or set(bits) - {"0", "1"}:
                raise ParseError(f"bad dictionary row {row}", line)
            vectors.append(tuple(int(b) for b in bits))
        return cls(tuple(vectors))


@dataclass(frozen=True)
class PatternSequence:
    customer_id: str
    codes: np.ndarray


def _ordered(vectors, counts, order):
    if order == "popcount":
        return sorted(vectors, key=lambda v: (sum(v), v))
    if order == "frequency":
        return sorted(vectors, key=lambda v: (-counts[v], sum(v), v))
    raise ConfigError(f"unknown code order {order!r}")


def build_dictionary(matrix: ActivityMatrix, days=None, order="popcount") -> PatternDictionary:
    """Collect every observed daily shop vector and assign codes.

    The zero vector gets code 0. The rest are ordered by ascending number of
    shops visited, then lexicographically, so more activity maps to larger
    codes. ``order="frequency"`` ranks by descending occurrence count instead.
    ``days`` restricts the scan to a day range (e.g. the training split).
    """
    data = matrix.data if days is None else matrix.data[:, days]
    if data.size == 0 or len(matrix.shops) == 0:
        raise EmptyInputError("cannot build a dictionary from an empty matrix")
    rows, counts = np.unique(data.reshape(-1, data.shape[-1]), axis=0, return_counts=True)
    observed = {tuple(int(b) for b in r): int(c) for r, c in zip(rows, counts)}
    zero = (0,) * data.shape[-1]
    rest = [v for v in observed if v != zero]
    return PatternDictionary((zero,) + tuple(_ordered(rest, observed, order)))


def encode_matrix(matrix: ActivityMatrix, dictionary: PatternDictionary) -> np.ndarray:
    """Pattern codes for every customer and day, shape ``(n, t)``."""
    flat = matrix.data.reshape(-1, matrix.data.shape[-1])
    rows, inverse = np.unique(flat, axis=0, return_inverse=True)
    lut = np.array([dictionary.code(r) for r in rows], dtype=np.int64)
    return lut[inverse.ravel()].reshape(matrix.data.shape[:2])


def encode_customer(matrix: ActivityMatrix, u, dictionary: PatternDictionary) -> PatternSequence:
    row = matrix.data[matrix.index_of(u)]
    rows, inverse = np.unique(row, axis=0, return_inverse=True)
    lut = np.array([dictionary.code(r) for r in rows], dtype=np.int64)
    return PatternSequence(u, lut[inverse.ravel()])
