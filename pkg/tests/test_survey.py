import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cagru.data import ActivityMatrix
from cagru.errors import ConfigError, DimensionError, EmptyInputError
from cagru.survey import (
    activeness,
    activeness_all,
    activeness_histogram,
    attendance_sequence,
    hamming,
    hamming_matrix,
    is_head_tail,
    kmeans_engagement,
    mean_pairwise,
    write_distance_csv,
    write_histogram_csv,
)


def _matrix(data):
    data = np.asarray(data, dtype=np.uint8)
    n, t, k = data.shape
    return ActivityMatrix(tuple(f"u{i}" for i in range(n)), tuple(f"s{j}" for j in range(k)), t, data)


def test_activeness_examples():
    m = _matrix([[[1], [1], [1], [1]], [[0], [0], [0], [0]], [[1], [0], [1], [1]]])
    assert activeness(m, "u0").value == 1.0
    assert activeness(m, "u1").value == 0.0
    assert activeness(m, "u2").value == 0.75
    np.testing.assert_array_equal(activeness_all(m), [1.0, 0.0, 0.75])


def test_attendance_sequence_or_semantics():
    m = _matrix([[[0, 0], [1, 1], [0, 1]], [[0, 0], [0, 0], [0, 0]], [[1, 0], [0, 0], [0, 0]]])
    assert attendance_sequence(m, "u0").bits.tolist() == [0, 1, 1]
    assert attendance_sequence(m, "u1").bits.tolist() == [0, 0, 0]
    assert attendance_sequence(m, "u2").bits.tolist() == [1, 0, 0]


def test_hamming_examples():
    assert hamming([0, 1, 1], [0, 1, 1]) == 0
    assert hamming([0, 1, 1], [1, 1, 0]) == 2
    with pytest.raises(DimensionError):
        hamming([0, 1, 1], [0, 1, 1, 0])


def test_hamming_matrix_examples():
    np.testing.assert_array_equal(hamming_matrix(np.array([[1, 0], [1, 0]])).values, [[0, 0], [0, 0]])
    np.testing.assert_array_equal(hamming_matrix(np.array([[0, 0], [1, 1]])).values, [[0, 2], [2, 0]])
    with pytest.raises(EmptyInputError):
        hamming_matrix([])


@given(arrays(np.int64, st.tuples(st.integers(1, 12), st.integers(1, 20)), elements=st.integers(0, 1)))
def test_hamming_matrix_matches_pairwise(X):
    D = hamming_matrix(X).values
    n = len(X)
    for i, j in itertools.product(range(n), range(n)):
        assert D[i, j] == hamming(X[i], X[j])


def test_hamming_matrix_large_structural(rng):
    D = hamming_matrix(rng.integers(0, 2, (500, 30))).values
    assert np.array_equal(D, D.T) and not np.diag(D).any()


def _brute_force_1d(values, k):
    """Optimal k-partition of sorted scalars by exhaustive cut points."""
    v = np.sort(values)
    best = np.inf
    for cuts in itertools.combinations(range(1, len(v)), k - 1):
        parts = np.split(v, cuts)
        best = min(best, sum(((p - p.mean()) ** 2).sum() for p in parts))
    return best


def test_kmeans_three_pure_groups():
    values = np.repeat([0.0, 0.5, 1.0], 10)
    res = kmeans_engagement(values, 3, seed=0)
    np.testing.assert_array_equal(res.labels, np.repeat([0, 1, 2], 10))
    np.testing.assert_allclose(res.centers, [0.0, 0.5, 1.0])
    assert res.objective_trace[-1] == pytest.approx(_brute_force_1d(values, 3), abs=1e-12)


def test_kmeans_single_cluster():
    res = kmeans_engagement([0.1, 0.4, 0.9], 1)
    assert res.labels.tolist() == [0, 0, 0]


def test_kmeans_identical_values_reseeds():
    res = kmeans_engagement([0.3] * 6, 2, seed=1)
    assert sorted(set(res.labels.tolist())) == [0, 1]


def test_kmeans_bad_k():
    with pytest.raises(ConfigError):
        kmeans_engagement([0.1, 0.2], 3)


@given(arrays(np.float64, st.integers(4, 9), elements=st.floats(0, 1)), st.integers(0, 100))
def test_kmeans_objective_trace_monotone(values, seed):
    res = kmeans_engagement(values, 2, seed=seed)
    assert np.all(np.diff(res.objective_trace) <= 1e-12)
    # labels sorted by centre
    assert np.all(np.diff(res.centers) >= 0)


def test_kmeans_near_optimal_on_separated_data(rng):
    values = np.concatenate([rng.uniform(0, 0.1, 4), rng.uniform(0.45, 0.55, 4), rng.uniform(0.9, 1, 4)])
    res = kmeans_engagement(values, 3, seed=2)
    assert res.objective_trace[-1] == pytest.approx(_brute_force_1d(values, 3), rel=1e-9)


def test_histogram_bins():
    counts, edges = activeness_histogram([0.0, 0.05, 0.95, 1.0, 0.5])
    assert counts.tolist() == [2, 0, 0, 0, 0, 1, 0, 0, 0, 2]
    np.testing.assert_allclose(edges, np.linspace(0, 1, 11))


@pytest.mark.parametrize("counts,expected", [
    ([50, 10, 3, 2, 1, 1, 2, 4, 9, 30], True),
    ([5, 10, 30, 50, 30, 10, 5, 0, 0, 0], False),
    ([40, 30, 20, 10, 5, 0, 0, 0, 0, 0], False),
    ([0, 0, 60, 5, 1, 0, 3, 25, 0, 0], True),
    ([0, 0, 0, 0, 9, 0, 0, 0, 0, 0], False),
])
def test_head_tail(counts, expected):
    assert is_head_tail(counts) is expected


def test_mean_pairwise():
    D = np.array([[0, 2, 4], [2, 0, 6], [4, 6, 0]])
    assert mean_pairwise(D) == pytest.approx(4.0)
    assert mean_pairwise(D, [0, 0, 1]) == pytest.approx(2.0)
    assert mean_pairwise(D, [0, 1, 2]) == 0.0


def test_csv_writers(tmp_path):
    counts, edges = activeness_histogram([0.1, 0.9])
    write_histogram_csv(tmp_path / "h.csv", counts, edges)
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "bin_low,bin_high,customers" and lines[2] == "0.1,0.2,1"
    write_distance_csv(tmp_path / "d.csv", hamming_matrix(np.array([[0, 1], [1, 1]])))
    assert (tmp_path / "d.csv").read_text().splitlines() == ["customer_id,0,1", "0,0,1", "1,1,0"]
